// Smallest end-to-end walk through the library: train a teacher on the
// synthetic task, distill a two-block student, and price its slot.
#include <iostream>

#include "semkd/channel.hpp"
#include "semkd/compute.hpp"
#include "semkd/harness.hpp"

int main() {
  using namespace semkd;

  ScenarioConfig cfg = default_scenario(/*num_devices=*/3);
  cfg.task.train_samples = 600;
  cfg.task.val_samples = 200;
  cfg.task.test_samples = 200;

  const std::uint64_t seed = 42;
  const SyntheticTask task = make_synthetic_task(cfg.task, seed);
  const TeacherTrainResult teacher = train_teacher(task, cfg, seed);
  std::cout << "teacher val accuracy: " << teacher.pair.final_val_accuracy
            << "\n";

  RngStream rng = RngStream::derive(seed, stream::kStudent, 0, 2);
  MicroNet student = build_student(teacher.pair.final_model, /*n_distilled=*/2, rng);
  const TrainResult trained = train_three_stage(
      std::move(student), teacher.pair, task.train, cfg.distill, rng);
  std::cout << "student (2 blocks) val accuracy: "
            << evaluate_accuracy(trained.net, task.val) << "\n";

  RngStream chan = RngStream::derive(seed, stream::kChannel, 0, 0);
  const ChannelDraw draw = sample_channel(cfg.devices[0], chan);
  const DeviceEval eval = evaluate_device(cfg, 0, trained.net, task.val, draw);
  std::cout << "slot cost: T=" << eval.total_time_s << " s, E="
            << eval.total_energy_j << " J, payload=" << eval.payload_bits
            << " bits (eta=" << eval.compression_ratio << ")\n";
  return 0;
}
