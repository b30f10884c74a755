#include <catch_amalgamated.hpp>

#include <filesystem>

#include "semkd/harness.hpp"

using namespace semkd;

namespace {

ScenarioConfig small_config() {
  ScenarioConfig cfg = default_scenario(3);
  cfg.task.input_dim = 8;
  cfg.task.classes = 4;
  cfg.task.train_samples = 180;
  cfg.task.val_samples = 80;
  cfg.task.test_samples = 40;
  cfg.task.cluster_spread = 0.3;
  cfg.teacher.width = 16;
  cfg.teacher.blocks = 2;
  cfg.teacher.max_epochs = 15;
  cfg.distill.stage_epochs = {2, 2, 3};
  cfg.distill.learning_rate = 0.05;
  cfg.distill.batch_size = 16;
  cfg.semex.feature_maps = 8;
  cfg.planner.max_iterations = 16;
  return cfg;
}

const std::vector<Method> kAllMethods{Method::NoKd, Method::StaticKd,
                                      Method::Proposed};

}  // namespace

TEST_CASE("teacher training snapshots the warmup and meets the floor") {
  const ScenarioConfig cfg = small_config();
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL, 4ULL, 5ULL}) {
    const SyntheticTask task = make_synthetic_task(cfg.task, seed);
    const TeacherTrainResult result = train_teacher(task, cfg, seed);
    REQUIRE(result.pair.final_val_accuracy >= cfg.omega_min);
    REQUIRE(result.pair.final_val_accuracy >= result.pair.init_val_accuracy);
    REQUIRE(result.trace.size() >= cfg.distill.warmup_epochs);
  }
}

TEST_CASE("default-scenario teachers clear 0.9 on five seeds") {
  const ScenarioConfig cfg = default_scenario();
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL, 4ULL, 5ULL}) {
    const SyntheticTask task = make_synthetic_task(cfg.task, seed);
    const TeacherTrainResult result = train_teacher(task, cfg, seed);
    REQUIRE(result.pair.final_val_accuracy >= 0.9);
    REQUIRE(result.pair.final_val_accuracy >= result.pair.init_val_accuracy);
  }
}

TEST_CASE("teacher training is reproducible per seed") {
  const ScenarioConfig cfg = small_config();
  const SyntheticTask task = make_synthetic_task(cfg.task, 6);
  const TeacherTrainResult a = train_teacher(task, cfg, 6);
  const TeacherTrainResult b = train_teacher(task, cfg, 6);
  REQUIRE(a.pair.final_model.theta == b.pair.final_model.theta);
  REQUIRE(a.pair.init_snapshot.theta == b.pair.init_snapshot.theta);
}

TEST_CASE("an unlearnable task reports the teacher below threshold") {
  ScenarioConfig cfg = small_config();
  cfg.task.cluster_spread = 50.0;  // classes fully overlap
  cfg.teacher.max_epochs = 4;
  const SyntheticTask task = make_synthetic_task(cfg.task, 7);
  REQUIRE_THROWS_AS(train_teacher(task, cfg, 7), TeacherBelowThreshold);
}

TEST_CASE("no-distillation baseline uses the full architecture everywhere") {
  const ScenarioConfig cfg = small_config();
  const std::uint64_t seed = 11;
  const SyntheticTask task = make_synthetic_task(cfg.task, seed);
  const std::vector<LabeledSet> shards =
      make_shards(task.train, cfg.num_devices, seed);
  const std::vector<ReportRow> rows =
      run_baseline_no_kd(cfg, task, shards, seed);
  REQUIRE(rows.size() == cfg.num_devices);
  const Architecture full{cfg.task.input_dim, cfg.teacher.width,
                          cfg.teacher.blocks, cfg.task.classes};
  for (const ReportRow& r : rows) {
    REQUIRE(r.method == Method::NoKd);
    REQUIRE(r.n_distilled == cfg.teacher.blocks);
    REQUIRE(r.flops == model_complexity(full));
  }
}

TEST_CASE("static distillation gives every device the same depth") {
  const ScenarioConfig cfg = small_config();
  const std::uint64_t seed = 12;
  const SyntheticTask task = make_synthetic_task(cfg.task, seed);
  const std::vector<LabeledSet> shards =
      make_shards(task.train, cfg.num_devices, seed);
  const TeacherTrainResult teacher = train_teacher(task, cfg, seed);
  PlannerContext ctx(cfg, teacher.pair, task.val, shards, seed);
  const std::vector<ReportRow> rows = run_baseline_static_kd(cfg, ctx);
  REQUIRE(rows.size() == cfg.num_devices);
  const Architecture full{cfg.task.input_dim, cfg.teacher.width,
                          cfg.teacher.blocks, cfg.task.classes};
  for (const ReportRow& r : rows) {
    REQUIRE(r.method == Method::StaticKd);
    REQUIRE(r.n_distilled == cfg.teacher.blocks);
    REQUIRE(r.flops == model_complexity(full));  // same architecture as no_kd
  }
}

TEST_CASE("normalization divides by the no-distillation row per device") {
  std::vector<ReportRow> rows;
  ReportRow base;
  base.method = Method::NoKd;
  base.device = 0;
  base.compute_time_s = 0.2;
  base.comm_energy_j = 0.05;
  rows.push_back(base);
  ReportRow other = base;
  other.method = Method::Proposed;
  other.compute_time_s = 0.1;
  other.comm_energy_j = 0.04;
  rows.push_back(other);
  normalize_rows(rows);
  REQUIRE(rows[0].norm_compute_time == 1.0);
  REQUIRE(rows[0].norm_transmit_energy == 1.0);
  REQUIRE(rows[1].norm_compute_time == 0.5);
  REQUIRE_THAT(rows[1].norm_transmit_energy,
               Catch::Matchers::WithinRel(0.8, 1e-12));
}

TEST_CASE("method parsing accepts subsets and rejects unknown names") {
  REQUIRE(parse_methods("proposed") == std::vector<Method>{Method::Proposed});
  REQUIRE(parse_methods("no_kd,static_kd,proposed") == kAllMethods);
  REQUIRE_THROWS_AS(parse_methods("banana"), std::invalid_argument);
  REQUIRE_THROWS_AS(parse_methods(""), std::invalid_argument);
}

TEST_CASE("a full experiment produces ordered rows and stable aggregates") {
  const ScenarioConfig cfg = small_config();
  const ExperimentArtifacts artifacts = run_experiment(cfg, 31, kAllMethods);
  const ExperimentReport& report = artifacts.report;

  REQUIRE(report.rows.size() == 3 * cfg.num_devices);
  // canonical order: no_kd rows, then static_kd, then proposed, device-sorted
  for (std::size_t i = 0; i < cfg.num_devices; ++i) {
    REQUIRE(report.rows[i].method == Method::NoKd);
    REQUIRE(report.rows[i].device == i);
    REQUIRE(report.rows[cfg.num_devices + i].method == Method::StaticKd);
    REQUIRE(report.rows[2 * cfg.num_devices + i].method == Method::Proposed);
  }
  for (const ReportRow& r : report.rows) {
    if (r.method == Method::NoKd) {
      REQUIRE(r.norm_compute_time == 1.0);
      REQUIRE(r.norm_transmit_energy == 1.0);
    }
    REQUIRE(std::isfinite(r.omega));
  }
  REQUIRE(report.aggregates.size() == 3);
  REQUIRE(std::isfinite(report.aggregates[1].objective));
  REQUIRE(report.teacher_omega >= cfg.omega_min);
}

TEST_CASE("identical runs render byte-identical reports") {
  const ScenarioConfig cfg = small_config();
  const ExperimentArtifacts a = run_experiment(cfg, 17, kAllMethods);
  const ExperimentArtifacts b = run_experiment(cfg, 17, kAllMethods);
  REQUIRE(render_report_csv(a.report) == render_report_csv(b.report));
  REQUIRE(render_plot_csv(a.report) == render_plot_csv(b.report));
  REQUIRE(render_losses_csv(a.losses) == render_losses_csv(b.losses));
  REQUIRE(render_plan_trace_csv(a.plan_trace) ==
          render_plan_trace_csv(b.plan_trace));

  const ExperimentArtifacts c = run_experiment(cfg, 18, kAllMethods);
  REQUIRE(render_report_csv(a.report) != render_report_csv(c.report));
}

TEST_CASE("report csv carries the exact documented header") {
  const ScenarioConfig cfg = small_config();
  const ExperimentArtifacts artifacts =
      run_experiment(cfg, 5, {Method::NoKd});
  const std::string csv = render_report_csv(artifacts.report);
  REQUIRE_THAT(csv, Catch::Matchers::ContainsSubstring(
                        "method,device,n_distilled,omega,flops,eta,"
                        "payload_bits,comm_time_s,compute_time_s,comm_energy_j,"
                        "compute_energy_j,total_time_s,total_energy_j,feasible,"
                        "norm_compute_time,norm_transmit_energy"));
  // a no_kd-only run has no teacher and no planner trace
  REQUIRE(!artifacts.teachers.has_value());
  REQUIRE(!artifacts.final_plan.has_value());
}

TEST_CASE("output files land in the requested directory") {
  namespace fs = std::filesystem;
  const ScenarioConfig cfg = small_config();
  const ExperimentArtifacts artifacts = run_experiment(cfg, 3, kAllMethods);
  const std::string dir = "harness_test_out";
  const std::vector<std::string> files = write_outputs(artifacts, dir);
  REQUIRE(files.size() == 6);  // report, plot, losses, trace, 2 checkpoints
  for (const std::string& f : files) REQUIRE(fs::exists(f));
  fs::remove_all(dir);
}
