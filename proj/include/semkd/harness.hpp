#pragma once

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "semkd/planner.hpp"
#include "semkd/report.hpp"

namespace semkd {

// Experiment orchestration: teacher training, the two baselines, report
// assembly and file emission.

enum class LogLevel { Quiet = 0, Info = 1, Debug = 2 };

inline LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("SEMKD_LOG");
    if (!env) return LogLevel::Info;
    const std::string v(env);
    if (v == "quiet" || v == "0") return LogLevel::Quiet;
    if (v == "debug" || v == "2") return LogLevel::Debug;
    return LogLevel::Info;
  }();
  return level;
}

inline void log_info(const std::string& msg) {
  if (log_level() >= LogLevel::Info) std::cerr << "[semkd] " << msg << "\n";
}

inline void log_debug(const std::string& msg) {
  if (log_level() >= LogLevel::Debug) std::cerr << "[semkd] " << msg << "\n";
}

struct TeacherBelowThreshold : std::runtime_error {
  double measured_omega;
  explicit TeacherBelowThreshold(double omega)
      : std::runtime_error(
            "teacher validation accuracy " + std::to_string(omega) +
            " below the configured accuracy floor; scenario infeasible"),
        measured_omega(omega) {}
};

struct TeacherTrainResult {
  TeacherPair pair;
  std::vector<EpochLoss> trace;  // stage 0 = plain cross-entropy epochs
};

namespace detail {

inline double train_one_ce_epoch(MicroNet& net, const LabeledSet& data,
                                 double lr, std::size_t batch_size,
                                 std::vector<std::size_t>& order,
                                 RngStream& rng) {
  rng.shuffle(order);
  double epoch_loss = 0.0;
  std::size_t batches = 0;
  for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
    const std::size_t end = std::min(begin + batch_size, order.size());
    Matrix x = gather_rows(data.inputs, order, begin, end);
    std::vector<int> y(end - begin);
    for (std::size_t i = begin; i < end; ++i) y[i - begin] = data.labels[order[i]];
    ForwardTrace trace = forward(net, x);
    LossGrad lg = cross_entropy(trace.logits, y);
    std::vector<double> grad = backward(net, x, trace, lg.dlogits);
    sgd_step(net.theta, grad, lr);
    epoch_loss += lg.loss;
    ++batches;
  }
  return epoch_loss / static_cast<double>(batches);
}

}  // namespace detail

// Trains the full-size teacher by cross-entropy until the validation
// accuracy plateaus (or the epoch cap), snapshotting the early baseline
// after the warmup epochs. The returned final model is the best validation
// checkpoint seen from the snapshot onward, so it never trails the snapshot.
inline TeacherTrainResult train_teacher(const SyntheticTask& task,
                                        const ScenarioConfig& cfg,
                                        std::uint64_t seed) {
  const Architecture arch{cfg.task.input_dim, cfg.teacher.width,
                          cfg.teacher.blocks, cfg.task.classes};
  RngStream rng = RngStream::derive(seed, stream::kTeacher);
  MicroNet net = make_micronet(arch, rng);

  TeacherTrainResult result;
  std::vector<std::size_t> order(task.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::optional<MicroNet> snapshot;
  std::optional<MicroNet> best;
  double best_acc = -1.0;
  std::size_t epochs_since_best = 0;

  for (std::size_t epoch = 0; epoch < cfg.teacher.max_epochs; ++epoch) {
    const double loss = detail::train_one_ce_epoch(
        net, task.train, cfg.distill.learning_rate, cfg.distill.batch_size,
        order, rng);
    result.trace.push_back({0, epoch, loss, 0.0});
    const double val_acc = evaluate_accuracy(net, task.val);
    log_debug("teacher epoch " + std::to_string(epoch) + " loss " +
              std::to_string(loss) + " val " + std::to_string(val_acc));
    if (epoch + 1 == cfg.distill.warmup_epochs) {
      snapshot = net;
      best = net;
      best_acc = val_acc;
      epochs_since_best = 0;
      continue;
    }
    if (epoch + 1 > cfg.distill.warmup_epochs) {
      if (val_acc > best_acc) {
        best = net;
        best_acc = val_acc;
        epochs_since_best = 0;
      } else if (++epochs_since_best >= cfg.teacher.plateau_epochs) {
        break;
      }
    }
  }
  if (!snapshot || !best)
    throw std::logic_error("train_teacher: warmup longer than training run");

  result.pair = make_teacher_pair(std::move(*snapshot), std::move(*best), task.val);
  if (result.pair.final_val_accuracy < cfg.omega_min)
    throw TeacherBelowThreshold(result.pair.final_val_accuracy);
  log_info("teacher trained: val accuracy " +
           std::to_string(result.pair.final_val_accuracy) + " (warmup snapshot " +
           std::to_string(result.pair.init_val_accuracy) + ")");
  return result;
}

struct LossRow {
  std::string method;
  long device = -1;  // -1 = teacher
  std::size_t n_distilled = 0;
  int stage = 0;
  std::size_t epoch = 0;
  double loss = 0.0;
};

struct ExperimentArtifacts {
  ExperimentReport report;
  std::vector<PlanTraceRow> plan_trace;
  std::vector<LossRow> losses;
  std::optional<TeacherPair> teachers;
  std::optional<PlanState> final_plan;
};

namespace detail {

inline ReportRow make_row(Method method, std::size_t device, std::size_t n,
                          const DeviceEval& eval, const ScenarioConfig& cfg) {
  ReportRow row;
  row.method = method;
  row.device = device;
  row.n_distilled = n;
  row.omega = eval.omega;
  row.flops = eval.compute.flops;
  row.eta = eval.compression_ratio;
  row.payload_bits = eval.payload_bits;
  row.comm_time_s = eval.comm_time_s;
  row.compute_time_s = eval.compute.total_s;
  row.comm_energy_j = eval.comm_energy_j;
  row.compute_energy_j = eval.compute.energy_j;
  row.total_time_s = eval.total_time_s;
  row.total_energy_j = eval.total_energy_j;
  row.feasible = is_feasible(eval, cfg.devices[device], cfg.omega_min);
  return row;
}

inline void append_trace(std::vector<LossRow>& out, const std::string& method,
                         long device, std::size_t n,
                         const std::vector<EpochLoss>& trace) {
  for (const EpochLoss& e : trace)
    out.push_back({method, device, n, e.stage, e.epoch, e.loss});
}

}  // namespace detail

// Baseline: every device trains the full-size architecture from scratch on
// its local shard by cross-entropy, with the same total epoch budget the
// distilled students get. No teacher involved.
inline std::vector<ReportRow> run_baseline_no_kd(
    const ScenarioConfig& cfg, const SyntheticTask& task,
    const std::vector<LabeledSet>& shards, std::uint64_t seed,
    std::vector<LossRow>* losses = nullptr) {
  const Architecture arch{cfg.task.input_dim, cfg.teacher.width,
                          cfg.teacher.blocks, cfg.task.classes};
  const std::size_t epochs = cfg.distill.stage_epochs[0] +
                             cfg.distill.stage_epochs[1] +
                             cfg.distill.stage_epochs[2];
  std::vector<ReportRow> rows;
  for (std::size_t u = 0; u < cfg.num_devices; ++u) {
    RngStream init_rng = RngStream::derive(seed, stream::kLocalInit, u);
    MicroNet net = make_micronet(arch, init_rng);
    RngStream train_rng = RngStream::derive(seed, stream::kLocalTrain, u);
    std::vector<std::size_t> order(shards[u].size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::vector<EpochLoss> trace;
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
      const double loss = detail::train_one_ce_epoch(
          net, shards[u], cfg.distill.learning_rate, cfg.distill.batch_size,
          order, train_rng);
      trace.push_back({0, epoch, loss, 0.0});
    }
    RngStream chan = RngStream::derive(seed, stream::kChannel, u, /*slot=*/0);
    const ChannelDraw draw = sample_channel(cfg.devices[u], chan);
    const DeviceEval eval = evaluate_device(cfg, u, net, task.val, draw);
    rows.push_back(detail::make_row(Method::NoKd, u, cfg.teacher.blocks, eval, cfg));
    if (losses) detail::append_trace(*losses, "no_kd", static_cast<long>(u),
                                     cfg.teacher.blocks, trace);
  }
  return rows;
}

// Baseline: every device inherits the same fixed number of distilled blocks
// (the full teacher depth) and runs the three-stage procedure; no planner.
inline std::vector<ReportRow> run_baseline_static_kd(
    const ScenarioConfig& cfg, PlannerContext& ctx,
    std::vector<LossRow>* losses = nullptr) {
  std::vector<ReportRow> rows;
  for (std::size_t u = 0; u < cfg.num_devices; ++u) {
    const PlannerContext::Entry& entry = ctx.student_at(u, cfg.teacher.blocks);
    rows.push_back(
        detail::make_row(Method::StaticKd, u, cfg.teacher.blocks, entry.eval, cfg));
    if (losses) detail::append_trace(*losses, "static_kd", static_cast<long>(u),
                                     cfg.teacher.blocks, entry.trace);
  }
  return rows;
}

inline std::vector<ReportRow> run_proposed(
    const ScenarioConfig& cfg, PlannerContext& ctx, ExperimentArtifacts& out) {
  PlanResult result = run_planner(ctx);
  std::vector<ReportRow> rows;
  for (std::size_t u = 0; u < cfg.num_devices; ++u) {
    const DeviceState& dev = result.state.devices[u];
    rows.push_back(
        detail::make_row(Method::Proposed, u, dev.n_distilled, dev.eval, cfg));
    detail::append_trace(out.losses, "proposed", static_cast<long>(u),
                         dev.n_distilled, dev.train_trace);
  }
  out.plan_trace = std::move(result.trace);
  out.final_plan = std::move(result.state);
  log_info("planner finished after " +
           std::to_string(out.final_plan->iteration) + " iterations (" +
           (out.final_plan->converged ? "converged" : "iteration cap") + ")");
  return rows;
}

inline std::vector<Method> parse_methods(const std::string& csv) {
  std::vector<Method> methods;
  std::size_t start = 0;
  while (start <= csv.size()) {
    const std::size_t comma = csv.find(',', start);
    const std::string name = csv.substr(
        start, comma == std::string::npos ? std::string::npos : comma - start);
    if (!name.empty()) methods.push_back(method_from_name(name));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (methods.empty()) throw std::invalid_argument("no methods requested");
  return methods;
}

// Full experiment for one (scenario, seed): generates the task, trains what
// the requested methods need, and assembles the normalized report. Rows are
// ordered by (method, device) regardless of execution order.
inline ExperimentArtifacts run_experiment(ScenarioConfig cfg,
                                          std::uint64_t seed,
                                          std::vector<Method> methods) {
  cfg.seed = seed;
  ExperimentArtifacts artifacts;
  artifacts.report.seed = seed;
  artifacts.report.config_hash = config_hash(cfg);
  artifacts.report.total_bandwidth_hz = cfg.total_bandwidth_hz;
  artifacts.report.bandwidth_share_hz = bandwidth_share(cfg);

  // Equal split always respects the bandwidth cap; assert it in every report.
  const double share_sum =
      bandwidth_share(cfg) * static_cast<double>(cfg.num_devices);
  if (std::fabs(share_sum - cfg.total_bandwidth_hz) >
      1e-9 * cfg.total_bandwidth_hz)
    throw std::logic_error("bandwidth shares do not add up to the total");

  const SyntheticTask task = make_synthetic_task(cfg.task, seed);
  const std::vector<LabeledSet> shards =
      make_shards(task.train, cfg.num_devices, seed);

  auto wants = [&](Method m) {
    for (Method x : methods)
      if (x == m) return true;
    return false;
  };

  std::optional<TeacherTrainResult> teacher;
  std::optional<PlannerContext> ctx;
  if (wants(Method::StaticKd) || wants(Method::Proposed)) {
    teacher = train_teacher(task, cfg, seed);
    artifacts.report.teacher_omega = teacher->pair.final_val_accuracy;
    detail::append_trace(artifacts.losses, "teacher", -1, cfg.teacher.blocks,
                         teacher->trace);
    artifacts.teachers = teacher->pair;
    ctx.emplace(cfg, *artifacts.teachers, task.val, shards, seed);
  }

  // Canonical method order keeps the output stable however it was requested.
  if (wants(Method::NoKd)) {
    log_info("running baseline no_kd");
    auto rows = run_baseline_no_kd(cfg, task, shards, seed, &artifacts.losses);
    artifacts.report.rows.insert(artifacts.report.rows.end(), rows.begin(),
                                 rows.end());
  }
  if (wants(Method::StaticKd)) {
    log_info("running baseline static_kd");
    auto rows = run_baseline_static_kd(cfg, *ctx, &artifacts.losses);
    artifacts.report.rows.insert(artifacts.report.rows.end(), rows.begin(),
                                 rows.end());
  }
  if (wants(Method::Proposed)) {
    log_info("running proposed planner");
    auto rows = run_proposed(cfg, *ctx, artifacts);
    artifacts.report.rows.insert(artifacts.report.rows.end(), rows.begin(),
                                 rows.end());
  }

  normalize_rows(artifacts.report.rows);

  for (Method m : {Method::NoKd, Method::StaticKd, Method::Proposed}) {
    if (!wants(m)) continue;
    MethodAggregate agg;
    agg.method = m;
    std::size_t count = 0;
    std::vector<double> omegas;
    for (const ReportRow& r : artifacts.report.rows) {
      if (r.method != m) continue;
      ++count;
      omegas.push_back(r.omega);
      agg.mean_omega += r.omega;
      agg.mean_flops += r.flops;
      agg.mean_norm_compute_time += r.norm_compute_time;
      agg.mean_norm_transmit_energy += r.norm_transmit_energy;
    }
    const double n = static_cast<double>(count);
    agg.mean_omega /= n;
    agg.mean_flops /= n;
    agg.mean_norm_compute_time /= n;
    agg.mean_norm_transmit_energy /= n;
    if (artifacts.teachers)
      agg.objective = objective(omegas, artifacts.teachers->final_val_accuracy,
                                cfg.weights, cfg.lambda);
    artifacts.report.aggregates.push_back(agg);
  }
  return artifacts;
}

inline std::string render_losses_csv(const std::vector<LossRow>& rows) {
  std::string out = "# semkd losses schema v1 generator v";
  out += kVersion;
  out += "\nmethod,device,n_distilled,stage,epoch,loss\n";
  for (const LossRow& r : rows) {
    out += r.method + "," + std::to_string(r.device) + "," +
           std::to_string(r.n_distilled) + "," + std::to_string(r.stage) +
           "," + std::to_string(r.epoch) + "," + detail::fmt(r.loss) + "\n";
  }
  return out;
}

inline std::string render_plan_trace_csv(const std::vector<PlanTraceRow>& rows) {
  std::string out = "# semkd planner-trace schema v1 generator v";
  out += kVersion;
  out += "\niteration,device,n_before,n_after,omega,total_time_s,total_energy_j,rule\n";
  for (const PlanTraceRow& r : rows) {
    out += std::to_string(r.iteration) + "," + std::to_string(r.device) + "," +
           std::to_string(r.n_before) + "," + std::to_string(r.n_after) + "," +
           detail::fmt(r.omega) + "," + detail::fmt(r.total_time_s) + "," +
           detail::fmt(r.total_energy_j) + "," + rule_name(r.rule) + "\n";
  }
  return out;
}

// Writes every output file for one experiment. On any failure the files
// written so far are removed so a crashed run leaves no partial outputs.
inline std::vector<std::string> write_outputs(const ExperimentArtifacts& artifacts,
                                              const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::vector<std::string> written;
  try {
    fs::create_directories(out_dir);
    auto emit = [&](const std::string& name, const std::string& text) {
      const std::string path = (fs::path(out_dir) / name).string();
      write_text_file(path, text);
      written.push_back(path);
    };
    emit("report.csv", render_report_csv(artifacts.report));
    emit("plot_data.csv", render_plot_csv(artifacts.report));
    emit("losses.csv", render_losses_csv(artifacts.losses));
    if (artifacts.final_plan)
      emit("planner_trace.csv", render_plan_trace_csv(artifacts.plan_trace));
    if (artifacts.teachers) {
      const std::string t_path = (fs::path(out_dir) / "teacher.smknet").string();
      save_net(artifacts.teachers->final_model, t_path);
      written.push_back(t_path);
      const std::string i_path =
          (fs::path(out_dir) / "teacher_init.smknet").string();
      save_net(artifacts.teachers->init_snapshot, i_path);
      written.push_back(i_path);
    }
  } catch (...) {
    for (const std::string& p : written) {
      std::error_code ec;
      fs::remove(p, ec);
    }
    throw;
  }
  return written;
}

}  // namespace semkd
