#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "semkd/channel.hpp"
#include "semkd/compute.hpp"
#include "semkd/distill.hpp"
#include "semkd/nn.hpp"
#include "semkd/scenario.hpp"
#include "semkd/semex.hpp"

namespace semkd {

// Iterative per-device selection of the number of distilled blocks under the
// accuracy, deadline and energy constraints, plus the objective evaluation.

inline double objective(const std::vector<double>& omegas, double omega_teacher,
                        const std::vector<double>& weights, double lambda) {
  if (omegas.size() != weights.size())
    throw std::invalid_argument("objective: weight/accuracy length mismatch");
  double sum = 0.0;
  for (std::size_t u = 0; u < omegas.size(); ++u)
    sum += weights[u] * omegas[u];
  return sum + lambda * omega_teacher;
}

struct DeviceEval {
  double omega = 0.0;         // accuracy on the validation split
  double comm_time_s = 0.0;   // +inf when the rate is zero (infeasible slot)
  double comm_energy_j = 0.0;
  ComputeCost compute;
  double total_time_s = 0.0;    // T_u
  double total_energy_j = 0.0;  // E_u
  double compression_ratio = 0.0;  // eta_t^u
  double payload_bits = 0.0;       // compressed payload driving comm_time
  ChannelDraw channel;
  double rate_bps = 0.0;
};

inline bool within_budgets(const DeviceEval& eval, const DeviceProfile& profile) {
  return eval.total_time_s <= profile.deadline_s &&
         eval.total_energy_j <= profile.energy_budget_j;
}

inline bool is_feasible(const DeviceEval& eval, const DeviceProfile& profile,
                        double omega_min) {
  return within_budgets(eval, profile) && eval.omega >= omega_min;
}

// One transmitted sample's feature-map stack: the feature vector dealt into
// `k_maps` contiguous groups, scaled by the strongest map mean so importance
// weights land in [0,1] and the threshold in [0,1) bites at any activation
// scale.
inline FeatureMapStack sample_stack(const double* features, std::size_t width,
                                    std::size_t k_maps, int class_context) {
  const std::size_t map_len = width / k_maps;
  FeatureMapStack stack;
  stack.class_context = class_context;
  stack.maps.reserve(k_maps);
  double peak = 0.0;
  for (std::size_t k = 0; k < k_maps; ++k) {
    Matrix m(1, map_len);
    double sum = 0.0;
    for (std::size_t i = 0; i < map_len; ++i) {
      m.a[i] = features[k * map_len + i];
      sum += m.a[i];
    }
    peak = std::max(peak, std::fabs(sum) / static_cast<double>(map_len));
    stack.maps.push_back(std::move(m));
  }
  if (peak > 0.0)
    for (Matrix& m : stack.maps)
      for (double& v : m.a) v /= peak;
  return stack;
}

struct CompressionStats {
  double mean_ratio = 0.0;     // eta_t^u averaged over transmitted samples
  double mean_payload_bits = 0.0;
};

// Per-sample compression over an evaluation batch: each sample's own stack
// is thresholded (the upload happens per captured image), and the device's
// slot payload is the average compressed size. With gradient weighting the
// importance of a map is the pooled class-logit gradient (the head row of
// the sample's label) instead of the pooled activation.
inline CompressionStats compression_stats(const MicroNet& net,
                                          const ForwardTrace& trace,
                                          const LabeledSet& set,
                                          std::size_t k_maps, double eta,
                                          bool gradient_weighted,
                                          double nominal_payload_bits) {
  const std::size_t width = net.arch.width;
  if (k_maps == 0 || width % k_maps != 0)
    throw std::invalid_argument("compression_stats: k_maps must divide width");
  if (set.size() == 0)
    throw std::invalid_argument("compression_stats: empty evaluation set");
  const std::size_t map_len = width / k_maps;
  const Matrix& features = trace.features();

  CompressionStats stats;
  for (std::size_t r = 0; r < features.rows; ++r) {
    const int label = set.labels[r];
    const FeatureMapStack stack =
        sample_stack(features.row(r), width, k_maps, label);
    CompressedSemantics cs;
    if (!gradient_weighted) {
      cs = compress(stack, eta, nominal_payload_bits);
    } else {
      const double* head_row = net.theta.data() + net.arch.head_offset() +
                               static_cast<std::size_t>(label) * width;
      std::vector<double> weights(k_maps);
      double peak = 0.0;
      for (std::size_t k = 0; k < k_maps; ++k) {
        double sum = 0.0;
        for (std::size_t i = 0; i < map_len; ++i)
          sum += head_row[k * map_len + i];
        weights[k] = sum / static_cast<double>(map_len);
        peak = std::max(peak, std::fabs(weights[k]));
      }
      if (peak > 0.0)
        for (double& w : weights) w /= peak;
      cs = compress(stack, weights, eta, nominal_payload_bits);
    }
    stats.mean_ratio += cs.ratio;
  }
  stats.mean_ratio /= static_cast<double>(features.rows);
  stats.mean_payload_bits = (1.0 - stats.mean_ratio) * nominal_payload_bits;
  return stats;
}

inline DeviceEval evaluate_device(const ScenarioConfig& cfg, std::size_t device,
                                  const MicroNet& student,
                                  const LabeledSet& val,
                                  const ChannelDraw& draw) {
  const DeviceProfile& profile = cfg.devices.at(device);
  DeviceEval eval;
  eval.channel = draw;

  const ForwardTrace trace = forward(student, val.inputs);
  std::size_t hits = 0;
  for (std::size_t r = 0; r < trace.logits.rows; ++r)
    if (argmax_row(trace.logits.row(r), trace.logits.cols) == val.labels[r])
      ++hits;
  eval.omega = static_cast<double>(hits) / static_cast<double>(val.size());

  const CompressionStats cs = compression_stats(
      student, trace, val, cfg.semex.feature_maps, cfg.semex.threshold,
      cfg.semex.gradient_weighted, profile.payload_bits);
  eval.compression_ratio = cs.mean_ratio;
  eval.payload_bits = cs.mean_payload_bits;

  eval.rate_bps = transmission_rate(bandwidth_share(cfg),
                                    profile.transmit_power_w, draw.gain,
                                    cfg.noise_power_w);
  if (eval.rate_bps > 0.0) {
    eval.comm_time_s = comm_time(eval.payload_bits, eval.rate_bps);
    eval.comm_energy_j = comm_energy(eval.comm_time_s, profile.transmit_power_w);
  } else if (eval.payload_bits == 0.0) {
    eval.comm_time_s = 0.0;
    eval.comm_energy_j = 0.0;
  } else {
    // Zero rate: the slot cannot carry the payload; surfaces as a deadline
    // violation rather than an error.
    eval.comm_time_s = std::numeric_limits<double>::infinity();
    eval.comm_energy_j = std::numeric_limits<double>::infinity();
  }

  eval.compute = compute_cost(profile, student, cfg.extraction_cost);
  eval.total_time_s = eval.comm_time_s + eval.compute.total_s;
  eval.total_energy_j = eval.comm_energy_j + eval.compute.energy_j;
  return eval;
}

// --- Adjustment rules -------------------------------------------------------

enum class Rule {
  None,
  IncreaseForAccuracy,   // within budgets, below accuracy floor, room to grow
  DecreaseForEfficiency, // within budgets, at/above floor, can shrink
  DecreaseForBudget,     // deadline or energy budget violated
  Freeze,                // oscillation guard pinned the device
};

inline const char* rule_name(Rule r) {
  switch (r) {
    case Rule::None: return "none";
    case Rule::IncreaseForAccuracy: return "increase_accuracy";
    case Rule::DecreaseForEfficiency: return "decrease_efficiency";
    case Rule::DecreaseForBudget: return "decrease_budget";
    case Rule::Freeze: return "freeze";
  }
  return "?";
}

struct Adjustment {
  int direction = 0;  // +1, -1 or 0
  Rule rule = Rule::None;
};

// The per-device decision, straight off the iteration rules: budget
// violations shrink the model when possible; otherwise accuracy below the
// floor grows it and accuracy at/above the floor shrinks it.
inline Adjustment decide_adjustment(double omega, double total_time_s,
                                    double total_energy_j, std::size_t n_distilled,
                                    std::size_t n_blocks,
                                    const DeviceProfile& profile,
                                    double omega_min) {
  const bool within = total_time_s <= profile.deadline_s &&
                      total_energy_j <= profile.energy_budget_j;
  if (within) {
    if (omega < omega_min && n_distilled < n_blocks)
      return {+1, Rule::IncreaseForAccuracy};
    if (omega >= omega_min && n_distilled > 1)
      return {-1, Rule::DecreaseForEfficiency};
  } else if (n_distilled > 1) {
    return {-1, Rule::DecreaseForBudget};
  }
  return {0, Rule::None};
}

// --- Planner state ----------------------------------------------------------

struct DeviceState {
  std::size_t n_distilled = 0;
  MicroNet student;
  std::vector<EpochLoss> train_trace;
  DeviceEval eval;
  bool feasible = false;
  bool frozen = false;
  int last_direction = 0;

  bool operator==(const DeviceState& o) const {
    return n_distilled == o.n_distilled && student == o.student &&
           feasible == o.feasible && frozen == o.frozen &&
           last_direction == o.last_direction;
  }
};

struct PlanState {
  std::vector<DeviceState> devices;
  std::size_t iteration = 0;
  std::vector<std::size_t> prev_n_distilled;
  bool converged = false;

  bool operator==(const PlanState&) const = default;
};

struct PlanTraceRow {
  std::size_t iteration = 0;
  std::size_t device = 0;
  std::size_t n_before = 0;
  std::size_t n_after = 0;
  double omega = 0.0;
  double total_time_s = 0.0;
  double total_energy_j = 0.0;
  Rule rule = Rule::None;
};

// Trains and evaluates students on demand; one entry per (device, n), so a
// revisit is free and the result never depends on the order the planner
// explored sizes in.
class PlannerContext {
 public:
  PlannerContext(const ScenarioConfig& cfg, const TeacherPair& teachers,
                 const LabeledSet& val, std::vector<LabeledSet> shards,
                 std::uint64_t run_seed)
      : cfg_(cfg), teachers_(teachers), val_(val), shards_(std::move(shards)),
        seed_(run_seed) {
    if (shards_.size() != cfg.num_devices)
      throw std::invalid_argument("PlannerContext: one shard per device");
    draws_.reserve(cfg.num_devices);
    for (std::size_t u = 0; u < cfg.num_devices; ++u) {
      RngStream rng = RngStream::derive(seed_, stream::kChannel, u, /*slot=*/0);
      draws_.push_back(sample_channel(cfg.devices[u], rng));
    }
  }

  const ScenarioConfig& config() const { return cfg_; }
  const TeacherPair& teachers() const { return teachers_; }
  const LabeledSet& val() const { return val_; }
  const ChannelDraw& draw(std::size_t device) const { return draws_[device]; }

  struct Entry {
    MicroNet student;
    std::vector<EpochLoss> trace;
    DeviceEval eval;
  };

  const Entry& student_at(std::size_t device, std::size_t n) {
    const auto key = std::make_pair(device, n);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    RngStream rng = RngStream::derive(seed_, stream::kStudent, device, n);
    MicroNet fresh = build_student(teachers_.final_model, n, rng,
                                   cfg_.distill.head_init_scale);
    TrainResult result = train_three_stage(std::move(fresh), teachers_,
                                           shards_[device], cfg_.distill, rng);
    Entry entry;
    entry.eval = evaluate_device(cfg_, device, result.net, val_, draws_[device]);
    entry.student = std::move(result.net);
    entry.trace = std::move(result.trace);
    return cache_.emplace(key, std::move(entry)).first->second;
  }

 private:
  const ScenarioConfig& cfg_;
  const TeacherPair& teachers_;
  const LabeledSet& val_;
  std::vector<LabeledSet> shards_;
  std::uint64_t seed_;
  std::vector<ChannelDraw> draws_;
  std::map<std::pair<std::size_t, std::size_t>, Entry> cache_;
};

namespace detail {

inline void load_device(DeviceState& dev, const PlannerContext::Entry& entry,
                        const ScenarioConfig& cfg, std::size_t u,
                        std::size_t n) {
  dev.n_distilled = n;
  dev.student = entry.student;
  dev.train_trace = entry.trace;
  dev.eval = entry.eval;
  dev.feasible = is_feasible(entry.eval, cfg.devices[u], cfg.omega_min);
}

}  // namespace detail

inline PlanState init_plan(PlannerContext& ctx) {
  const ScenarioConfig& cfg = ctx.config();
  PlanState state;
  state.devices.resize(cfg.num_devices);
  state.prev_n_distilled.assign(cfg.num_devices, cfg.teacher.blocks);
  for (std::size_t u = 0; u < cfg.num_devices; ++u)
    detail::load_device(state.devices[u], ctx.student_at(u, cfg.teacher.blocks),
                        cfg, u, cfg.teacher.blocks);
  return state;
}

inline double plan_objective(const PlanState& state, const PlannerContext& ctx) {
  std::vector<double> omegas;
  omegas.reserve(state.devices.size());
  for (const DeviceState& d : state.devices) omegas.push_back(d.eval.omega);
  return objective(omegas, ctx.teachers().final_val_accuracy,
                   ctx.config().weights, ctx.config().lambda);
}

// One planner iteration. Devices are scanned in index order; the first rule
// that actually changes a block count is applied and (under the single-user
// policy) the scan stops. A device whose adjustment would undo its previous
// one is frozen at the larger of the two sizes that fits its budgets. The
// state is a fixed point once `converged` is set.
inline PlanState plan_step(PlanState state, PlannerContext& ctx,
                           std::vector<PlanTraceRow>* trace = nullptr) {
  if (state.converged) return state;
  const ScenarioConfig& cfg = ctx.config();
  for (std::size_t u = 0; u < state.devices.size(); ++u)
    state.prev_n_distilled[u] = state.devices[u].n_distilled;
  state.iteration += 1;

  bool adjusted = false;
  for (std::size_t u = 0; u < state.devices.size(); ++u) {
    DeviceState& dev = state.devices[u];
    if (dev.frozen) continue;
    const Adjustment adj = decide_adjustment(
        dev.eval.omega, dev.eval.total_time_s, dev.eval.total_energy_j,
        dev.n_distilled, cfg.teacher.blocks, cfg.devices[u], cfg.omega_min);
    if (adj.direction == 0) continue;

    const std::size_t n_before = dev.n_distilled;
    std::size_t n_after = n_before;
    Rule fired = adj.rule;

    const std::size_t n_proposed =
        adj.direction > 0 ? n_before + 1 : n_before - 1;
    if (dev.last_direction != 0 && adj.direction == -dev.last_direction) {
      // Oscillation guard: pin at the larger candidate that fits budgets.
      const std::size_t hi = std::max(n_before, n_proposed);
      const std::size_t lo = std::min(n_before, n_proposed);
      const PlannerContext::Entry& hi_entry = ctx.student_at(u, hi);
      n_after = within_budgets(hi_entry.eval, cfg.devices[u]) ? hi : lo;
      dev.frozen = true;
      fired = Rule::Freeze;
      if (n_after == n_before) {
        if (trace)
          trace->push_back({state.iteration, u, n_before, n_after,
                            dev.eval.omega, dev.eval.total_time_s,
                            dev.eval.total_energy_j, fired});
        continue;  // pinned in place: nothing changed, keep scanning
      }
    } else {
      n_after = n_proposed;
      dev.last_direction = adj.direction;
    }

    detail::load_device(dev, ctx.student_at(u, n_after), cfg, u, n_after);
    if (trace)
      trace->push_back({state.iteration, u, n_before, n_after, dev.eval.omega,
                        dev.eval.total_time_s, dev.eval.total_energy_j, fired});
    adjusted = true;
    if (cfg.planner.policy == AdjustPolicy::SingleUser) break;
  }

  if (!adjusted) state.converged = true;
  return state;
}

struct PlanResult {
  PlanState state;
  std::vector<PlanTraceRow> trace;
  double objective_value = 0.0;
};

// Full run: start every device at the teacher's block count, then iterate
// up to K times, stopping at rule convergence or, with epsilon > 0, when the
// objective moves less than epsilon across an iteration.
inline PlanResult run_planner(PlannerContext& ctx) {
  const ScenarioConfig& cfg = ctx.config();
  PlanResult result;
  result.state = init_plan(ctx);
  double prev_objective = plan_objective(result.state, ctx);
  for (std::size_t k = 0; k < cfg.planner.max_iterations; ++k) {
    result.state = plan_step(std::move(result.state), ctx, &result.trace);
    if (result.state.converged) break;
    const double obj = plan_objective(result.state, ctx);
    if (cfg.planner.epsilon > 0.0 &&
        std::fabs(obj - prev_objective) < cfg.planner.epsilon)
      break;
    prev_objective = obj;
  }
  result.objective_value = plan_objective(result.state, ctx);
  return result;
}

}  // namespace semkd
