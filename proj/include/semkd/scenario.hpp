#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "semkd/data.hpp"
#include "semkd/distill.hpp"
#include "semkd/rng.hpp"

namespace semkd {

// Everything the simulation consumes, in one validated, serializable tree.
// A scenario file plus a seed is the complete identity of an experiment.

struct DeviceProfile {
  double transmit_power_w = 0.35;     // P_t
  double path_gain_const = 1e-3;      // G
  double shadowing = 1.0;             // beta
  double distance_m = 100.0;          // d
  double pathloss_exp = 3.0;          // phi
  double compute_speed_flops = 1e9;   // f_comp
  double sensor_pixels = 1048576.0;   // L_pixels (1024 x 1024)
  double readout_rate_pps = 1e8;      // R_read
  double pipeline_efficiency = 0.9;   // E_eff in (0,1]
  double capture_power_w = 0.1;       // P_cap
  double extraction_power_w = 0.5;    // P_ext
  double payload_bits = 8e5;          // D_u, nominal semantics size
  double deadline_s = 0.5;            // T_max
  double energy_budget_j = 0.5;       // E_budget

  bool operator==(const DeviceProfile&) const = default;
};

struct SemexSpec {
  std::size_t feature_maps = 32;   // K; must divide the feature width
  double threshold = 0.3;          // eta in [0,1)
  bool gradient_weighted = false;  // weight maps by class-logit gradients
  bool operator==(const SemexSpec&) const = default;
};

enum class AdjustPolicy { SingleUser, AllUsers };

struct PlannerSpec {
  std::size_t max_iterations = 64;  // K
  double epsilon = 0.0;             // early stop on |objective change|
  AdjustPolicy policy = AdjustPolicy::SingleUser;
  bool operator==(const PlannerSpec&) const = default;
};

struct TeacherSpec {
  std::size_t width = 64;
  std::size_t blocks = 4;  // N_Blocks
  std::size_t max_epochs = 50;
  std::size_t plateau_epochs = 5;  // stop after this many epochs w/o val gain
  bool operator==(const TeacherSpec&) const = default;
};

// Whether SemEx latency scales with inference passes per slot (one capture,
// one pass) or with the nominal payload bit count.
enum class ExtractionCostModel { PerInference, PerBit };

struct ScenarioConfig {
  std::size_t num_devices = 10;          // U
  std::size_t num_slots = 1;             // tau (recorded; evaluations use slot 0)
  std::size_t num_tasks = 1;             // J (fixed 1)
  double total_bandwidth_hz = 10e6;      // B
  double noise_power_w = 1e-11;          // sigma^2
  double omega_min = 0.8;
  double lambda = 1.0;
  std::vector<double> weights;           // w_u; empty -> 1/U each at load
  double power_min_w = 0.2;              // allowed P_t range
  double power_max_w = 0.5;
  std::uint64_t seed = 1;
  ExtractionCostModel extraction_cost = ExtractionCostModel::PerInference;
  std::vector<DeviceProfile> devices;
  TaskSpec task;
  DistillSchedule distill;
  SemexSpec semex;
  PlannerSpec planner;
  TeacherSpec teacher;

  bool operator==(const ScenarioConfig&) const = default;
};

// Equal-split bandwidth policy: every device gets B/U.
inline double bandwidth_share(const ScenarioConfig& cfg) {
  return cfg.total_bandwidth_hz / static_cast<double>(cfg.num_devices);
}

struct ScenarioError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Default device profiles: distances, compute speeds and transmit powers are
// spread deterministically (fixed generation seed) so the fleet is
// heterogeneous but identical across runs and independent of the run seed.
inline std::vector<DeviceProfile> default_device_profiles(std::size_t count) {
  RngStream rng(0x5eedDEC0DEULL);
  std::vector<DeviceProfile> devices(count);
  for (auto& d : devices) {
    d.distance_m = rng.uniform(50.0, 150.0);
    d.compute_speed_flops = rng.uniform(0.5e9, 2e9);
    d.transmit_power_w = rng.uniform(0.2, 0.5);
  }
  return devices;
}

inline ScenarioConfig default_scenario(std::size_t num_devices = 10) {
  ScenarioConfig cfg;
  cfg.num_devices = num_devices;
  cfg.weights.assign(num_devices, 1.0 / static_cast<double>(num_devices));
  cfg.devices = default_device_profiles(num_devices);
  // Longer stages than the schedule's own defaults: at the fixed 0.001
  // learning rate the students need the extra steps to clear the accuracy
  // floor on their small local shards.
  cfg.distill.stage_epochs = {20, 20, 40};
  return cfg;
}

inline std::vector<std::string> validate(const ScenarioConfig& cfg) {
  std::vector<std::string> v;
  auto bad = [&](const std::string& msg) { v.push_back(msg); };

  if (cfg.num_devices < 1) bad("num_devices must be >= 1");
  if (cfg.num_tasks != 1) bad("num_tasks must be 1");
  if (cfg.num_slots < 1) bad("num_slots must be >= 1");
  if (!(cfg.omega_min > 0.0 && cfg.omega_min <= 1.0))
    bad("omega_min out of (0,1]");
  if (cfg.lambda < 0.0) bad("lambda must be >= 0");
  if (cfg.total_bandwidth_hz <= 0.0) bad("total_bandwidth_hz must be > 0");
  if (cfg.noise_power_w <= 0.0) bad("noise_power_w must be > 0");
  if (!(cfg.power_min_w > 0.0 && cfg.power_max_w >= cfg.power_min_w))
    bad("power range must satisfy 0 < power_min_w <= power_max_w");
  if (cfg.weights.size() != cfg.num_devices)
    bad("weights must have one entry per device");
  for (std::size_t u = 0; u < cfg.weights.size(); ++u)
    if (cfg.weights[u] < 0.0)
      bad("weights[" + std::to_string(u) + "] must be >= 0");
  if (cfg.devices.size() != cfg.num_devices)
    bad("devices must have one entry per device");

  for (std::size_t u = 0; u < cfg.devices.size(); ++u) {
    const DeviceProfile& d = cfg.devices[u];
    const std::string at = "devices[" + std::to_string(u) + "].";
    auto pos = [&](double x, const char* name) {
      if (!(x > 0.0)) bad(at + name + " must be > 0");
    };
    pos(d.transmit_power_w, "transmit_power_w");
    pos(d.path_gain_const, "path_gain_const");
    pos(d.shadowing, "shadowing");
    pos(d.distance_m, "distance_m");
    if (d.pathloss_exp < 0.0) bad(at + "pathloss_exp must be >= 0");
    pos(d.compute_speed_flops, "compute_speed_flops");
    pos(d.sensor_pixels, "sensor_pixels");
    pos(d.readout_rate_pps, "readout_rate_pps");
    if (!(d.pipeline_efficiency > 0.0 && d.pipeline_efficiency <= 1.0))
      bad(at + "pipeline_efficiency out of (0,1]");
    pos(d.capture_power_w, "capture_power_w");
    pos(d.extraction_power_w, "extraction_power_w");
    if (d.payload_bits < 0.0) bad(at + "payload_bits must be >= 0");
    pos(d.deadline_s, "deadline_s");
    pos(d.energy_budget_j, "energy_budget_j");
    if (d.transmit_power_w < cfg.power_min_w ||
        d.transmit_power_w > cfg.power_max_w)
      bad(at + "transmit_power_w outside configured power range");
  }

  try {
    validate_task_spec(cfg.task);
  } catch (const std::invalid_argument& e) {
    bad(e.what());
  }

  if (cfg.distill.temperature <= 0.0) bad("distill.temperature must be > 0");
  if (cfg.distill.learning_rate <= 0.0)
    bad("distill.learning_rate must be > 0");
  if (cfg.distill.head_init_scale <= 0.0)
    bad("distill.head_init_scale must be > 0");
  if (cfg.distill.batch_size < 1) bad("distill.batch_size must be >= 1");
  if (cfg.distill.stage_epochs[0] + cfg.distill.stage_epochs[1] +
          cfg.distill.stage_epochs[2] <
      1)
    bad("distill.stage_epochs must total >= 1");

  if (cfg.semex.feature_maps < 1) bad("semex.feature_maps must be >= 1");
  else if (cfg.teacher.width % cfg.semex.feature_maps != 0)
    bad("semex.feature_maps must divide teacher.width");
  if (!(cfg.semex.threshold >= 0.0 && cfg.semex.threshold < 1.0))
    bad("semex.threshold out of [0,1)");

  if (cfg.planner.max_iterations < 1) bad("planner.max_iterations must be >= 1");
  if (cfg.planner.epsilon < 0.0) bad("planner.epsilon must be >= 0");

  if (cfg.teacher.width < 1) bad("teacher.width must be >= 1");
  if (cfg.teacher.blocks < 1) bad("teacher.blocks must be >= 1");
  if (cfg.teacher.max_epochs < 1) bad("teacher.max_epochs must be >= 1");
  if (cfg.teacher.plateau_epochs < 1) bad("teacher.plateau_epochs must be >= 1");
  if (cfg.distill.warmup_epochs >= cfg.teacher.max_epochs)
    bad("distill.warmup_epochs must be < teacher.max_epochs");

  return v;
}

namespace detail {

using nlohmann::json;

inline json to_json(const DeviceProfile& d) {
  return json{{"transmit_power_w", d.transmit_power_w},
              {"path_gain_const", d.path_gain_const},
              {"shadowing", d.shadowing},
              {"distance_m", d.distance_m},
              {"pathloss_exp", d.pathloss_exp},
              {"compute_speed_flops", d.compute_speed_flops},
              {"sensor_pixels", d.sensor_pixels},
              {"readout_rate_pps", d.readout_rate_pps},
              {"pipeline_efficiency", d.pipeline_efficiency},
              {"capture_power_w", d.capture_power_w},
              {"extraction_power_w", d.extraction_power_w},
              {"payload_bits", d.payload_bits},
              {"deadline_s", d.deadline_s},
              {"energy_budget_j", d.energy_budget_j}};
}

template <class T>
void get_if_present(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline DeviceProfile device_from_json(const json& j) {
  DeviceProfile d;
  get_if_present(j, "transmit_power_w", d.transmit_power_w);
  get_if_present(j, "path_gain_const", d.path_gain_const);
  get_if_present(j, "shadowing", d.shadowing);
  get_if_present(j, "distance_m", d.distance_m);
  get_if_present(j, "pathloss_exp", d.pathloss_exp);
  get_if_present(j, "compute_speed_flops", d.compute_speed_flops);
  get_if_present(j, "sensor_pixels", d.sensor_pixels);
  get_if_present(j, "readout_rate_pps", d.readout_rate_pps);
  get_if_present(j, "pipeline_efficiency", d.pipeline_efficiency);
  get_if_present(j, "capture_power_w", d.capture_power_w);
  get_if_present(j, "extraction_power_w", d.extraction_power_w);
  get_if_present(j, "payload_bits", d.payload_bits);
  get_if_present(j, "deadline_s", d.deadline_s);
  get_if_present(j, "energy_budget_j", d.energy_budget_j);
  return d;
}

}  // namespace detail

inline nlohmann::json scenario_to_json(const ScenarioConfig& cfg) {
  using nlohmann::json;
  json j;
  j["num_devices"] = cfg.num_devices;
  j["num_slots"] = cfg.num_slots;
  j["num_tasks"] = cfg.num_tasks;
  j["total_bandwidth_hz"] = cfg.total_bandwidth_hz;
  j["noise_power_w"] = cfg.noise_power_w;
  j["omega_min"] = cfg.omega_min;
  j["lambda"] = cfg.lambda;
  j["weights"] = cfg.weights;
  j["power_range_w"] = json::array({cfg.power_min_w, cfg.power_max_w});
  j["seed"] = cfg.seed;
  j["extraction_cost_model"] =
      cfg.extraction_cost == ExtractionCostModel::PerInference ? "per_inference"
                                                               : "per_bit";
  json devices = json::array();
  for (const DeviceProfile& d : cfg.devices)
    devices.push_back(detail::to_json(d));
  j["devices"] = devices;
  j["task"] = json{{"input_dim", cfg.task.input_dim},
                   {"classes", cfg.task.classes},
                   {"train_samples", cfg.task.train_samples},
                   {"val_samples", cfg.task.val_samples},
                   {"test_samples", cfg.task.test_samples},
                   {"center_scale", cfg.task.center_scale},
                   {"cluster_spread", cfg.task.cluster_spread}};
  j["distill"] = json{
      {"temperature", cfg.distill.temperature},
      {"stage_epochs", cfg.distill.stage_epochs},
      {"alpha_schedule", "linear"},
      {"learning_rate", cfg.distill.learning_rate},
      {"batch_size", cfg.distill.batch_size},
      {"warmup_epochs", cfg.distill.warmup_epochs},
      {"head_init_scale", cfg.distill.head_init_scale},
      {"kl_weighting",
       cfg.distill.weighting == KlWeighting::Student ? "student" : "teacher"}};
  j["semex"] = json{{"feature_maps", cfg.semex.feature_maps},
                    {"threshold", cfg.semex.threshold},
                    {"gradient_weighted", cfg.semex.gradient_weighted}};
  j["planner"] = json{
      {"max_iterations", cfg.planner.max_iterations},
      {"epsilon", cfg.planner.epsilon},
      {"policy",
       cfg.planner.policy == AdjustPolicy::SingleUser ? "single" : "all"}};
  j["teacher"] = json{{"width", cfg.teacher.width},
                      {"blocks", cfg.teacher.blocks},
                      {"max_epochs", cfg.teacher.max_epochs},
                      {"plateau_epochs", cfg.teacher.plateau_epochs}};
  return j;
}

inline ScenarioConfig scenario_from_json(const nlohmann::json& j) {
  using detail::get_if_present;
  ScenarioConfig cfg;
  get_if_present(j, "num_devices", cfg.num_devices);
  get_if_present(j, "num_slots", cfg.num_slots);
  get_if_present(j, "num_tasks", cfg.num_tasks);
  get_if_present(j, "total_bandwidth_hz", cfg.total_bandwidth_hz);
  get_if_present(j, "noise_power_w", cfg.noise_power_w);
  get_if_present(j, "omega_min", cfg.omega_min);
  get_if_present(j, "lambda", cfg.lambda);
  get_if_present(j, "seed", cfg.seed);
  if (j.contains("power_range_w")) {
    cfg.power_min_w = j.at("power_range_w").at(0).get<double>();
    cfg.power_max_w = j.at("power_range_w").at(1).get<double>();
  }
  if (j.contains("extraction_cost_model")) {
    const std::string m = j.at("extraction_cost_model").get<std::string>();
    if (m == "per_inference")
      cfg.extraction_cost = ExtractionCostModel::PerInference;
    else if (m == "per_bit")
      cfg.extraction_cost = ExtractionCostModel::PerBit;
    else
      throw ScenarioError("unknown extraction_cost_model: " + m);
  }
  if (j.contains("task")) {
    const auto& t = j.at("task");
    get_if_present(t, "input_dim", cfg.task.input_dim);
    get_if_present(t, "classes", cfg.task.classes);
    get_if_present(t, "train_samples", cfg.task.train_samples);
    get_if_present(t, "val_samples", cfg.task.val_samples);
    get_if_present(t, "test_samples", cfg.task.test_samples);
    get_if_present(t, "center_scale", cfg.task.center_scale);
    get_if_present(t, "cluster_spread", cfg.task.cluster_spread);
  }
  if (j.contains("distill")) {
    const auto& d = j.at("distill");
    get_if_present(d, "temperature", cfg.distill.temperature);
    get_if_present(d, "stage_epochs", cfg.distill.stage_epochs);
    get_if_present(d, "learning_rate", cfg.distill.learning_rate);
    get_if_present(d, "batch_size", cfg.distill.batch_size);
    get_if_present(d, "warmup_epochs", cfg.distill.warmup_epochs);
    get_if_present(d, "head_init_scale", cfg.distill.head_init_scale);
    if (d.contains("alpha_schedule")) {
      const std::string a = d.at("alpha_schedule").get<std::string>();
      if (a != "linear") throw ScenarioError("unknown alpha_schedule: " + a);
      cfg.distill.alpha = AlphaSchedule::Linear;
    }
    if (d.contains("kl_weighting")) {
      const std::string w = d.at("kl_weighting").get<std::string>();
      if (w == "student")
        cfg.distill.weighting = KlWeighting::Student;
      else if (w == "teacher")
        cfg.distill.weighting = KlWeighting::Teacher;
      else
        throw ScenarioError("unknown kl_weighting: " + w);
    }
  }
  if (j.contains("semex")) {
    const auto& s = j.at("semex");
    get_if_present(s, "feature_maps", cfg.semex.feature_maps);
    get_if_present(s, "threshold", cfg.semex.threshold);
    get_if_present(s, "gradient_weighted", cfg.semex.gradient_weighted);
  }
  if (j.contains("planner")) {
    const auto& p = j.at("planner");
    get_if_present(p, "max_iterations", cfg.planner.max_iterations);
    get_if_present(p, "epsilon", cfg.planner.epsilon);
    if (p.contains("policy")) {
      const std::string pol = p.at("policy").get<std::string>();
      if (pol == "single")
        cfg.planner.policy = AdjustPolicy::SingleUser;
      else if (pol == "all")
        cfg.planner.policy = AdjustPolicy::AllUsers;
      else
        throw ScenarioError("unknown planner policy: " + pol);
    }
  }
  if (j.contains("teacher")) {
    const auto& t = j.at("teacher");
    get_if_present(t, "width", cfg.teacher.width);
    get_if_present(t, "blocks", cfg.teacher.blocks);
    get_if_present(t, "max_epochs", cfg.teacher.max_epochs);
    get_if_present(t, "plateau_epochs", cfg.teacher.plateau_epochs);
  }
  if (j.contains("devices")) {
    cfg.devices.clear();
    for (const auto& d : j.at("devices"))
      cfg.devices.push_back(detail::device_from_json(d));
  } else {
    cfg.devices = default_device_profiles(cfg.num_devices);
  }
  if (j.contains("weights"))
    cfg.weights = j.at("weights").get<std::vector<double>>();
  else
    cfg.weights.assign(cfg.num_devices,
                       1.0 / static_cast<double>(cfg.num_devices));
  return cfg;
}

inline ScenarioConfig load_scenario_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ScenarioError(std::string("scenario parse error: ") + e.what());
  }
  ScenarioConfig cfg;
  try {
    cfg = scenario_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw ScenarioError(std::string("scenario field error: ") + e.what());
  }
  const std::vector<std::string> violations = validate(cfg);
  if (!violations.empty()) {
    std::string msg = "invalid scenario:";
    for (const std::string& s : violations) msg += "\n  - " + s;
    throw ScenarioError(msg);
  }
  return cfg;
}

inline ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ScenarioError("cannot open scenario file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return load_scenario_text(ss.str());
}

inline void save_scenario(const ScenarioConfig& cfg, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ScenarioError("cannot write scenario file: " + path);
  f << scenario_to_json(cfg).dump(2) << "\n";
}

// FNV-1a over the canonical serialized form; stamped into reports so a CSV
// can be traced back to the exact configuration that produced it.
inline std::string config_hash(const ScenarioConfig& cfg) {
  const std::string dump = scenario_to_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : dump) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace semkd
