#include <catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>

#include "semkd/scenario.hpp"

using namespace semkd;

namespace {

std::string write_temp(const std::string& text) {
  static int counter = 0;
  const std::string path =
      "scenario_test_" + std::to_string(counter++) + ".json";
  std::ofstream f(path);
  f << text;
  return path;
}

}  // namespace

TEST_CASE("default scenario mirrors the experimental setup") {
  const ScenarioConfig cfg = default_scenario();
  REQUIRE(cfg.num_devices == 10);
  REQUIRE(cfg.omega_min == 0.8);
  REQUIRE(cfg.total_bandwidth_hz == 10e6);
  REQUIRE(cfg.distill.learning_rate == 0.001);
  REQUIRE(validate(cfg).empty());
  for (const DeviceProfile& d : cfg.devices) {
    REQUIRE(d.transmit_power_w >= 0.2);
    REQUIRE(d.transmit_power_w <= 0.5);
    REQUIRE(d.compute_speed_flops >= 0.5e9);
    REQUIRE(d.compute_speed_flops <= 2e9);
    REQUIRE(d.distance_m >= 50.0);
    REQUIRE(d.distance_m <= 150.0);
  }
}

TEST_CASE("loading a minimal file fills documented defaults") {
  const std::string path = write_temp(R"({"num_devices": 4})");
  const ScenarioConfig cfg = load_scenario(path);
  REQUIRE(cfg.num_devices == 4);
  REQUIRE(cfg.devices.size() == 4);
  // omitted weights default to 1/U each
  REQUIRE(cfg.weights.size() == 4);
  for (double w : cfg.weights) REQUIRE(w == 0.25);
  REQUIRE(cfg.omega_min == 0.8);
  std::remove(path.c_str());
}

TEST_CASE("zero devices is rejected with a named violation") {
  const std::string path = write_temp(R"({"num_devices": 0, "devices": []})");
  REQUIRE_THROWS_WITH(load_scenario(path),
                      Catch::Matchers::ContainsSubstring("num_devices must be >= 1"));
  std::remove(path.c_str());
}

TEST_CASE("malformed file raises a parse error") {
  const std::string path = write_temp("{not json");
  REQUIRE_THROWS_WITH(load_scenario(path),
                      Catch::Matchers::ContainsSubstring("parse error"));
  std::remove(path.c_str());
}

TEST_CASE("validate returns every violation, not just the first") {
  ScenarioConfig cfg = default_scenario();
  cfg.omega_min = 1.5;
  cfg.lambda = -1.0;
  const std::vector<std::string> violations = validate(cfg);
  REQUIRE(violations.size() == 2);
  REQUIRE(violations[0] == "omega_min out of (0,1]");
  REQUIRE(violations[1] == "lambda must be >= 0");
}

TEST_CASE("valid default config has no violations") {
  REQUIRE(validate(default_scenario()).empty());
}

TEST_CASE("save/load round-trips field by field") {
  ScenarioConfig cfg = default_scenario(5);
  cfg.seed = 99;
  cfg.semex.threshold = 0.25;
  cfg.planner.policy = AdjustPolicy::AllUsers;
  cfg.extraction_cost = ExtractionCostModel::PerBit;
  cfg.distill.weighting = KlWeighting::Teacher;
  const std::string path = write_temp("");
  save_scenario(cfg, path);
  const ScenarioConfig loaded = load_scenario(path);
  REQUIRE(loaded == cfg);
  std::remove(path.c_str());
}

TEST_CASE("equal split uses the whole band exactly") {
  const ScenarioConfig cfg = default_scenario();
  const double share = bandwidth_share(cfg);
  REQUIRE(share == 1e6);
  double sum = 0.0;
  for (std::size_t u = 0; u < cfg.num_devices; ++u) sum += share;
  REQUIRE(sum == cfg.total_bandwidth_hz);
}

TEST_CASE("config hash is stable and sensitive") {
  const ScenarioConfig cfg = default_scenario();
  ScenarioConfig other = cfg;
  REQUIRE(config_hash(cfg) == config_hash(other));
  other.omega_min = 0.9;
  REQUIRE(config_hash(cfg) != config_hash(other));
}

TEST_CASE("the shipped default scenario file matches the built-in defaults") {
  const std::string path = std::string(SEMKD_SOURCE_DIR) + "/scenarios/default.json";
  const ScenarioConfig shipped = load_scenario(path);
  REQUIRE(shipped == default_scenario());
}

TEST_CASE("per-device transmit power must sit in the configured range") {
  ScenarioConfig cfg = default_scenario();
  cfg.devices[3].transmit_power_w = 0.7;
  const std::vector<std::string> violations = validate(cfg);
  REQUIRE(violations.size() == 1);
  REQUIRE_THAT(violations[0],
               Catch::Matchers::ContainsSubstring("devices[3]"));
  REQUIRE_THAT(violations[0],
               Catch::Matchers::ContainsSubstring("power range"));
}
