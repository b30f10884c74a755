#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "semkd/gradcheck.hpp"
#include "semkd/harness.hpp"
#include "semkd/scenario.hpp"
#include "semkd/version.hpp"

namespace {

semkd::ScenarioConfig load_or_default(const std::string& spec) {
  if (spec == "default") return semkd::default_scenario();
  return semkd::load_scenario(spec);
}

int cmd_run(const std::string& scenario, bool seed_set, std::uint64_t seed,
            const std::string& methods_csv, const std::string& out_dir,
            const std::string& policy) {
  semkd::ScenarioConfig cfg = load_or_default(scenario);
  if (!policy.empty()) {
    if (policy == "single")
      cfg.planner.policy = semkd::AdjustPolicy::SingleUser;
    else if (policy == "all")
      cfg.planner.policy = semkd::AdjustPolicy::AllUsers;
    else {
      std::cerr << "error: unknown policy '" << policy
                << "' (expected single or all)\n";
      return 1;
    }
  }
  const std::uint64_t effective_seed = seed_set ? seed : cfg.seed;
  const std::vector<semkd::Method> methods = semkd::parse_methods(methods_csv);

  semkd::ExperimentArtifacts artifacts =
      semkd::run_experiment(cfg, effective_seed, methods);
  const std::vector<std::string> files =
      semkd::write_outputs(artifacts, out_dir);
  for (const std::string& f : files) std::cout << f << "\n";
  return 0;
}

int cmd_validate(const std::string& scenario) {
  if (scenario == "default") {
    std::cout << "scenario valid (built-in default)\n";
    return 0;
  }
  std::ifstream f(scenario);
  if (!f) {
    std::cerr << "error: cannot open scenario file: " << scenario << "\n";
    return 1;
  }
  std::ostringstream ss;
  ss << f.rdbuf();
  semkd::ScenarioConfig cfg;
  try {
    cfg = semkd::scenario_from_json(nlohmann::json::parse(ss.str()));
  } catch (const std::exception& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 1;
  }
  const std::vector<std::string> violations = semkd::validate(cfg);
  if (violations.empty()) {
    std::cout << "scenario valid\n";
    return 0;
  }
  for (const std::string& v : violations) std::cout << "violation: " << v << "\n";
  return 1;
}

int cmd_gradcheck(std::size_t seeds) {
  const semkd::GradCheckResult result = semkd::run_gradcheck(seeds);
  std::cout << "checked " << result.nets_checked << " nets, "
            << result.parameters_checked << " parameters\n"
            << "max relative error vs central differences: "
            << result.max_rel_error << "\n";
  if (result.max_rel_error < 1e-4) {
    std::cout << "gradcheck OK\n";
    return 0;
  }
  std::cout << "gradcheck FAILED (tolerance 1e-4)\n";
  return 1;
}

int cmd_init(const std::string& out_path, std::size_t devices) {
  semkd::save_scenario(semkd::default_scenario(devices), out_path);
  std::cout << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Task-oriented semantic communication simulator with "
               "distillation-sized device models"};
  app.set_version_flag("--version", std::string("semkd ") + semkd::kVersion);
  app.require_subcommand(1);

  std::string scenario;
  std::uint64_t seed = 0;
  std::string methods = "no_kd,static_kd,proposed";
  std::string out_dir = "out";
  std::string policy;

  CLI::App* run = app.add_subcommand("run", "Run an experiment and write CSV reports");
  run->add_option("--scenario", scenario,
                  "Scenario file path, or 'default' for the built-in scenario")
      ->required();
  CLI::Option* seed_opt =
      run->add_option("--seed", seed, "Run seed (overrides the scenario's)");
  run->add_option("--methods", methods,
                  "Comma-separated subset of no_kd,static_kd,proposed");
  run->add_option("--out", out_dir, "Output directory");
  run->add_option("--policy", policy,
                  "Planner adjustment policy: single (one device per "
                  "iteration) or all");

  CLI::App* validate =
      app.add_subcommand("validate", "Check a scenario file and list violations");
  validate->add_option("--scenario", scenario, "Scenario file path")->required();

  std::size_t gradcheck_seeds = 20;
  CLI::App* gradcheck = app.add_subcommand(
      "gradcheck", "Compare analytic gradients against central finite differences");
  gradcheck->add_option("--seeds", gradcheck_seeds, "Number of random nets");

  std::string init_out = "scenario.json";
  std::size_t init_devices = 10;
  CLI::App* init =
      app.add_subcommand("init", "Write the built-in default scenario to a file");
  init->add_option("--out", init_out, "Destination path");
  init->add_option("--devices", init_devices, "Number of devices");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed())
      return cmd_run(scenario, seed_opt->count() > 0, seed, methods, out_dir,
                     policy);
    if (validate->parsed()) return cmd_validate(scenario);
    if (gradcheck->parsed()) return cmd_gradcheck(gradcheck_seeds);
    if (init->parsed()) return cmd_init(init_out, init_devices);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
