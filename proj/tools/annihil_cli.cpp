#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "annihil/errors.hpp"
#include "annihil/harness.hpp"
#include "annihil/version.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRefusal = 3;

void apply_replicas(annihil::ExperimentConfig& c, int r) {
  if (c.experiment == "converge") {
    c.converge.replicas = r;
  } else if (c.experiment == "martingale") {
    c.martingale.replicas = r;
  } else if (c.experiment == "counterexample") {
    c.counterexample.replicas = r;
  } else {
    c.sim.replicas = r;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Annihilating reflected diffusions: particle simulation, limit PDE and verification experiments"};
  app.set_version_flag("--version", std::string(annihil::kVersion));
  app.require_subcommand(1, 1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<int> replicas;
  std::optional<int> workers;
  bool quiet = false;

  for (const auto& kind : annihil::experiment_kinds()) {
    CLI::App* sub = app.add_subcommand(kind, "run the " + kind + " experiment");
    sub->add_option("--config", config_path, "JSON configuration file")->required();
    sub->add_option("--seed", seed, "override sim.seed");
    sub->add_option("--out", out_dir, "override output_dir");
    sub->add_option("--replicas", replicas, "override the experiment's replica count")->check(CLI::PositiveNumber);
    sub->add_option("--workers", workers, "replica-parallel workers (0: hardware concurrency)")
        ->check(CLI::NonNegativeNumber);
    sub->add_flag("--quiet", quiet, "suppress progress messages");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    annihil::ExperimentConfig c = annihil::load_config(config_path);
    if (c.experiment != command) {
      throw annihil::ConfigError("config key 'experiment' is '" + c.experiment + "' but the subcommand is '" +
                                 command + "'");
    }
    if (seed) c.sim.seed = *seed;
    if (out_dir) c.output_dir = *out_dir;
    if (replicas) apply_replicas(c, *replicas);
    if (workers) c.workers = *workers;
    annihil::validate(c);
    annihil::Logger log;
    if (!quiet) log = [](const std::string& m) { std::cerr << m << '\n'; };
    annihil::run_experiment(c, log);
  } catch (const annihil::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const annihil::NumericalRefusal& e) {
    std::cerr << "numerical refusal: " << e.what() << '\n';
    return kExitRefusal;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
