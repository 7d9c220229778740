#pragma once

#include <filesystem>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "annihil/diffusion.hpp"
#include "annihil/geometry.hpp"
#include "annihil/measure.hpp"
#include "annihil/particle_system.hpp"
#include "annihil/pde.hpp"
#include "json.hpp"

namespace annihil {

struct ConvergeConfig {
  std::vector<int> N_values{250, 1000, 4000};
  int replicas = 200;
  std::vector<double> times{0.1, 0.25, 0.5};
};

struct MartingaleConfig {
  std::vector<int> N_values{1000, 2000};
  int replicas = 400;
  /// 1-based indices into the test basis.
  int phi_plus = 1;
  int phi_minus = 1;
};

struct CounterexampleConfig {
  int N = 4000;
  int replicas = 40;
  int control_replicas = 4;
  InteractionScheme scheme = InteractionScheme::occupation;
};

struct MinkowskiConfig {
  std::vector<int> dims{1, 2};
  std::vector<double> deltas{0.08, 0.04, 0.02, 0.01};
  int cells_per_delta = 48;
};

enum class SolverMethod { automatic, mild, fd };

struct ExperimentConfig {
  std::string experiment;
  int dim = 1;
  bool harvest_plus = true;
  bool harvest_minus = true;
  SimParams sim;
  SolverParams solver;
  SolverMethod solver_method = SolverMethod::automatic;
  int basis_size = 16;
  std::string output_dir = "out";
  int save_stride = 20;
  /// Replica-parallel worker count; 0 uses the hardware concurrency.
  int workers = 0;
  ConvergeConfig converge;
  MartingaleConfig martingale;
  CounterexampleConfig counterexample;
  MinkowskiConfig minkowski;
};

const std::vector<std::string>& experiment_kinds();

/// Strict parse: unknown keys, wrong types and a missing "experiment" key
/// raise ConfigError naming the key.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
/// The fully resolved configuration (defaults filled in).
nlohmann::json to_json(const ExperimentConfig& c);
void validate(const ExperimentConfig& c);

/// Geometry and the default initial profiles 2 (1 - a), normalized by the
/// mass of u0 rho when the drift is nonzero.
struct Scenario {
  BoxGeometry geom;
  InitialProfile u0_plus;
  InitialProfile u0_minus;
  SimParams sim;
};

Scenario make_scenario(const ExperimentConfig& c);

/// solve_mild for zero drift (d <= 2), solve_fd otherwise, unless forced.
CoupledSolution solve_pde(const Scenario& s, const SolverParams& params, SolverMethod method, double lambda);

/// Mean and standard error of a sample.
Estimate summarize(const std::vector<double>& x);

struct ConvergeRow {
  int N = 0;
  double t = 0.0;
  Estimate rho;
  double tail_bound = 0.0;
};

struct ConvergeAnnihilation {
  int N = 0;
  Estimate annihilated;  // event count / N
  double pde_annihilated = 0.0;
  Estimate interaction_half;  // J_N(T) / 2
  Estimate max_jump;          // largest rho between consecutive saves
  bool resolved = true;
};

struct ConvergeReport {
  std::vector<ConvergeRow> rows;
  std::vector<ConvergeAnnihilation> annihilation;
  /// Least-squares log-log slope of mean rho at the last time against N.
  double slope = 0.0;
};

struct MartingaleRow {
  int N = 0;
  int replicas = 0;
  std::vector<double> times;
  std::vector<Estimate> mean_M;
  Estimate M_T;
  Estimate M_T2;
  Estimate bracket;
  /// M_T^2 - [M]_T per replica.
  Estimate difference;
};

struct MartingaleReport {
  int phi_plus = 1;
  int phi_minus = 1;
  std::vector<MartingaleRow> rows;
};

struct CounterexampleReport {
  int N = 0;
  double delta = 0.0;
  std::vector<int> counts;
  double zero_fraction = 0.0;
  Estimate rho_decoupled;
  Estimate rho_baseline;
  double rho_ratio = 0.0;
  Estimate control_annihilated;
};

struct MinkowskiRow {
  int dim = 1;
  double delta = 0.0;
  std::string function;
  double value = 0.0;
  double limit = 0.0;
};

struct TubeRow {
  int dim = 1;
  double delta = 0.0;
  double volume = 0.0;
  double nu = 0.0;
  double ratio_delta_power = 0.0;  // volume / delta^{d+1}
};

struct MinkowskiReport {
  std::vector<TubeRow> tubes;
  std::vector<MinkowskiRow> integrals;
};

struct MassBalanceReport {
  std::string method;
  double max_pde_residual = 0.0;
  double max_pde_balance = 0.0;
  double harvested_plus = 0.0;
  double annihilated = 0.0;
  int replicas = 0;
  bool particle_accounting_exact = true;
  Estimate particle_annihilated;
  Estimate particle_harvested_plus;
};

/// Progress and diagnostics sink; may be empty.
using Logger = std::function<void(const std::string&)>;

struct ReplicaObservation {
  std::vector<double> times;
  std::vector<Pairings> pairings;
  int annihilations = 0;
  double interaction_integral = 0.0;
  bool resolved = true;
  Configuration final_config;
  EventLog events;
};

/// Runs one replica and records basis pairings at every save time.
ReplicaObservation observe_replica(const Scenario& s, const TestBasis& basis, std::uint64_t replica,
                                   bool keep_events);

ConvergeReport run_converge(const ExperimentConfig& c, const Logger& log = {});
MartingaleReport run_martingale(const ExperimentConfig& c, const Logger& log = {});
CounterexampleReport run_counterexample(const ExperimentConfig& c, const Logger& log = {});
MinkowskiReport run_minkowski(const ExperimentConfig& c, const Logger& log = {});
MassBalanceReport run_massbalance(const ExperimentConfig& c, const Logger& log = {});

/// The subcommands. Each writes its outputs and manifest.json into
/// c.output_dir and returns the manifest.
nlohmann::json cmd_simulate(const ExperimentConfig& c, const Logger& log = {});
nlohmann::json cmd_pde(const ExperimentConfig& c, const Logger& log = {});
nlohmann::json cmd_converge(const ExperimentConfig& c, const Logger& log = {});
nlohmann::json cmd_martingale(const ExperimentConfig& c, const Logger& log = {});
nlohmann::json cmd_counterexample(const ExperimentConfig& c, const Logger& log = {});
nlohmann::json cmd_minkowski(const ExperimentConfig& c, const Logger& log = {});
nlohmann::json cmd_massbalance(const ExperimentConfig& c, const Logger& log = {});

/// Dispatches on c.experiment.
nlohmann::json run_experiment(const ExperimentConfig& c, const Logger& log = {});

/// Decimal text with 17 significant digits.
std::string fmt17(double v);

}  // namespace annihil
