#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "annihil/annihilation.hpp"
#include "annihil/configuration.hpp"
#include "annihil/diffusion.hpp"
#include "annihil/geometry.hpp"
#include "annihil/rng.hpp"

namespace annihil {

enum class DeltaSchedule { standard, counterexample, explicit_value };

/// How annihilation clocks are evaluated inside one motion step.
///  bridge:   each particle's step is refined into a Brownian bridge on a
///            dyadic sub-grid fine enough that a pair fires with probability
///            at most max_substep_probability per sub-step; interactions are
///            tested at every sub-grid node.
///  endpoint: positions are frozen at the end of the step and the
///            exponential clock is run by sequential thinning over dt.
///  occupation: d = 1 only, for delta far below sqrt(dt). A pair fires in a
///            step with probability (2 lambda / N) int_0^dt q+(s) q-(s) ds,
///            q being the density at the interface of the particle's Brownian
///            bridge between its step endpoints (the tube shrunk to a point).
///            Events are drawn as a Poisson number of pair selections.
///            Valid while lambda log(sqrt(s dt) / delta) is small against N,
///            so that a pair entering the tube rarely fires with certainty.
enum class InteractionScheme { bridge, endpoint, occupation };

struct SimParams {
  int N = 1000;
  /// Initial particles per side; 0 means m = N.
  int m = 0;
  double lambda = 1.0;
  DeltaSchedule schedule = DeltaSchedule::standard;
  /// delta for DeltaSchedule::explicit_value.
  double delta_value = 0.0;
  /// c in the standard schedule delta = c N^{-1/d}.
  double schedule_c = 0.4;
  double dt = 1e-3;
  double T = 0.5;
  DriftSpec drift_plus;
  DriftSpec drift_minus;
  std::uint64_t seed = 1;
  int replicas = 1;
  int save_stride = 20;
  bool bridge_correction = true;
  InteractionScheme scheme = InteractionScheme::bridge;
  double max_substep_probability = 0.05;
  int max_substep_levels = 16;
  /// Run with the deepest allowed sub-grid even when it is too coarse for the
  /// pair rate (results flagged unresolved) instead of refusing.
  bool allow_unresolved = false;
  double prune_eps = 1e-9;

  int particles() const { return m > 0 ? m : N; }
  double delta(int dim) const;
  int steps() const;
  void validate(int dim) const;
  const DriftSpec& drift(Side s) const { return s == Side::plus ? drift_plus : drift_minus; }
};

/// Initial density u0 on one side; particles are drawn i.i.d. from u0 * rho.
class InitialProfile {
 public:
  /// u0 = 2 (1 - distance to the interface); sampled by inverse CDF.
  static InitialProfile linear(Side side, int dim);
  /// Arbitrary density with a known upper bound of u0 * rho; sampled by rejection.
  static InitialProfile custom(Side side, DensityFunction u0, double bound);

  Side side() const { return side_; }
  double operator()(const Point& p) const { return u0_(p); }
  const DensityFunction& function() const { return u0_; }

  /// Refuses (ConfigError) unless u0 >= 0, u0 vanishes on an active harvest
  /// face, and the mass of u0 * rho is 1 to within 1e-6.
  void validate(const BoxGeometry& geom, const DriftSpec& drift) const;
  Point sample(const BoxGeometry& geom, const DriftSpec& drift, Rng& rng) const;

 private:
  InitialProfile(Side side, DensityFunction u0, double bound, bool linear)
      : side_(side), u0_(std::move(u0)), bound_(bound), linear_(linear) {}

  Side side_;
  DensityFunction u0_;
  double bound_;
  bool linear_;
};

struct EmpiricalMeasure {
  Side side = Side::plus;
  std::vector<Point> atoms;
  double weight = 1.0;

  double mass() const { return weight * static_cast<double>(atoms.size()); }
};

EmpiricalMeasure empirical_measure(const Configuration& config, Side side, int N);

/// <phi, mu> = weight * sum phi(atom).
double pair_against(const std::function<double(const Point&)>& phi, const EmpiricalMeasure& mu);

enum class EventKind { annihilation, harvest };

struct EventRecord {
  double time = 0.0;
  EventKind kind = EventKind::harvest;
  /// Harvest: side and id of the particle. Annihilation: plus id and minus id.
  Side side = Side::plus;
  int id = 0;
  int partner = -1;
  Point x;
  Point y;
};

using EventLog = std::vector<EventRecord>;

/// Called for every pair tested at an interaction node (both members still
/// alive, found in the tube) with
/// weight w = (time weight) * l / N^2, so that summing w g(x, y) over a run
/// approximates int_0^t <l g, X+ (x) X-> ds.
using PairObserver = std::function<void(const Point& x, const Point& y, double weight)>;

/// i.i.d. initial configuration: m records per side, all active.
Configuration init(const BoxGeometry& geom, const SimParams& params, const InitialProfile& u0_plus,
                   const InitialProfile& u0_minus, Rng& rng_plus, Rng& rng_minus);

/// One replica of the particle system.
class Simulation {
 public:
  Simulation(const BoxGeometry& geom, const SimParams& params, const InitialProfile& u0_plus,
             const InitialProfile& u0_minus, std::uint64_t replica);

  /// Advance by dt: move every particle, then resolve annihilations.
  void step();

  bool finished() const { return steps_done_ >= total_steps_; }
  int steps_done() const { return steps_done_; }
  int total_steps() const { return total_steps_; }
  double time() const { return config_.sim_time; }
  const Configuration& config() const { return config_; }
  const EventLog& events() const { return events_; }
  const PotentialSpec& potential() const { return potential_; }
  /// Running value of int_0^t <l, X+ (x) X-> ds.
  double interaction_integral() const { return interaction_integral_; }
  /// False when the interaction sub-grid is coarser than the pair rate requires.
  bool resolved() const { return resolved_; }
  int substep_levels() const { return levels_; }

  void set_pair_observer(PairObserver obs) { observer_ = std::move(obs); }
  EmpiricalMeasure measure(Side side) const { return empirical_measure(config_, side, params_.N); }

 private:
  struct Visit {
    int sub = 0;
    Side side = Side::plus;
    int id = 0;
    Point position;
  };

  void interact_bridge(double t0, std::vector<Visit>& visits);
  void interact_endpoint(double t0);
  struct Occupation {
    int id = 0;
    std::vector<double> q;
  };
  void interact_occupation(double t0, const std::vector<Occupation>& plus, const std::vector<Occupation>& minus);
  bool occupation_density(double w0, double w1, double s, std::vector<double>& q) const;
  void annihilate(int plus_id, int minus_id, double t, const Point& x, const Point& y);

  BoxGeometry geom_;
  SimParams params_;
  PotentialSpec potential_;
  Configuration config_;
  EventLog events_;
  Rng motion_rng_;
  Rng interaction_rng_;
  NormalSource motion_normal_;
  NormalSource interaction_normal_;
  InterfaceBins bins_;
  PairObserver observer_;
  int steps_done_ = 0;
  int total_steps_ = 0;
  int levels_ = 0;
  bool resolved_ = true;
  std::vector<double> occ_nodes_;
  std::vector<double> occ_weights_;
  double interaction_integral_ = 0.0;
};

struct Snapshot {
  double t = 0.0;
  EmpiricalMeasure plus;
  EmpiricalMeasure minus;
};

struct RunResult {
  std::vector<Snapshot> trajectory;
  EventLog events;
  Configuration final_config;
  double interaction_integral = 0.0;
  bool resolved = true;
};

/// Runs one replica to T, saving measures every save_stride steps (and at T).
RunResult run(const BoxGeometry& geom, const SimParams& params, const InitialProfile& u0_plus,
              const InitialProfile& u0_minus, std::uint64_t replica = 0);

/// True at the step counts where trajectories are saved.
bool is_save_step(int step, int total_steps, int stride);

}  // namespace annihil
