#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "annihil/geometry.hpp"
#include "annihil/rng.hpp"

namespace annihil {

/// Constant drift b and scalar diffusion s: generator (s/2) Laplacian + b . grad.
/// The reversible density of this motion is rho(x) = exp(2 b . x / s).
struct DriftSpec {
  Coords b{};
  double s = 1.0;

  void validate(int dim) const;
  bool is_zero(int dim) const;
  double rho(const Point& p, int dim) const;
};

enum class Status { active, harvested, annihilated };

struct ParticleRecord {
  Point position;
  Status status = Status::active;
  /// Harvest or annihilation time; meaningful only when not active.
  double event_time = 0.0;
  /// Partner id of an annihilation, -1 otherwise.
  int partner = -1;
  int id = 0;
};

/// Noise consumed by one step of one particle: d standard normals for the
/// increment and one uniform for the bridge killing test.
struct StepNoise {
  Coords normal{};
  double uniform = 0.5;
};

/// Unfolded Euler proposal x + b dt + sqrt(s dt) xi.
Coords propose(const BoxGeometry& geom, const ParticleRecord& rec, double dt, const DriftSpec& drift,
               const StepNoise& noise);

/// One step of reflected diffusion with absorption at the harvest face.
/// A proposal beyond the harvest face harvests the particle; otherwise, when
/// `bridge_correction` is set, the particle is harvested with the Brownian
/// bridge crossing probability exp(-2 a b / (s dt)), a and b being the start
/// and proposal distances to the face. Survivors are folded back into the box.
/// Inactive records are returned unchanged. `t_end` stamps a harvest.
ParticleRecord euler_step(const BoxGeometry& geom, const ParticleRecord& rec, double dt, const DriftSpec& drift,
                          const StepNoise& noise, double t_end, bool bridge_correction = true);

/// Strip estimator of the interface local time along a sampled path:
/// L_k = (1/eps) sum_{i<k} 1{dist(path_i, I) < eps} dt. Returns the running
/// values L_0 = 0, ..., L_n. Refuses unless eps > 5 sqrt(dt).
std::vector<double> local_time_estimate(const BoxGeometry& geom, const std::vector<Point>& path, double dt,
                                        double eps);

struct Estimate {
  double mean = 0.0;
  double stderr_ = 0.0;
  std::size_t samples = 0;
};

/// Interface trace of the opposite species: (time, tangential coordinates) -> value.
using TraceFunction = std::function<double(double t, const Coords& z)>;
using DensityFunction = std::function<double(const Point&)>;

struct FeynmanKacParams {
  double lambda = 1.0;
  std::size_t replicas = 10000;
  double dt = 1e-4;
  double eps = 0.06;
  std::uint64_t seed = 1;
  bool bridge_correction = true;
};

/// Monte Carlo estimate of E[u0(X_t) exp(-(lambda/2) int_0^t u_other(t - r, X_r) dL_r); t < T_harvest]
/// for reflected Brownian motion started at x, with L the strip local time.
Estimate feynman_kac_u(const BoxGeometry& geom, Side side, double t, const Point& x, const DensityFunction& u0,
                       const TraceFunction& u_other, const FeynmanKacParams& params);

/// A sub-step at which a bridge path is within delta of the interface.
struct InterfaceVisit {
  /// Sub-step index in 1..M (time index * dt / M within the step).
  int index = 0;
  /// Folded distance to the interface.
  double distance = 0.0;
};

/// Samples a Brownian bridge of variance rate s from w0 to w1 over one step
/// of length dt (coordinates are the unfolded normal coordinate, interface at
/// 0) on the dyadic sub-grid with M = 2^levels points, by Levy midpoint
/// refinement. Only sub-intervals the bridge can reach within delta of 0 are
/// refined: an interval whose endpoints are both outside the slab on the same
/// side is dropped when its crossing probability
/// exp(-2 (|w_a| - delta)(|w_b| - delta) / (s * length)) is below prune_eps.
/// Appends the sub-grid nodes 1..M at which |w| < delta, in increasing order.
void bridge_interface_visits(double w0, double w1, double s, double dt, int levels, double delta, double prune_eps,
                             Rng& rng, NormalSource& normal, std::vector<InterfaceVisit>& out);

/// Fills tangential coordinates (folded into [0, 1]) at the sub-step times
/// `times` (increasing, in (0, dt]) from the bridge between `start` and the
/// unfolded proposal `end`. `out` receives one Coords per time.
void bridge_tangential(int dim, const Coords& start, const Coords& end, double s, double dt,
                       const std::vector<double>& times, Rng& rng, NormalSource& normal, std::vector<Coords>& out);

}  // namespace annihil
