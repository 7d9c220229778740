#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "annihil/configuration.hpp"
#include "annihil/geometry.hpp"
#include "annihil/rng.hpp"

namespace annihil {

/// The pair potential l(x, y) = (lambda / nu) 1{pair_interface_dist2(x, y) < delta^2}
/// together with the scaling parameter N of the 1/(2N) rate normalization.
struct PotentialSpec {
  double lambda = 1.0;
  double delta = 0.1;
  double nu = 1.0;
  int N = 1;

  /// Value of the potential inside the tube.
  double ell() const { return lambda / nu; }
  /// Annihilation rate of one pair inside the tube, l / (2N).
  double pair_rate() const { return ell() / (2.0 * N); }
};

PotentialSpec make_potential(int dim, double lambda, double delta, int N);

double potential_eval(const PotentialSpec& pot, const BoxGeometry& geom, const ParticleRecord& x,
                      const ParticleRecord& y);

struct PairCandidate {
  int plus = 0;
  int minus = 0;
  double ell = 0.0;
};

struct BinEntry {
  Point position;
  int id = 0;
};

/// Sparse index of the particles within delta of the interface, keyed by
/// tangential cells of side delta. A pair can be in the tube only if both
/// members are in the slab and their tangential coordinates differ by less
/// than sqrt(2) delta, so each minus entry is tested against plus entries in
/// the 5^{d-1} surrounding cells.
class InterfaceBins {
 public:
  InterfaceBins(const BoxGeometry& geom, double delta);

  /// Index the active records of `config`; remembers its generation.
  void rebuild(const Configuration& config);
  /// Index arbitrary entries (already known to be active).
  void rebuild(std::vector<BinEntry> plus, std::vector<BinEntry> minus);

  std::uint64_t generation() const { return generation_; }

  /// All (plus, minus) pairs in the tube, ordered by (plus id, minus id).
  /// Refuses with a contract violation when `config` changed since rebuild.
  std::vector<PairCandidate> interacting_pairs(const PotentialSpec& pot, const Configuration& config) const;
  /// Pairs among the entries of the last rebuild.
  std::vector<PairCandidate> interacting_pairs(const PotentialSpec& pot) const;

 private:
  std::int64_t cell_key(const Point& p) const;

  BoxGeometry geom_;
  double delta_;
  std::int64_t cells_per_axis_;
  std::uint64_t generation_ = ~std::uint64_t{0};
  std::vector<std::pair<std::int64_t, BinEntry>> plus_;
  std::vector<BinEntry> minus_;
};

/// A = (1/2N) sum over active pairs of l, from the bins.
double total_intensity(const PotentialSpec& pot, const Configuration& config, const InterfaceBins& bins);

/// O(m^2) reference for total_intensity.
double total_intensity_brute_force(const PotentialSpec& pot, const BoxGeometry& geom, const Configuration& config);

struct AnnihilationEvent {
  /// Offset of the event from the start of the window.
  double offset = 0.0;
  int plus = 0;
  int minus = 0;
};

/// First event of the exponential clock with frozen intensity
/// A = (1/2N) sum l over `pairs` within a window of length dt: the clock rings
/// at an Exp(A) time; if that time is at most dt the pair is chosen with
/// probability proportional to l.
std::optional<AnnihilationEvent> sample_event(const PotentialSpec& pot, const std::vector<PairCandidate>& pairs,
                                              double dt, Rng& rng);

/// Sequential thinning over a window of length dt with positions frozen:
/// after each event the pair is removed, the intensity recomputed and the
/// clock restarted from the event time. Marks the annihilated records of
/// `config` (event time window_start + offset) and returns the events.
std::vector<AnnihilationEvent> annihilate_window(const PotentialSpec& pot, Configuration& config,
                                                 InterfaceBins& bins, double window_start,
                                                 double dt, Rng& rng);

/// One sub-step of length tau of the short-window clock: candidate pairs are
/// visited in random order and each pair whose members are both still
/// unused fires with probability min(1, l tau / 2N). `on_tested` sees every
/// pair that was actually tested. Returns fired pairs with offset tau.
std::vector<AnnihilationEvent> sample_short_window(
    const PotentialSpec& pot, std::vector<PairCandidate> pairs, double tau, Rng& rng,
    const std::function<void(const PairCandidate&)>& on_tested = {});

}  // namespace annihil
