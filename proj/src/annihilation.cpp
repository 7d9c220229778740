#include "annihil/annihilation.hpp"

#include <algorithm>
#include <cmath>

#include "annihil/errors.hpp"

namespace annihil {

std::size_t Configuration::count(Side s, Status status) const {
  std::size_t n = 0;
  for (const auto& r : side(s)) n += r.status == status ? 1 : 0;
  return n;
}

PotentialSpec make_potential(int dim, double lambda, double delta, int N) {
  require(lambda >= 0.0 && std::isfinite(lambda), "PotentialSpec: lambda must be nonnegative");
  require(N >= 1, "PotentialSpec: N must be positive");
  const TubeSpec tube = make_tube(dim, delta);
  return PotentialSpec{lambda, tube.delta, tube.nu, N};
}

double potential_eval(const PotentialSpec& pot, const BoxGeometry& geom, const ParticleRecord& x,
                      const ParticleRecord& y) {
  if (x.status != Status::active || y.status != Status::active) return 0.0;
  return geom.pair_interface_dist2(x.position, y.position) < pot.delta * pot.delta ? pot.ell() : 0.0;
}

InterfaceBins::InterfaceBins(const BoxGeometry& geom, double delta)
    : geom_(geom), delta_(delta), cells_per_axis_(static_cast<std::int64_t>(std::ceil(1.0 / delta))) {
  require(delta > 0.0, "InterfaceBins: delta must be positive");
}

std::int64_t InterfaceBins::cell_key(const Point& p) const {
  std::int64_t key = 0;
  for (int i = 0; i < geom_.dim() - 1; ++i) {
    auto c = static_cast<std::int64_t>(std::floor(p.coords[i] / delta_));
    c = std::clamp<std::int64_t>(c, 0, cells_per_axis_ - 1);
    key = key * cells_per_axis_ + c;
  }
  return key;
}

void InterfaceBins::rebuild(const Configuration& config) {
  std::vector<BinEntry> plus;
  std::vector<BinEntry> minus;
  for (const auto& r : config.plus) {
    if (r.status == Status::active && geom_.interface_distance(r.position) < delta_) plus.push_back({r.position, r.id});
  }
  for (const auto& r : config.minus) {
    if (r.status == Status::active && geom_.interface_distance(r.position) < delta_) minus.push_back({r.position, r.id});
  }
  rebuild(std::move(plus), std::move(minus));
  generation_ = config.generation;
}

void InterfaceBins::rebuild(std::vector<BinEntry> plus, std::vector<BinEntry> minus) {
  plus_.clear();
  plus_.reserve(plus.size());
  for (auto& e : plus) {
    if (geom_.interface_distance(e.position) < delta_) plus_.emplace_back(cell_key(e.position), e);
  }
  std::sort(plus_.begin(), plus_.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first < b.first : a.second.id < b.second.id;
  });
  minus_.clear();
  for (auto& e : minus) {
    if (geom_.interface_distance(e.position) < delta_) minus_.push_back(e);
  }
  generation_ = ~std::uint64_t{0};
}

std::vector<PairCandidate> InterfaceBins::interacting_pairs(const PotentialSpec& pot,
                                                            const Configuration& config) const {
  if (config.generation != generation_) {
    throw ContractViolation("InterfaceBins: index is stale for the current configuration");
  }
  return interacting_pairs(pot);
}

std::vector<PairCandidate> InterfaceBins::interacting_pairs(const PotentialSpec& pot) const {
  std::vector<PairCandidate> out;
  if (plus_.empty() || minus_.empty()) return out;
  const int nt = geom_.dim() - 1;
  const double d2 = delta_ * delta_;
  const double ell = pot.ell();
  auto scan_cell = [&](std::int64_t key, const BinEntry& m) {
    auto lo = std::lower_bound(plus_.begin(), plus_.end(), key, [](const auto& e, std::int64_t k) { return e.first < k; });
    for (auto it = lo; it != plus_.end() && it->first == key; ++it) {
      if (geom_.pair_interface_dist2(it->second.position, m.position) < d2) {
        out.push_back({it->second.id, m.id, ell});
      }
    }
  };
  for (const auto& m : minus_) {
    if (nt == 0) {
      scan_cell(0, m);
      continue;
    }
    std::array<std::int64_t, 2> c{};
    for (int i = 0; i < nt; ++i) {
      c[i] = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(m.position.coords[i] / delta_)), 0,
                                      cells_per_axis_ - 1);
    }
    for (int a = -2; a <= 2; ++a) {
      const std::int64_t c0 = c[0] + a;
      if (c0 < 0 || c0 >= cells_per_axis_) continue;
      if (nt == 1) {
        scan_cell(c0, m);
        continue;
      }
      for (int b = -2; b <= 2; ++b) {
        const std::int64_t c1 = c[1] + b;
        if (c1 < 0 || c1 >= cells_per_axis_) continue;
        scan_cell(c0 * cells_per_axis_ + c1, m);
      }
    }
  }
  std::sort(out.begin(), out.end(), [](const PairCandidate& a, const PairCandidate& b) {
    return a.plus != b.plus ? a.plus < b.plus : a.minus < b.minus;
  });
  return out;
}

double total_intensity(const PotentialSpec& pot, const Configuration& config, const InterfaceBins& bins) {
  const auto pairs = bins.interacting_pairs(pot, config);
  double s = 0.0;
  for (const auto& p : pairs) s += p.ell;
  return s / (2.0 * pot.N);
}

double total_intensity_brute_force(const PotentialSpec& pot, const BoxGeometry& geom, const Configuration& config) {
  double s = 0.0;
  for (const auto& x : config.plus) {
    for (const auto& y : config.minus) s += potential_eval(pot, geom, x, y);
  }
  return s / (2.0 * pot.N);
}

std::optional<AnnihilationEvent> sample_event(const PotentialSpec& pot, const std::vector<PairCandidate>& pairs,
                                              double dt, Rng& rng) {
  require(dt > 0.0, "sample_event: dt must be positive");
  double total_ell = 0.0;
  for (const auto& p : pairs) total_ell += p.ell;
  const double A = total_ell / (2.0 * pot.N);
  if (!(A > 0.0)) return std::nullopt;
  require(std::isfinite(A), "sample_event: intensity must be finite");
  const double clock = -std::log(uniform_open(rng)) / A;
  if (clock > dt) return std::nullopt;
  const double target = uniform_open(rng) * total_ell;
  double acc = 0.0;
  std::size_t chosen = pairs.size() - 1;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    acc += pairs[i].ell;
    if (target < acc) {
      chosen = i;
      break;
    }
  }
  return AnnihilationEvent{clock, pairs[chosen].plus, pairs[chosen].minus};
}

std::vector<AnnihilationEvent> annihilate_window(const PotentialSpec& pot, Configuration& config,
                                                 InterfaceBins& bins, double window_start,
                                                 double dt, Rng& rng) {
  std::vector<AnnihilationEvent> events;
  double elapsed = 0.0;
  bins.rebuild(config);
  while (elapsed < dt) {
    const auto pairs = bins.interacting_pairs(pot, config);
    const auto ev = sample_event(pot, pairs, dt - elapsed, rng);
    if (!ev) break;
    elapsed += ev->offset;
    auto& x = config.plus[ev->plus];
    auto& y = config.minus[ev->minus];
    require(x.status == Status::active && y.status == Status::active, "annihilate_window: pair must be active");
    x.status = Status::annihilated;
    y.status = Status::annihilated;
    x.event_time = y.event_time = window_start + elapsed;
    x.partner = y.id;
    y.partner = x.id;
    ++config.generation;
    bins.rebuild(config);
    events.push_back({elapsed, ev->plus, ev->minus});
  }
  return events;
}

std::vector<AnnihilationEvent> sample_short_window(const PotentialSpec& pot, std::vector<PairCandidate> pairs,
                                                   double tau, Rng& rng,
                                                   const std::function<void(const PairCandidate&)>& on_tested) {
  std::vector<AnnihilationEvent> out;
  if (pairs.empty()) return out;
  std::shuffle(pairs.begin(), pairs.end(), rng);
  std::vector<int> used_plus;
  std::vector<int> used_minus;
  for (const auto& p : pairs) {
    if (std::find(used_plus.begin(), used_plus.end(), p.plus) != used_plus.end()) continue;
    if (std::find(used_minus.begin(), used_minus.end(), p.minus) != used_minus.end()) continue;
    if (on_tested) on_tested(p);
    const double prob = std::min(1.0, p.ell * tau / (2.0 * pot.N));
    if (uniform_open(rng) < prob) {
      out.push_back({tau, p.plus, p.minus});
      used_plus.push_back(p.plus);
      used_minus.push_back(p.minus);
    }
  }
  return out;
}

}  // namespace annihil
