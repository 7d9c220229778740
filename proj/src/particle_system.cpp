#include "annihil/particle_system.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include <boost/random/discrete_distribution.hpp>
#include <boost/random/poisson_distribution.hpp>
#include <numbers>

#include "annihil/errors.hpp"
#include "annihil/kernels.hpp"
#include "annihil/quadrature.hpp"

namespace annihil {

double SimParams::delta(int dim) const {
  switch (schedule) {
    case DeltaSchedule::standard: return schedule_c * std::pow(static_cast<double>(N), -1.0 / dim);
    case DeltaSchedule::counterexample: return std::pow(static_cast<double>(N), -(2.0 / dim + 1.0));
    case DeltaSchedule::explicit_value: return delta_value;
  }
  return delta_value;
}

int SimParams::steps() const {
  const double n = T / dt;
  const long long k = std::llround(n);
  if (std::abs(n - static_cast<double>(k)) > 1e-9 * std::max(1.0, n)) {
    throw ConfigError("T must be an integer multiple of dt");
  }
  return static_cast<int>(k);
}

void SimParams::validate(int dim) const {
  if (N < 1) throw ConfigError("N must be positive");
  if (m < 0) throw ConfigError("m must be positive");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be nonnegative");
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  if (!(T > 0.0)) throw ConfigError("T must be positive");
  if (dt > T) throw ConfigError("dt must not exceed T");
  if (replicas < 1) throw ConfigError("replicas must be positive");
  if (save_stride < 1) throw ConfigError("save_stride must be positive");
  if (!(max_substep_probability > 0.0 && max_substep_probability <= 1.0)) {
    throw ConfigError("max_substep_probability must be in (0, 1]");
  }
  if (max_substep_levels < 0 || max_substep_levels > 30) throw ConfigError("max_substep_levels must be in 0..30");
  if (!(prune_eps > 0.0 && prune_eps < 1.0)) throw ConfigError("prune_eps must be in (0, 1)");
  const double d = delta(dim);
  if (!(d > 0.0 && d < 0.5)) throw ConfigError("delta must be in (0, 1/2), got " + std::to_string(d));
  drift_plus.validate(dim);
  drift_minus.validate(dim);
  steps();
  if (scheme == InteractionScheme::occupation) {
    if (dim != 1) throw ConfigError("the occupation interaction scheme supports d = 1 only");
    const double s = std::min(drift_plus.s, drift_minus.s);
    if (d > 1e-2 * std::sqrt(s * dt)) {
      throw ConfigError("the occupation interaction scheme needs delta <= 0.01 sqrt(s dt)");
    }
    // A pair that enters the tube must keep a small firing probability.
    if (lambda * std::log(std::sqrt(s * dt) / d) > 0.1 * N) {
      throw ConfigError("the occupation interaction scheme needs lambda log(sqrt(s dt) / delta) <= N / 10");
    }
  }
}

InitialProfile InitialProfile::linear(Side side, int dim) {
  require(dim >= 1 && dim <= kMaxDim, "InitialProfile: bad dimension");
  return InitialProfile(
      side, [dim](const Point& p) { return 2.0 * (1.0 - normal_coordinate(p, dim)); }, 2.0, true);
}

InitialProfile InitialProfile::custom(Side side, DensityFunction u0, double bound) {
  require(bound > 0.0 && std::isfinite(bound), "InitialProfile: bound must be positive");
  return InitialProfile(side, std::move(u0), bound, false);
}

void InitialProfile::validate(const BoxGeometry& geom, const DriftSpec& drift) const {
  const int d = geom.dim();
  const QuadratureRule q = composite_gauss(10, 4, 0.0, 1.0);
  const QuadratureRule q0{{0.0}, {1.0}};
  const QuadratureRule& q1 = d >= 2 ? q : q0;
  const QuadratureRule& q2 = d == 3 ? q : q0;
  double mass = 0.0;
  Point p;
  p.side = side_;
  for (std::size_t a = 0; a < q1.nodes.size(); ++a) {
    for (std::size_t b = 0; b < q2.nodes.size(); ++b) {
      if (d >= 2) p.coords[0] = q1.nodes[a];
      if (d == 3) p.coords[1] = q2.nodes[b];
      for (std::size_t c = 0; c < q.nodes.size(); ++c) {
        p.coords[d - 1] = side_ == Side::plus ? q.nodes[c] : -q.nodes[c];
        const double u = u0_(p);
        if (u < 0.0) throw ConfigError("initial density must be nonnegative");
        mass += q1.weights[a] * q2.weights[b] * q.weights[c] * u * drift.rho(p, d);
      }
      if (geom.harvest(side_)) {
        p.coords[d - 1] = side_ == Side::plus ? 1.0 : -1.0;
        if (std::abs(u0_(p)) > 1e-9) throw ConfigError("initial density must vanish on the harvest face");
      }
    }
  }
  if (std::abs(mass - 1.0) > 1e-6) {
    throw ConfigError("initial density must have unit mass, got " + std::to_string(mass));
  }
}

Point InitialProfile::sample(const BoxGeometry& geom, const DriftSpec& drift, Rng& rng) const {
  const int d = geom.dim();
  Point p;
  p.side = side_;
  if (linear_ && drift.is_zero(d)) {
    for (int i = 0; i < d - 1; ++i) p.coords[i] = uniform_open(rng);
    const double a = 1.0 - std::sqrt(1.0 - uniform_open(rng));
    p.coords[d - 1] = side_ == Side::plus ? a : -a;
    return p;
  }
  for (;;) {
    for (int i = 0; i < d - 1; ++i) p.coords[i] = uniform_open(rng);
    const double a = uniform_open(rng);
    p.coords[d - 1] = side_ == Side::plus ? a : -a;
    const double v = u0_(p) * drift.rho(p, d);
    if (v > bound_ * (1.0 + 1e-12)) throw ContractViolation("InitialProfile: density exceeds its declared bound");
    if (uniform_open(rng) * bound_ < v) return p;
  }
}

EmpiricalMeasure empirical_measure(const Configuration& config, Side side, int N) {
  EmpiricalMeasure mu;
  mu.side = side;
  mu.weight = 1.0 / N;
  for (const auto& r : config.side(side)) {
    if (r.status == Status::active) mu.atoms.push_back(r.position);
  }
  return mu;
}

double pair_against(const std::function<double(const Point&)>& phi, const EmpiricalMeasure& mu) {
  double s = 0.0;
  for (const auto& p : mu.atoms) s += phi(p);
  return mu.weight * s;
}

Configuration init(const BoxGeometry& geom, const SimParams& params, const InitialProfile& u0_plus,
                   const InitialProfile& u0_minus, Rng& rng_plus, Rng& rng_minus) {
  require(u0_plus.side() == Side::plus && u0_minus.side() == Side::minus, "init: profiles on the wrong sides");
  u0_plus.validate(geom, params.drift_plus);
  u0_minus.validate(geom, params.drift_minus);
  Configuration c;
  const int m = params.particles();
  c.plus.resize(m);
  c.minus.resize(m);
  for (int i = 0; i < m; ++i) {
    c.plus[i].id = i;
    c.plus[i].position = u0_plus.sample(geom, params.drift_plus, rng_plus);
  }
  for (int i = 0; i < m; ++i) {
    c.minus[i].id = i;
    c.minus[i].position = u0_minus.sample(geom, params.drift_minus, rng_minus);
  }
  return c;
}

Simulation::Simulation(const BoxGeometry& geom, const SimParams& params, const InitialProfile& u0_plus,
                       const InitialProfile& u0_minus, std::uint64_t replica)
    : geom_(geom),
      params_(params),
      motion_rng_(make_stream(params.seed, replica, Stream::motion)),
      interaction_rng_(make_stream(params.seed, replica, Stream::interaction)),
      bins_(geom, params.delta(geom.dim())) {
  params_.validate(geom.dim());
  potential_ = make_potential(geom.dim(), params.lambda, params.delta(geom.dim()), params.N);
  Rng rp = make_stream(params.seed, replica, Stream::init_plus);
  Rng rm = make_stream(params.seed, replica, Stream::init_minus);
  config_ = init(geom, params_, u0_plus, u0_minus, rp, rm);
  total_steps_ = params_.steps();
  if (params_.scheme == InteractionScheme::bridge && params_.lambda > 0.0) {
    const double per_step = potential_.pair_rate() * params_.dt;
    int levels = 0;
    while (levels < 62 && per_step / std::ldexp(1.0, levels) > params_.max_substep_probability) ++levels;
    if (levels > params_.max_substep_levels) {
      if (!params_.allow_unresolved) {
        throw NumericalRefusal("interaction sub-grid needs 2^" + std::to_string(levels) +
                               " sub-steps per step (pair rate * dt = " + std::to_string(per_step) +
                               ") but at most 2^" + std::to_string(params_.max_substep_levels) + " are allowed");
      }
      levels = params_.max_substep_levels;
      resolved_ = false;
    }
    levels_ = levels;
  }
  if (params_.scheme == InteractionScheme::occupation) {
    // s = dt (1 - cos theta) / 2 removes the endpoint singularities of q.
    const QuadratureRule q = gauss_legendre(25, 0.0, std::numbers::pi);
    for (std::size_t k = 0; k < q.nodes.size(); ++k) {
      occ_nodes_.push_back(0.5 * params_.dt * (1.0 - std::cos(q.nodes[k])));
      occ_weights_.push_back(q.weights[k] * 0.5 * params_.dt * std::sin(q.nodes[k]));
    }
  }
}

void Simulation::annihilate(int plus_id, int minus_id, double t, const Point& x, const Point& y) {
  auto& a = config_.plus[plus_id];
  auto& b = config_.minus[minus_id];
  require(a.status == Status::active && b.status == Status::active, "annihilation of an inactive particle");
  // Sub-step times are t0 + k tau; keep rounding from pushing them past the step end.
  t = std::min(t, (steps_done_ + 1) * params_.dt);
  a.status = b.status = Status::annihilated;
  a.event_time = b.event_time = t;
  a.partner = minus_id;
  b.partner = plus_id;
  a.position = x;
  b.position = y;
  EventRecord e;
  e.time = t;
  e.kind = EventKind::annihilation;
  e.id = plus_id;
  e.partner = minus_id;
  e.x = x;
  e.y = y;
  events_.push_back(e);
}

void Simulation::interact_bridge(double t0, std::vector<Visit>& visits) {
  if (visits.empty()) return;
  std::stable_sort(visits.begin(), visits.end(), [](const Visit& a, const Visit& b) { return a.sub < b.sub; });
  const double tau = params_.dt / std::ldexp(1.0, levels_);
  const double n2 = static_cast<double>(params_.N) * params_.N;
  std::size_t g = 0;
  std::vector<BinEntry> plus;
  std::vector<BinEntry> minus;
  while (g < visits.size()) {
    std::size_t e = g;
    while (e < visits.size() && visits[e].sub == visits[g].sub) ++e;
    plus.clear();
    minus.clear();
    for (std::size_t i = g; i < e; ++i) {
      const Visit& v = visits[i];
      if (config_.side(v.side)[v.id].status != Status::active) continue;
      (v.side == Side::plus ? plus : minus).push_back({v.position, v.id});
    }
    if (!plus.empty() && !minus.empty()) {
      auto find = [](const std::vector<BinEntry>& list, int id) -> const Point& {
        for (const auto& b : list) {
          if (b.id == id) return b.position;
        }
        throw ContractViolation("interaction: missing visit");
      };
      bins_.rebuild(plus, minus);
      const auto pairs = bins_.interacting_pairs(potential_);
      auto tested = [&](const PairCandidate& p) {
        const double w = tau * p.ell / n2;
        interaction_integral_ += w;
        if (observer_) observer_(find(plus, p.plus), find(minus, p.minus), w);
      };
      const auto fired = sample_short_window(potential_, pairs, tau, interaction_rng_, tested);
      for (const auto& ev : fired) {
        annihilate(ev.plus, ev.minus, t0 + visits[g].sub * tau, find(plus, ev.plus), find(minus, ev.minus));
      }
    }
    g = e;
  }
}

void Simulation::interact_endpoint(double t0) {
  bins_.rebuild(config_);
  const auto pairs = bins_.interacting_pairs(potential_, config_);
  const double n2 = static_cast<double>(params_.N) * params_.N;
  for (const auto& p : pairs) {
    const double w = params_.dt * p.ell / n2;
    interaction_integral_ += w;
    if (observer_) observer_(config_.plus[p.plus].position, config_.minus[p.minus].position, w);
  }
  const auto fired = annihilate_window(potential_, config_, bins_, t0, params_.dt, interaction_rng_);
  for (const auto& ev : fired) {
    EventRecord e;
    e.time = std::min(t0 + ev.offset, (steps_done_ + 1) * params_.dt);
    config_.plus[ev.plus].event_time = config_.minus[ev.minus].event_time = e.time;
    e.kind = EventKind::annihilation;
    e.id = ev.plus;
    e.partner = ev.minus;
    e.x = config_.plus[ev.plus].position;
    e.y = config_.minus[ev.minus].position;
    events_.push_back(e);
  }
}

bool Simulation::occupation_density(double w0, double w1, double s, std::vector<double>& q) const {
  // Nearest point of the unfolded line that folds onto the interface.
  const double mid = 0.5 * (w0 + w1);
  const double image = 2.0 * std::round(0.5 * mid);
  const double lo = std::min(w0, w1) - image;
  const double hi = std::max(w0, w1) - image;
  const double gap = lo > 0.0 ? lo : (hi < 0.0 ? -hi : 0.0);
  const double dt = params_.dt;
  if (gap > 6.0 * std::sqrt(s * dt)) return false;
  q.resize(occ_nodes_.size());
  for (std::size_t k = 0; k < occ_nodes_.size(); ++k) {
    const double t = occ_nodes_[k];
    const double mean = w0 + (w1 - w0) * t / dt - image;
    const double var = s * t * (dt - t) / dt;
    q[k] = var > 0.0 ? std::exp(-0.5 * mean * mean / var) / std::sqrt(2.0 * std::numbers::pi * var) : 0.0;
  }
  return true;
}

void Simulation::interact_occupation(double t0, const std::vector<Occupation>& plus,
                                     const std::vector<Occupation>& minus) {
  if (plus.empty() || minus.empty()) return;
  const std::size_t nq = occ_nodes_.size();
  std::vector<double> sum_plus(nq, 0.0);
  std::vector<double> sum_minus(nq, 0.0);
  for (const auto& o : plus) {
    for (std::size_t k = 0; k < nq; ++k) sum_plus[k] += o.q[k];
  }
  for (const auto& o : minus) {
    for (std::size_t k = 0; k < nq; ++k) sum_minus[k] += o.q[k];
  }
  const double scale = 2.0 * params_.lambda / params_.N;
  std::vector<double> node_mass(nq);
  double total = 0.0;
  for (std::size_t k = 0; k < nq; ++k) {
    node_mass[k] = scale * occ_weights_[k] * sum_plus[k] * sum_minus[k];
    total += node_mass[k];
  }
  interaction_integral_ += 2.0 * total / params_.N;
  if (total <= 0.0) return;
  const int count = boost::random::poisson_distribution<int>(total)(interaction_rng_);
  if (count == 0) return;
  boost::random::discrete_distribution<std::size_t> pick_node(node_mass.begin(), node_mass.end());
  auto pick = [&](const std::vector<Occupation>& list, std::size_t k, double sum) -> int {
    double u = uniform_open(interaction_rng_) * sum;
    for (const auto& o : list) {
      u -= o.q[k];
      if (u <= 0.0) return o.id;
    }
    return list.back().id;
  };
  std::vector<std::array<std::size_t, 3>> drawn;
  for (int c = 0; c < count; ++c) {
    const std::size_t k = pick_node(interaction_rng_);
    const int i = pick(plus, k, sum_plus[k]);
    const int j = pick(minus, k, sum_minus[k]);
    drawn.push_back({k, static_cast<std::size_t>(i), static_cast<std::size_t>(j)});
  }
  std::stable_sort(drawn.begin(), drawn.end(), [](const auto& a, const auto& b) { return a[0] < b[0]; });
  for (const auto& [k, i, j] : drawn) {
    if (config_.plus[i].status != Status::active || config_.minus[j].status != Status::active) continue;
    Point x;
    x.side = Side::plus;
    Point y;
    y.side = Side::minus;
    annihilate(static_cast<int>(i), static_cast<int>(j), t0 + occ_nodes_[k], x, y);
  }
}

void Simulation::step() {
  require(!finished(), "Simulation::step: horizon reached");
  const int d = geom_.dim();
  const double dt = params_.dt;
  const double t0 = steps_done_ * dt;
  const double t1 = (steps_done_ + 1) * dt;
  const bool interact = params_.lambda > 0.0;
  const bool bridge = interact && params_.scheme == InteractionScheme::bridge;
  const bool occupation = interact && params_.scheme == InteractionScheme::occupation;
  const double delta = potential_.delta;
  const double tau = dt / std::ldexp(1.0, levels_);

  std::vector<Visit> visits;
  std::vector<EventRecord> harvests;
  std::vector<InterfaceVisit> found;
  std::vector<double> times;
  std::vector<Coords> tangential;
  std::vector<Occupation> occ_plus;
  std::vector<Occupation> occ_minus;
  std::vector<double> q;

  for (Side side : {Side::plus, Side::minus}) {
    auto& recs = config_.side(side);
    const DriftSpec& drift = params_.drift(side);
    for (auto& rec : recs) {
      StepNoise noise;
      for (int i = 0; i < d; ++i) noise.normal[i] = motion_normal_(motion_rng_);
      noise.uniform = uniform_open(motion_rng_);
      if (rec.status != Status::active) continue;
      const Coords prop = propose(geom_, rec, dt, drift, noise);
      ParticleRecord next = euler_step(geom_, rec, dt, drift, noise, t1, params_.bridge_correction);
      if (next.status == Status::harvested) {
        EventRecord e;
        e.time = t1;
        e.kind = EventKind::harvest;
        e.side = side;
        e.id = rec.id;
        e.x = next.position;
        harvests.push_back(e);
        rec = next;
        continue;
      }
      if (occupation && occupation_density(rec.position.coords[0], prop[0], drift.s, q)) {
        (side == Side::plus ? occ_plus : occ_minus).push_back({rec.id, q});
      }
      if (bridge) {
        found.clear();
        bridge_interface_visits(rec.position.coords[d - 1], prop[d - 1], drift.s, dt, levels_, delta,
                                params_.prune_eps, interaction_rng_, interaction_normal_, found);
        if (!found.empty()) {
          times.clear();
          for (const auto& v : found) times.push_back(v.index * tau);
          if (d >= 2) {
            bridge_tangential(d, rec.position.coords, prop, drift.s, dt, times, interaction_rng_,
                              interaction_normal_, tangential);
          }
          for (std::size_t k = 0; k < found.size(); ++k) {
            Visit v;
            v.sub = found[k].index;
            v.side = side;
            v.id = rec.id;
            v.position.side = side;
            for (int i = 0; i < d - 1; ++i) v.position.coords[i] = tangential[k][i];
            v.position.coords[d - 1] = side == Side::plus ? found[k].distance : -found[k].distance;
            visits.push_back(v);
          }
        }
      }
      rec = next;
    }
  }
  ++config_.generation;
  if (bridge) {
    interact_bridge(t0, visits);
  } else if (occupation) {
    interact_occupation(t0, occ_plus, occ_minus);
  } else if (interact) {
    interact_endpoint(t0);
  }
  events_.insert(events_.end(), harvests.begin(), harvests.end());
  ++steps_done_;
  config_.sim_time = t1;
  ++config_.generation;
}

bool is_save_step(int step, int total_steps, int stride) { return step % stride == 0 || step == total_steps; }

RunResult run(const BoxGeometry& geom, const SimParams& params, const InitialProfile& u0_plus,
              const InitialProfile& u0_minus, std::uint64_t replica) {
  Simulation sim(geom, params, u0_plus, u0_minus, replica);
  RunResult out;
  auto save = [&] { out.trajectory.push_back({sim.time(), sim.measure(Side::plus), sim.measure(Side::minus)}); };
  save();
  while (!sim.finished()) {
    sim.step();
    if (is_save_step(sim.steps_done(), sim.total_steps(), params.save_stride)) save();
  }
  out.events = sim.events();
  out.final_config = sim.config();
  out.interaction_integral = sim.interaction_integral();
  out.resolved = sim.resolved();
  return out;
}

}  // namespace annihil
