#include "annihil/diffusion.hpp"

#include <cmath>
#include <string>

#include "annihil/errors.hpp"

namespace annihil {

void DriftSpec::validate(int dim) const {
  require(std::isfinite(s) && s > 0.0, "DriftSpec: diffusion coefficient must be positive and finite");
  for (int i = 0; i < dim; ++i) require(std::isfinite(b[i]), "DriftSpec: drift must be finite");
}

bool DriftSpec::is_zero(int dim) const {
  for (int i = 0; i < dim; ++i) {
    if (b[i] != 0.0) return false;
  }
  return true;
}

double DriftSpec::rho(const Point& p, int dim) const {
  double e = 0.0;
  for (int i = 0; i < dim; ++i) e += b[i] * p.coords[i];
  return std::exp(2.0 * e / s);
}

Coords propose(const BoxGeometry& geom, const ParticleRecord& rec, double dt, const DriftSpec& drift,
               const StepNoise& noise) {
  const double sd = std::sqrt(drift.s * dt);
  Coords p{};
  for (int i = 0; i < geom.dim(); ++i) p[i] = rec.position.coords[i] + drift.b[i] * dt + sd * noise.normal[i];
  return p;
}

ParticleRecord euler_step(const BoxGeometry& geom, const ParticleRecord& rec, double dt, const DriftSpec& drift,
                          const StepNoise& noise, double t_end, bool bridge_correction) {
  if (!(dt > 0.0)) throw ContractViolation("euler_step: dt must be positive");
  if (rec.status != Status::active) return rec;
  const int d = geom.dim();
  const Coords p = propose(geom, rec, dt, drift, noise);
  ParticleRecord out = rec;
  const Side side = rec.position.side;
  if (geom.harvest(side)) {
    const double face = side == Side::plus ? 1.0 : -1.0;
    const double a = std::abs(face - rec.position.coords[d - 1]);
    const bool crossed = side == Side::plus ? p[d - 1] >= 1.0 : p[d - 1] <= -1.0;
    bool harvested = crossed;
    if (!crossed && bridge_correction) {
      const double b = std::abs(face - p[d - 1]);
      harvested = noise.uniform < std::exp(-2.0 * a * b / (drift.s * dt));
    }
    if (harvested) {
      Coords q = p;
      q[d - 1] = face;
      out.position = geom.reflect_into(q, side);
      out.status = Status::harvested;
      out.event_time = t_end;
      return out;
    }
  }
  out.position = geom.reflect_into(p, side);
  return out;
}

std::vector<double> local_time_estimate(const BoxGeometry& geom, const std::vector<Point>& path, double dt,
                                        double eps) {
  require(dt > 0.0, "local_time_estimate: dt must be positive");
  if (!(eps > 5.0 * std::sqrt(dt))) {
    throw NumericalRefusal("local_time_estimate: strip width " + std::to_string(eps) +
                           " must exceed 5 sqrt(dt) = " + std::to_string(5.0 * std::sqrt(dt)));
  }
  std::vector<double> L(path.size() + (path.empty() ? 1 : 0), 0.0);
  for (std::size_t k = 1; k < path.size(); ++k) {
    L[k] = L[k - 1] + (geom.interface_distance(path[k - 1]) < eps ? dt / eps : 0.0);
  }
  return L;
}

Estimate feynman_kac_u(const BoxGeometry& geom, Side side, double t, const Point& x, const DensityFunction& u0,
                       const TraceFunction& u_other, const FeynmanKacParams& params) {
  if (params.replicas < 100) {
    throw NumericalRefusal("feynman_kac_u: at least 100 replicas are required, got " +
                           std::to_string(params.replicas));
  }
  require(t >= 0.0, "feynman_kac_u: t must be nonnegative");
  require(x.side == side && geom.contains(x), "feynman_kac_u: start point must lie in the closed box of its side");
  if (!(params.eps > 5.0 * std::sqrt(params.dt))) {
    throw NumericalRefusal("feynman_kac_u: strip width must exceed 5 sqrt(dt)");
  }
  const int d = geom.dim();
  const int steps = static_cast<int>(std::ceil(t / params.dt - 1e-9));
  const double dt = steps > 0 ? t / steps : 0.0;
  const DriftSpec bm{};

  double sum = 0.0;
  double sum2 = 0.0;
  for (std::size_t r = 0; r < params.replicas; ++r) {
    Rng rng = make_stream(params.seed, r, Stream::motion);
    NormalSource normal;
    ParticleRecord rec;
    rec.position = x;
    double exponent = 0.0;
    for (int k = 0; k < steps && rec.status == Status::active; ++k) {
      if (params.lambda != 0.0 && geom.interface_distance(rec.position) < params.eps) {
        Coords z{};
        for (int i = 0; i < d - 1; ++i) z[i] = rec.position.coords[i];
        exponent += 0.5 * params.lambda * u_other(t - k * dt, z) * dt / params.eps;
      }
      StepNoise noise;
      for (int i = 0; i < d; ++i) noise.normal[i] = normal(rng);
      noise.uniform = uniform_open(rng);
      rec = euler_step(geom, rec, dt, bm, noise, (k + 1) * dt, params.bridge_correction);
    }
    const double v = rec.status == Status::active ? u0(rec.position) * std::exp(-exponent) : 0.0;
    sum += v;
    sum2 += v * v;
  }
  const double n = static_cast<double>(params.replicas);
  Estimate e;
  e.mean = sum / n;
  e.stderr_ = std::sqrt(std::max(0.0, sum2 / n - e.mean * e.mean) / (n - 1.0));
  e.samples = params.replicas;
  return e;
}

namespace {

struct BridgeRefiner {
  double s;
  double tau;  // finest sub-step length
  double delta;
  double log_prune;  // log(1 / prune_eps)
  Rng& rng;
  NormalSource& normal;
  std::vector<InterfaceVisit>& out;

  // Interval [i0, i1] of sub-grid indices with endpoint values w0, w1.
  void refine(int i0, int i1, double w0, double w1) {
    const double a0 = std::abs(w0);
    const double a1 = std::abs(w1);
    const int span = i1 - i0;
    if (a0 >= delta && a1 >= delta && (w0 > 0) == (w1 > 0)) {
      const double len = span * tau;
      if (2.0 * (a0 - delta) * (a1 - delta) > log_prune * s * len) return;
    }
    if (span == 1) {
      if (a1 < delta) out.push_back({i1, a1});
      return;
    }
    const int im = i0 + span / 2;
    const double len = span * tau;
    const double wm = 0.5 * (w0 + w1) + 0.5 * std::sqrt(s * len) * normal(rng);
    refine(i0, im, w0, wm);
    refine(im, i1, wm, w1);
  }
};

}  // namespace

void bridge_interface_visits(double w0, double w1, double s, double dt, int levels, double delta, double prune_eps,
                             Rng& rng, NormalSource& normal, std::vector<InterfaceVisit>& out) {
  require(levels >= 0 && levels <= 30, "bridge_interface_visits: levels must be in 0..30");
  require(prune_eps > 0.0 && prune_eps < 1.0, "bridge_interface_visits: prune_eps must be in (0,1)");
  const int M = 1 << levels;
  BridgeRefiner r{s, dt / M, delta, std::log(1.0 / prune_eps), rng, normal, out};
  r.refine(0, M, w0, w1);
}

void bridge_tangential(int dim, const Coords& start, const Coords& end, double s, double dt,
                       const std::vector<double>& times, Rng& rng, NormalSource& normal, std::vector<Coords>& out) {
  out.assign(times.size(), Coords{});
  for (int i = 0; i < dim - 1; ++i) {
    double ta = 0.0;
    double va = start[i];
    for (std::size_t k = 0; k < times.size(); ++k) {
      const double tb = times[k];
      const double rest = dt - ta;
      double vb = end[i];
      if (rest > 0.0 && tb < dt) {
        const double frac = (tb - ta) / rest;
        const double var = s * (tb - ta) * (dt - tb) / rest;
        vb = va + frac * (end[i] - va) + std::sqrt(std::max(0.0, var)) * normal(rng);
      }
      out[k][i] = mirror_fold(vb, 0.0, 1.0);
      ta = tb;
      va = vb;
    }
  }
}

}  // namespace annihil
