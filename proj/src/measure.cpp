#include "annihil/measure.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <tuple>

#include "annihil/errors.hpp"

namespace annihil {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kMassTolerance = 1e-9;

double normal_frequency(BoundaryPair bc, int k) { return bc == BoundaryPair::neumann_both ? k * kPi : (k + 0.5) * kPi; }

void check_mass(double m, const char* who) {
  if (m > 1.0 + kMassTolerance) {
    throw ContractViolation(std::string(who) + ": measure mass " + std::to_string(m) + " exceeds 1");
  }
}

}  // namespace

double TestFunction::operator()(const Point& p) const {
  const double a = normal_coordinate(p, dim);
  double v = std::cos(normal_frequency(normal_bc, normal_mode) * a);
  if (dim == 2) v *= std::cos(tangential_mode * kPi * p.coords[0]);
  return v;
}

Coords TestFunction::gradient(const Point& p) const {
  Coords g{};
  const double a = normal_coordinate(p, dim);
  const double w = normal_frequency(normal_bc, normal_mode);
  const double tang = dim == 2 ? std::cos(tangential_mode * kPi * p.coords[0]) : 1.0;
  // d/dx_d of cos(w |x_d|) = -w sin(w a) sign(x_d).
  const double sign = p.coords[dim - 1] < 0 ? -1.0 : 1.0;
  g[dim - 1] = -w * std::sin(w * a) * sign * tang;
  if (dim == 2) {
    g[0] = -tangential_mode * kPi * std::sin(tangential_mode * kPi * p.coords[0]) * std::cos(w * a);
  }
  return g;
}

TestBasis::TestBasis(const BoxGeometry& geom, int n_max, double diffusion_plus, double diffusion_minus)
    : n_max_(n_max) {
  require(n_max >= 1, "TestBasis: n_max must be positive");
  require(geom.dim() <= 2, "TestBasis supports d = 1 and d = 2");
  const int d = geom.dim();
  for (Side side : {Side::plus, Side::minus}) {
    const double s = side == Side::plus ? diffusion_plus : diffusion_minus;
    const BoundaryPair bc = geom.harvest(side) ? BoundaryPair::neumann0_dirichlet1 : BoundaryPair::neumann_both;
    std::vector<std::tuple<double, int, int>> cand;
    const int reach = n_max + 1;
    for (int m = 0; m < (d == 2 ? reach : 1); ++m) {
      for (int k = 0; k < reach; ++k) {
        const double w = normal_frequency(bc, k);
        cand.emplace_back(0.5 * s * (w * w + m * m * kPi * kPi), m, k);
      }
    }
    std::sort(cand.begin(), cand.end());
    auto& out = side == Side::plus ? plus_ : minus_;
    for (int n = 0; n < n_max; ++n) {
      TestFunction tf;
      tf.side = side;
      tf.dim = d;
      tf.eigenvalue = std::get<0>(cand[n]);
      tf.tangential_mode = std::get<1>(cand[n]);
      tf.normal_mode = std::get<2>(cand[n]);
      tf.normal_bc = bc;
      tf.diffusion = s;
      out.push_back(tf);
    }
  }
}

double DiscreteMeasure::mass() const {
  if (uniform_weight) return *uniform_weight * static_cast<double>(points.size());
  double m = 0.0;
  for (double w : weights) m += w;
  return m;
}

double DiscreteMeasure::pair(const std::function<double(const Point&)>& f) const {
  double s = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) s += weights[i] * f(points[i]);
  return s;
}

DiscreteMeasure to_measure(const EmpiricalMeasure& mu) {
  DiscreteMeasure out;
  out.side = mu.side;
  out.points = mu.atoms;
  out.weights.assign(mu.atoms.size(), mu.weight);
  out.uniform_weight = mu.weight;
  return out;
}

MeasurePair to_measure_pair(const EmpiricalMeasure& plus, const EmpiricalMeasure& minus) {
  return {to_measure(plus), to_measure(minus)};
}

double grid_pairing(const GridFunction& u, const DriftSpec& drift, const std::function<double(const Point&)>& f) {
  const Grid& g = u.grid;
  double s = 0.0;
  for (int it = 0; it < g.tangential_nodes(); ++it) {
    for (int j = 0; j <= g.n_normal; ++j) {
      const Point p = g.point(u.side, it, j);
      s += g.weight(it, j) * u.values[g.index(it, j)] * drift.rho(p, g.dim) * f(p);
    }
  }
  return s;
}

DiscreteMeasure density_to_measure(const GridFunction& u, const DriftSpec& drift) {
  const Grid& g = u.grid;
  DiscreteMeasure out;
  out.side = u.side;
  for (int it = 0; it < g.tangential_nodes(); ++it) {
    for (int j = 0; j <= g.n_normal; ++j) {
      const double v = u.values[g.index(it, j)];
      if (v < -kMassTolerance) throw NumericalRefusal("density_to_measure: negative density value");
      const Point p = g.point(u.side, it, j);
      const double w = g.weight(it, j) * v * drift.rho(p, g.dim);
      if (w == 0.0) continue;
      out.points.push_back(p);
      out.weights.push_back(w);
    }
  }
  check_mass(out.mass(), "density_to_measure");
  return out;
}

Pairings pairings(const MeasurePair& mu, const TestBasis& basis) {
  Pairings p;
  p.mass_plus = mu.plus.mass();
  p.mass_minus = mu.minus.mass();
  check_mass(p.mass_plus, "rho_distance");
  check_mass(p.mass_minus, "rho_distance");
  p.plus.resize(basis.size());
  p.minus.resize(basis.size());
  for (int n = 1; n <= basis.size(); ++n) {
    p.plus[n - 1] = mu.plus.pair(basis.f(n));
    p.minus[n - 1] = mu.minus.pair(basis.g(n));
  }
  return p;
}

WeakDistance rho_distance(const Pairings& mu, const Pairings& nu) {
  require(mu.plus.size() == nu.plus.size(), "rho_distance: pairings from different bases");
  WeakDistance out;
  double scale = 1.0;
  for (std::size_t n = 0; n < mu.plus.size(); ++n) {
    scale *= 0.5;
    out.value += scale * (std::abs(mu.plus[n] - nu.plus[n]) + std::abs(mu.minus[n] - nu.minus[n]));
  }
  out.tail_bound = scale * (mu.mass_plus + mu.mass_minus + nu.mass_plus + nu.mass_minus);
  return out;
}

WeakDistance rho_distance(const MeasurePair& mu, const MeasurePair& nu, const TestBasis& basis) {
  return rho_distance(pairings(mu, basis), pairings(nu, basis));
}

}  // namespace annihil
