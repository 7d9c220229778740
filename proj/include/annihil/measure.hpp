#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "annihil/diffusion.hpp"
#include "annihil/geometry.hpp"
#include "annihil/kernels.hpp"
#include "annihil/particle_system.hpp"

namespace annihil {

/// A product of sup-normalized cosine eigenfunctions on one side:
/// tangential factor cos(m pi x) and normal factor taken from the side's
/// normal eigenbasis divided by sqrt(2) (or 1 for the constant mode).
struct TestFunction {
  Side side = Side::plus;
  int dim = 1;
  int tangential_mode = 0;
  int normal_mode = 0;
  BoundaryPair normal_bc = BoundaryPair::neumann_both;
  double diffusion = 1.0;
  /// mu with A phi = -mu phi for the reflected generator (s/2) Laplacian.
  double eigenvalue = 0.0;

  double operator()(const Point& p) const;
  Coords gradient(const Point& p) const;
};

/// Ordered sequences f_n (plus) and g_n (minus), n = 1..n_max, enumerated by
/// increasing eigenvalue (ties broken by tangential mode).
class TestBasis {
 public:
  TestBasis(const BoxGeometry& geom, int n_max = 16, double diffusion_plus = 1.0, double diffusion_minus = 1.0);

  int size() const { return n_max_; }
  /// 1-based, matching the weights 2^{-n}.
  const TestFunction& f(int n) const { return plus_.at(n - 1); }
  const TestFunction& g(int n) const { return minus_.at(n - 1); }
  const TestFunction& on(Side s, int n) const { return s == Side::plus ? f(n) : g(n); }

 private:
  int n_max_;
  std::vector<TestFunction> plus_;
  std::vector<TestFunction> minus_;
};

/// A finite weighted point set representing a measure on one side.
struct DiscreteMeasure {
  Side side = Side::plus;
  std::vector<Point> points;
  std::vector<double> weights;
  /// Set when every point carries this weight; mass() is then exact.
  std::optional<double> uniform_weight;

  double mass() const;
  double pair(const std::function<double(const Point&)>& f) const;
};

struct MeasurePair {
  DiscreteMeasure plus;
  DiscreteMeasure minus;

  const DiscreteMeasure& on(Side s) const { return s == Side::plus ? plus : minus; }
};

DiscreteMeasure to_measure(const EmpiricalMeasure& mu);
MeasurePair to_measure_pair(const EmpiricalMeasure& plus, const EmpiricalMeasure& minus);

/// u rho dx with composite trapezoid weights. Refuses negative values below
/// -1e-9 and masses above 1 + 1e-9.
DiscreteMeasure density_to_measure(const GridFunction& u, const DriftSpec& drift);

/// Trapezoid pairing of f with u rho dx, without sign or mass checks.
double grid_pairing(const GridFunction& u, const DriftSpec& drift, const std::function<double(const Point&)>& f);

/// The pairings <f_n, mu+> and <g_n, mu-> for n = 1..n_max, plus the masses.
struct Pairings {
  std::vector<double> plus;
  std::vector<double> minus;
  double mass_plus = 0.0;
  double mass_minus = 0.0;
};

Pairings pairings(const MeasurePair& mu, const TestBasis& basis);

struct WeakDistance {
  double value = 0.0;
  /// 2^{-n_max} times the sum of the four component masses; bounds the
  /// omitted terms n > n_max.
  double tail_bound = 0.0;
};

/// sum_n 2^{-n} (|<f_n, mu+ - nu+>| + |<g_n, mu- - nu->|) over n <= n_max.
/// Refuses components of mass above 1 + 1e-9.
WeakDistance rho_distance(const MeasurePair& mu, const MeasurePair& nu, const TestBasis& basis);
WeakDistance rho_distance(const Pairings& mu, const Pairings& nu);

}  // namespace annihil
