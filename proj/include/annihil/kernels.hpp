#pragma once

#include <functional>
#include <vector>

#include "annihil/geometry.hpp"

namespace annihil {

enum class BoundaryPair { neumann_both, neumann0_dirichlet1 };

/// Cosine eigenbasis of (s/2) d^2/da^2 on [0, 1].
///
/// neumann_both:        phi_0 = 1, phi_k = sqrt(2) cos(k pi a), k >= 1.
/// neumann0_dirichlet1: phi_k = sqrt(2) cos((k + 1/2) pi a), k >= 0.
///
/// Eigenvalues are mu_k = s * omega_k^2 / 2. Kernels are truncated at the
/// smallest K whose tail bound sum_{k >= K} 2 exp(-mu_k t) is below `tol`;
/// for t < 1e-3 the method of images is used instead. When `fixed_modes` is
/// positive it replaces the adaptive choice and evaluations that would need
/// more modes are refused.
class Eigenbasis1D {
 public:
  explicit Eigenbasis1D(BoundaryPair bc, double diffusion = 1.0, double tol = 1e-10, int fixed_modes = 0);

  BoundaryPair bc() const { return bc_; }
  double diffusion() const { return s_; }
  double tolerance() const { return tol_; }

  double frequency(int k) const;
  double eigenvalue(int k) const;
  double eval(int k, double a) const;
  double deriv(int k, double a) const;
  double second_deriv(int k, double a) const;
  /// Integral of phi_k over [0, 1].
  double integral(int k) const;

  /// sum_{k >= K} 2 exp(-mu_k t).
  double tail_bound(double t, int K) const;
  /// Smallest K with tail_bound(t, K) < tol.
  int modes_for(double t) const;
  /// Number of modes to use at time t; refuses when a fixed truncation is too small.
  int modes(double t) const;

  double kernel(double t, double a, double b) const;
  double kernel_spectral(double t, double a, double b, int K) const;
  double kernel_images(double t, double a, double b) const;
  /// Integral of kernel(t, a, .) over [0, 1].
  double survival(double t, double a) const;

  static constexpr double kImageThreshold = 1e-3;

 private:
  BoundaryPair bc_;
  double s_;
  double tol_;
  int fixed_modes_;
};

/// A uniform tensor grid on one side. Tangential coordinates take the nodes
/// i / n_tangential (d - 1 of them); the normal coordinate is the distance to
/// the interface, a = j / n_normal, so a = 0 is the interface and a = 1 the
/// far face. Values are stored with the normal index fastest.
struct Grid {
  int dim = 1;
  int n_tangential = 0;
  int n_normal = 0;

  static Grid make(int dim, int n_tangential, int n_normal);

  int tangential_nodes() const;
  std::size_t size() const;
  std::size_t index(int it, int j) const { return static_cast<std::size_t>(it) * (n_normal + 1) + j; }
  double normal_node(int j) const { return static_cast<double>(j) / n_normal; }
  double tangential_node(int i) const { return n_tangential > 0 ? static_cast<double>(i) / n_tangential : 0.0; }
  /// Point on `side` at flattened tangential index `it` and normal index `j`.
  Point point(Side side, int it, int j) const;
  /// Trapezoid weight of node (it, j) for integrals over the box.
  double weight(int it, int j) const;
  /// Trapezoid weight of the tangential node `it` for integrals over I.
  double tangential_weight(int it) const;
};

struct GridFunction {
  Grid grid;
  Side side = Side::plus;
  std::vector<double> values;

  static GridFunction sample(const Grid& grid, Side side, const std::function<double(const Point&)>& f);
};

/// Local normal coordinate (distance to the interface) of a point.
inline double normal_coordinate(const Point& p, int dim) {
  const double v = p.coords[dim - 1];
  return v < 0 ? -v : v;
}

/// Product transition density of reflected Brownian motion (diffusion s) on
/// one side: tangential factors neumann_both, normal factor
/// neumann0_dirichlet1 when that side harvests, neumann_both otherwise.
class ProductKernel {
 public:
  ProductKernel(const BoxGeometry& geom, Side side, double diffusion = 1.0, double tol = 1e-10,
                int fixed_modes = 0);

  int dim() const { return dim_; }
  Side side() const { return side_; }
  const Eigenbasis1D& tangential() const { return tangential_; }
  const Eigenbasis1D& normal() const { return normal_; }

  double eval(double t, const Point& x, const Point& y) const;
  /// Integral of eval(t, x, .) over the box.
  double survival(double t, const Point& x) const;

 private:
  int dim_;
  Side side_;
  Eigenbasis1D tangential_;
  Eigenbasis1D normal_;
};

double kernel_eval(const ProductKernel& k, double t, const Point& x, const Point& y);

/// kernel_eval(t, x, z) for z on the interface with tangential coordinates `z`.
double surface_kernel(const ProductKernel& k, double t, const Point& x, const Coords& z);

/// P_t f on the grid through the exact discrete cosine transform associated
/// with the grid (trapezoid-orthogonal for neumann_both, half-sample shifted
/// for neumann0_dirichlet1). The value on a Dirichlet face is set to zero.
GridFunction semigroup_apply(const ProductKernel& k, double t, const GridFunction& f);

/// Continuous cosine coefficients c[m][k] of a function on one side for
/// tangential modes 0..Mt-1 (per tangential axis) and normal modes 0..Kn-1.
struct ModalCoefficients {
  int dim = 1;
  int tangential_modes = 1;
  int normal_modes = 0;
  /// Indexed by (m1 [, m2], k) with k fastest.
  std::vector<double> c;

  double& at(int m1, int m2, int k);
  double at(int m1, int m2, int k) const;
};

ModalCoefficients project(const ProductKernel& k, const std::function<double(const Point&)>& f,
                          int tangential_modes, int normal_modes);

/// Evaluate sum_{m,k} c exp(-mu t) phi at point x.
double evaluate_modes(const ProductKernel& k, const ModalCoefficients& c, double t, const Point& x);

/// P_t f for a function given in closed form: continuous projection onto as
/// many modes as the tail bound requires at time t, evaluated at the grid
/// nodes. At t = 0 the samples of f are returned.
GridFunction semigroup_apply(const ProductKernel& k, double t, const std::function<double(const Point&)>& f,
                             const Grid& grid);

}  // namespace annihil
