#include "annihil/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "annihil/errors.hpp"
#include "annihil/quadrature.hpp"

namespace annihil {

namespace {
constexpr double kPi = std::numbers::pi;
constexpr double kSqrt2 = std::numbers::sqrt2;
}  // namespace

Eigenbasis1D::Eigenbasis1D(BoundaryPair bc, double diffusion, double tol, int fixed_modes)
    : bc_(bc), s_(diffusion), tol_(tol), fixed_modes_(fixed_modes) {
  require(diffusion > 0.0 && std::isfinite(diffusion), "Eigenbasis1D: diffusion must be positive");
  require(tol > 0.0, "Eigenbasis1D: tolerance must be positive");
  require(fixed_modes >= 0, "Eigenbasis1D: fixed mode count must be nonnegative");
}

double Eigenbasis1D::frequency(int k) const {
  return bc_ == BoundaryPair::neumann_both ? k * kPi : (k + 0.5) * kPi;
}

double Eigenbasis1D::eigenvalue(int k) const {
  const double w = frequency(k);
  return 0.5 * s_ * w * w;
}

double Eigenbasis1D::eval(int k, double a) const {
  if (bc_ == BoundaryPair::neumann_both && k == 0) return 1.0;
  return kSqrt2 * std::cos(frequency(k) * a);
}

double Eigenbasis1D::deriv(int k, double a) const {
  if (bc_ == BoundaryPair::neumann_both && k == 0) return 0.0;
  const double w = frequency(k);
  return -kSqrt2 * w * std::sin(w * a);
}

double Eigenbasis1D::second_deriv(int k, double a) const {
  const double w = frequency(k);
  return -w * w * eval(k, a);
}

double Eigenbasis1D::integral(int k) const {
  if (bc_ == BoundaryPair::neumann_both) return k == 0 ? 1.0 : 0.0;
  const double w = frequency(k);
  return kSqrt2 * std::sin(w) / w;
}

double Eigenbasis1D::tail_bound(double t, int K) const {
  require(t > 0.0, "tail_bound: t must be positive");
  double s = 0.0;
  for (int k = K;; ++k) {
    const double term = 2.0 * std::exp(-eigenvalue(k) * t);
    s += term;
    if (term < 1e-6 * tol_ * 1e-6 || term == 0.0) break;
  }
  return s;
}

int Eigenbasis1D::modes_for(double t) const {
  require(t > 0.0, "modes_for: t must be positive");
  std::vector<double> terms;
  for (int k = 0;; ++k) {
    const double term = 2.0 * std::exp(-eigenvalue(k) * t);
    terms.push_back(term);
    if (term < 1e-12 * tol_ || term == 0.0) break;
  }
  double suffix = 0.0;
  int K = static_cast<int>(terms.size());
  for (int k = static_cast<int>(terms.size()) - 1; k >= 0; --k) {
    suffix += terms[k];
    if (suffix >= tol_) break;
    K = k;
  }
  return std::max(K, 1);
}

int Eigenbasis1D::modes(double t) const {
  const int needed = modes_for(t);
  if (fixed_modes_ > 0) {
    if (fixed_modes_ < needed) {
      throw NumericalRefusal("spectral truncation K = " + std::to_string(fixed_modes_) +
                             " is too small at t = " + std::to_string(t) + "; requires K >= " +
                             std::to_string(needed));
    }
    return fixed_modes_;
  }
  return needed;
}

double Eigenbasis1D::kernel_spectral(double t, double a, double b, int K) const {
  double s = 0.0;
  for (int k = 0; k < K; ++k) s += std::exp(-eigenvalue(k) * t) * eval(k, a) * eval(k, b);
  return s;
}

double Eigenbasis1D::kernel_images(double t, double a, double b) const {
  require(t > 0.0, "kernel: t must be positive");
  const double v = s_ * t;
  const double norm = 1.0 / std::sqrt(2.0 * kPi * v);
  const int nmax = static_cast<int>(std::ceil(1.0 + 0.5 * std::sqrt(80.0 * v))) + 1;
  const bool mixed = bc_ == BoundaryPair::neumann0_dirichlet1;
  double s = 0.0;
  for (int n = -nmax; n <= nmax; ++n) {
    const double z1 = a - b - 2.0 * n;
    const double z2 = a + b - 2.0 * n;
    const double term = std::exp(-z1 * z1 / (2.0 * v)) + std::exp(-z2 * z2 / (2.0 * v));
    s += (mixed && (n % 2 != 0)) ? -term : term;
  }
  return norm * s;
}

double Eigenbasis1D::kernel(double t, double a, double b) const {
  require(t > 0.0, "kernel: t must be positive");
  if (t < kImageThreshold) return kernel_images(t, a, b);
  return kernel_spectral(t, a, b, modes(t));
}

double Eigenbasis1D::survival(double t, double a) const {
  require(t > 0.0, "survival: t must be positive");
  if (bc_ == BoundaryPair::neumann_both) return 1.0;
  if (t < kImageThreshold) {
    // Integrate the image sum term by term: each Gaussian contributes a
    // difference of normal CDFs over [0, 1].
    const double sd = std::sqrt(s_ * t);
    const int nmax = static_cast<int>(std::ceil(1.0 + 0.5 * std::sqrt(80.0 * s_ * t))) + 1;
    auto cdf = [](double z) { return 0.5 * std::erfc(-z / kSqrt2); };
    double s = 0.0;
    for (int n = -nmax; n <= nmax; ++n) {
      // int_0^1 phi(a - b - 2n) db + int_0^1 phi(a + b - 2n) db
      const double t1 = cdf((a - 2.0 * n) / sd) - cdf((a - 1.0 - 2.0 * n) / sd);
      const double t2 = cdf((a + 1.0 - 2.0 * n) / sd) - cdf((a - 2.0 * n) / sd);
      s += (n % 2 != 0) ? -(t1 + t2) : (t1 + t2);
    }
    return s;
  }
  const int K = modes(t);
  double s = 0.0;
  for (int k = 0; k < K; ++k) s += std::exp(-eigenvalue(k) * t) * eval(k, a) * integral(k);
  return s;
}

Grid Grid::make(int dim, int n_tangential, int n_normal) {
  require(dim >= 1 && dim <= kMaxDim, "Grid: bad dimension");
  require(n_normal >= 2, "Grid: need at least two normal intervals");
  require(dim == 1 || n_tangential >= 2, "Grid: need at least two tangential intervals");
  Grid g;
  g.dim = dim;
  g.n_tangential = dim == 1 ? 0 : n_tangential;
  g.n_normal = n_normal;
  return g;
}

int Grid::tangential_nodes() const {
  int n = 1;
  for (int i = 0; i < dim - 1; ++i) n *= (n_tangential + 1);
  return n;
}

std::size_t Grid::size() const {
  return static_cast<std::size_t>(tangential_nodes()) * (n_normal + 1);
}

Point Grid::point(Side side, int it, int j) const {
  Point p;
  p.side = side;
  if (dim == 2) {
    p.coords[0] = tangential_node(it);
  } else if (dim == 3) {
    p.coords[0] = tangential_node(it / (n_tangential + 1));
    p.coords[1] = tangential_node(it % (n_tangential + 1));
  }
  const double a = normal_node(j);
  p.coords[dim - 1] = side == Side::plus ? a : -a;
  return p;
}

namespace {
double trapezoid_weight(int i, int n) {
  const double h = 1.0 / n;
  return (i == 0 || i == n) ? 0.5 * h : h;
}
}  // namespace

double Grid::tangential_weight(int it) const {
  if (dim == 1) return 1.0;
  if (dim == 2) return trapezoid_weight(it, n_tangential);
  return trapezoid_weight(it / (n_tangential + 1), n_tangential) *
         trapezoid_weight(it % (n_tangential + 1), n_tangential);
}

double Grid::weight(int it, int j) const {
  return tangential_weight(it) * trapezoid_weight(j, n_normal);
}

GridFunction GridFunction::sample(const Grid& grid, Side side, const std::function<double(const Point&)>& f) {
  GridFunction g;
  g.grid = grid;
  g.side = side;
  g.values.resize(grid.size());
  for (int it = 0; it < grid.tangential_nodes(); ++it) {
    for (int j = 0; j <= grid.n_normal; ++j) g.values[grid.index(it, j)] = f(grid.point(side, it, j));
  }
  return g;
}

ProductKernel::ProductKernel(const BoxGeometry& geom, Side side, double diffusion, double tol, int fixed_modes)
    : dim_(geom.dim()),
      side_(side),
      tangential_(BoundaryPair::neumann_both, diffusion, tol, fixed_modes),
      normal_(geom.harvest(side) ? BoundaryPair::neumann0_dirichlet1 : BoundaryPair::neumann_both, diffusion, tol,
              fixed_modes) {}

double ProductKernel::eval(double t, const Point& x, const Point& y) const {
  require(t > 0.0, "kernel_eval: t must be positive");
  double v = normal_.kernel(t, normal_coordinate(x, dim_), normal_coordinate(y, dim_));
  for (int i = 0; i < dim_ - 1; ++i) v *= tangential_.kernel(t, x.coords[i], y.coords[i]);
  return v;
}

double ProductKernel::survival(double t, const Point& x) const {
  return normal_.survival(t, normal_coordinate(x, dim_));
}

double kernel_eval(const ProductKernel& k, double t, const Point& x, const Point& y) { return k.eval(t, x, y); }

double surface_kernel(const ProductKernel& k, double t, const Point& x, const Coords& z) {
  Point y;
  y.side = x.side;
  for (int i = 0; i < k.dim() - 1; ++i) y.coords[i] = z[i];
  y.coords[k.dim() - 1] = 0.0;
  return k.eval(t, x, y);
}

namespace {

// Matrix of P_t along one axis in the grid's exact discrete cosine basis.
std::vector<double> axis_operator(const Eigenbasis1D& basis, double t, int n) {
  const int nodes = n + 1;
  std::vector<double> m(static_cast<std::size_t>(nodes) * nodes, 0.0);
  const double h = 1.0 / n;
  if (basis.bc() == BoundaryPair::neumann_both) {
    for (int k = 0; k <= n; ++k) {
      const double decay = std::exp(-basis.eigenvalue(k) * t);
      const double norm2 = (k == 0 || k == n) ? ((k == 0) ? 1.0 : 2.0) : 1.0;
      for (int j = 0; j < nodes; ++j) {
        const double pj = basis.eval(k, j * h);
        for (int jj = 0; jj < nodes; ++jj) {
          const double w = (jj == 0 || jj == n) ? 0.5 * h : h;
          m[j * nodes + jj] += decay * pj * basis.eval(k, jj * h) * w / norm2;
        }
      }
    }
  } else {
    for (int k = 0; k < n; ++k) {
      const double decay = std::exp(-basis.eigenvalue(k) * t);
      for (int j = 0; j < n; ++j) {
        const double pj = basis.eval(k, j * h);
        for (int jj = 0; jj < n; ++jj) {
          const double w = jj == 0 ? 0.5 * h : h;
          m[j * nodes + jj] += decay * pj * basis.eval(k, jj * h) * w;
        }
      }
    }
  }
  return m;
}

}  // namespace

GridFunction semigroup_apply(const ProductKernel& k, double t, const GridFunction& f) {
  require(t >= 0.0, "semigroup_apply: t must be nonnegative");
  require(f.grid.dim == k.dim(), "semigroup_apply: grid dimension mismatch");
  const Grid& g = f.grid;
  GridFunction out = f;
  if (t == 0.0) return out;
  const int nn = g.n_normal + 1;
  const int nt = g.tangential_nodes();

  const std::vector<double> mn = axis_operator(k.normal(), t, g.n_normal);
  std::vector<double> buf(nn);
  for (int it = 0; it < nt; ++it) {
    for (int j = 0; j < nn; ++j) {
      double s = 0.0;
      for (int jj = 0; jj < nn; ++jj) s += mn[j * nn + jj] * out.values[g.index(it, jj)];
      buf[j] = s;
    }
    for (int j = 0; j < nn; ++j) out.values[g.index(it, j)] = buf[j];
  }
  if (g.dim >= 2) {
    const int n1 = g.n_tangential + 1;
    const std::vector<double> mt = axis_operator(k.tangential(), t, g.n_tangential);
    const int axes = g.dim - 1;
    for (int axis = 0; axis < axes; ++axis) {
      // Stride of this axis in the flattened tangential index.
      const int stride = (axes == 2 && axis == 0) ? n1 : 1;
      std::vector<double> line(n1);
      for (int it = 0; it < nt; ++it) {
        const int pos = (it / stride) % n1;
        if (pos != 0) continue;
        for (int j = 0; j < nn; ++j) {
          for (int a = 0; a < n1; ++a) {
            double s = 0.0;
            for (int b = 0; b < n1; ++b) s += mt[a * n1 + b] * out.values[g.index(it + b * stride, j)];
            line[a] = s;
          }
          for (int a = 0; a < n1; ++a) out.values[g.index(it + a * stride, j)] = line[a];
        }
      }
    }
  }
  if (k.normal().bc() == BoundaryPair::neumann0_dirichlet1) {
    for (int it = 0; it < nt; ++it) out.values[g.index(it, g.n_normal)] = 0.0;
  }
  return out;
}

double& ModalCoefficients::at(int m1, int m2, int k) {
  return c[(static_cast<std::size_t>(m1) * (dim == 3 ? tangential_modes : 1) + m2) * normal_modes + k];
}

double ModalCoefficients::at(int m1, int m2, int k) const {
  return c[(static_cast<std::size_t>(m1) * (dim == 3 ? tangential_modes : 1) + m2) * normal_modes + k];
}

ModalCoefficients project(const ProductKernel& kern, const std::function<double(const Point&)>& f,
                          int tangential_modes, int normal_modes) {
  const int d = kern.dim();
  require(normal_modes >= 1, "project: need at least one normal mode");
  ModalCoefficients out;
  out.dim = d;
  out.tangential_modes = d == 1 ? 1 : tangential_modes;
  out.normal_modes = normal_modes;
  const int m1n = d >= 2 ? out.tangential_modes : 1;
  const int m2n = d == 3 ? out.tangential_modes : 1;
  out.c.assign(static_cast<std::size_t>(m1n) * m2n * normal_modes, 0.0);

  const QuadratureRule qn = composite_gauss(20, normal_modes / 8 + 4, 0.0, 1.0);
  const QuadratureRule qt = composite_gauss(20, out.tangential_modes / 8 + 4, 0.0, 1.0);
  const QuadratureRule q0{{0.0}, {1.0}};
  const QuadratureRule& q1 = d >= 2 ? qt : q0;
  const QuadratureRule& q2 = d == 3 ? qt : q0;

  // Normal-direction basis values at the normal quadrature nodes.
  std::vector<double> pn(qn.nodes.size() * normal_modes);
  for (std::size_t q = 0; q < qn.nodes.size(); ++q) {
    for (int k = 0; k < normal_modes; ++k) pn[q * normal_modes + k] = kern.normal().eval(k, qn.nodes[q]);
  }
  std::vector<double> line(normal_modes);
  Point p;
  p.side = kern.side();
  for (std::size_t a = 0; a < q1.nodes.size(); ++a) {
    for (std::size_t b = 0; b < q2.nodes.size(); ++b) {
      if (d >= 2) p.coords[0] = q1.nodes[a];
      if (d == 3) p.coords[1] = q2.nodes[b];
      std::fill(line.begin(), line.end(), 0.0);
      for (std::size_t q = 0; q < qn.nodes.size(); ++q) {
        p.coords[d - 1] = kern.side() == Side::plus ? qn.nodes[q] : -qn.nodes[q];
        const double v = qn.weights[q] * f(p);
        for (int k = 0; k < normal_modes; ++k) line[k] += v * pn[q * normal_modes + k];
      }
      const double wt = q1.weights[a] * q2.weights[b];
      for (int m1 = 0; m1 < m1n; ++m1) {
        const double t1 = d >= 2 ? kern.tangential().eval(m1, q1.nodes[a]) : 1.0;
        for (int m2 = 0; m2 < m2n; ++m2) {
          const double t2 = d == 3 ? kern.tangential().eval(m2, q2.nodes[b]) : 1.0;
          const double w = wt * t1 * t2;
          for (int k = 0; k < normal_modes; ++k) out.at(m1, m2, k) += w * line[k];
        }
      }
    }
  }
  return out;
}

double evaluate_modes(const ProductKernel& kern, const ModalCoefficients& c, double t, const Point& x) {
  const int d = kern.dim();
  const int m1n = d >= 2 ? c.tangential_modes : 1;
  const int m2n = d == 3 ? c.tangential_modes : 1;
  const double a = normal_coordinate(x, d);
  double s = 0.0;
  for (int m1 = 0; m1 < m1n; ++m1) {
    const double t1 = d >= 2 ? kern.tangential().eval(m1, x.coords[0]) : 1.0;
    const double mu1 = d >= 2 ? kern.tangential().eigenvalue(m1) : 0.0;
    for (int m2 = 0; m2 < m2n; ++m2) {
      const double t2 = d == 3 ? kern.tangential().eval(m2, x.coords[1]) : 1.0;
      const double mu2 = d == 3 ? kern.tangential().eigenvalue(m2) : 0.0;
      double inner = 0.0;
      for (int k = 0; k < c.normal_modes; ++k) {
        inner += c.at(m1, m2, k) * std::exp(-(kern.normal().eigenvalue(k) + mu1 + mu2) * t) *
                 kern.normal().eval(k, a);
      }
      s += t1 * t2 * inner;
    }
  }
  return s;
}

GridFunction semigroup_apply(const ProductKernel& kern, double t, const std::function<double(const Point&)>& f,
                             const Grid& grid) {
  require(t >= 0.0, "semigroup_apply: t must be nonnegative");
  require(grid.dim == kern.dim(), "semigroup_apply: grid dimension mismatch");
  if (t == 0.0) return GridFunction::sample(grid, kern.side(), f);
  const int kn = kern.normal().modes(t);
  const int kt = kern.dim() >= 2 ? kern.tangential().modes(t) : 1;
  const ModalCoefficients c = project(kern, f, kt, kn);
  GridFunction out = GridFunction::sample(grid, kern.side(), [&](const Point& p) {
    return evaluate_modes(kern, c, t, p);
  });
  if (kern.normal().bc() == BoundaryPair::neumann0_dirichlet1) {
    for (int it = 0; it < grid.tangential_nodes(); ++it) out.values[grid.index(it, grid.n_normal)] = 0.0;
  }
  return out;
}

}  // namespace annihil
