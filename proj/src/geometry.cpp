#include "annihil/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "annihil/errors.hpp"
#include "annihil/quadrature.hpp"

namespace annihil {

const char* side_name(Side s) { return s == Side::plus ? "plus" : "minus"; }

BoxGeometry::BoxGeometry(int dim, bool harvest_plus, bool harvest_minus)
    : dim_(dim), harvest_plus_(harvest_plus), harvest_minus_(harvest_minus) {
  require(dim >= 1 && dim <= kMaxDim, "BoxGeometry: dimension must be 1, 2 or 3");
}

bool BoxGeometry::contains(const Point& p) const {
  for (int i = 0; i < dim_ - 1; ++i) {
    if (!(p.coords[i] >= 0.0 && p.coords[i] <= 1.0)) return false;
  }
  const double n = p.coords[dim_ - 1];
  return p.side == Side::plus ? (n >= 0.0 && n <= 1.0) : (n >= -1.0 && n <= 0.0);
}

double mirror_fold(double v, double lo, double hi) {
  const double len = hi - lo;
  double t = std::fmod(v - lo, 2.0 * len);
  if (t < 0.0) t += 2.0 * len;
  if (t > len) t = 2.0 * len - t;
  return lo + t;
}

Point BoxGeometry::reflect_into(const Coords& x, Side side) const {
  Point p;
  p.side = side;
  for (int i = 0; i < dim_ - 1; ++i) p.coords[i] = mirror_fold(x[i], 0.0, 1.0);
  p.coords[dim_ - 1] = side == Side::plus ? mirror_fold(x[dim_ - 1], 0.0, 1.0)
                                          : mirror_fold(x[dim_ - 1], -1.0, 0.0);
  return p;
}

double BoxGeometry::pair_interface_dist2(const Point& x, const Point& y) const {
  if (x.side != Side::plus || y.side != Side::minus) {
    throw ContractViolation("pair_interface_dist2: expects (plus, minus) points");
  }
  const double xn = x.coords[dim_ - 1];
  const double yn = y.coords[dim_ - 1];
  double s = xn * xn + yn * yn;
  for (int i = 0; i < dim_ - 1; ++i) {
    // The minimizing z is the midpoint, which always lies in [0, 1].
    const double diff = x.coords[i] - y.coords[i];
    s += 0.5 * diff * diff;
  }
  return s;
}

double ball_volume(int m) {
  require(m >= 1 && m <= 4, "ball_volume: m must be in 1..4");
  return std::pow(std::numbers::pi, 0.5 * m) / std::tgamma(0.5 * m + 1.0);
}

double tube_normalizer(int dim, double delta) {
  require(dim >= 1 && dim <= kMaxDim, "tube_normalizer: bad dimension");
  return std::pow(2.0, 0.5 * (dim - 1)) * ball_volume(dim + 1) * std::pow(delta, dim + 1) / 4.0;
}

TubeSpec make_tube(int dim, double delta) {
  require(delta > 0.0 && delta < 0.5, "TubeSpec: delta must be in (0, 1/2)");
  return TubeSpec{delta, tube_normalizer(dim, delta)};
}

TubeVolumeEstimate tube_volume_oracle(const BoxGeometry& geom, double delta, int cells_per_delta) {
  require(delta > 0.0 && delta < 0.5, "tube_volume_oracle: delta must be in (0, 1/2)");
  require(cells_per_delta >= 1, "tube_volume_oracle: resolution must be positive");
  const int d = geom.dim();
  const double h = delta / cells_per_delta;
  const double delta2 = delta * delta;
  const double wmax = std::sqrt(2.0) * delta;
  // Tangential offsets w = y_t - x_t on a grid of spacing h over (-wmax, wmax).
  const int nw = static_cast<int>(std::ceil(wmax / h));
  const int nx = static_cast<int>(std::ceil(1.0 / h));
  const double hx = 1.0 / nx;

  Point x;
  x.side = Side::plus;
  Point y;
  y.side = Side::minus;
  std::size_t inside = 0;

  // Iterate over all tangential cells, then the normal pair (x_d, y_d).
  const int nt = d - 1;
  std::array<int, kMaxDim> ix{};
  std::array<int, kMaxDim> iw{};
  for (int k = 0; k < nt; ++k) iw[k] = -nw;
  bool more = true;
  while (more) {
    bool valid = true;
    for (int k = 0; k < nt; ++k) {
      x.coords[k] = (ix[k] + 0.5) * hx;
      y.coords[k] = x.coords[k] + (iw[k] + 0.5) * h;
      if (y.coords[k] < 0.0 || y.coords[k] > 1.0) valid = false;
    }
    if (valid) {
      for (int a = 0; a < cells_per_delta; ++a) {
        x.coords[d - 1] = (a + 0.5) * h;
        for (int b = 0; b < cells_per_delta; ++b) {
          y.coords[d - 1] = -(b + 0.5) * h;
          if (geom.pair_interface_dist2(x, y) < delta2) ++inside;
        }
      }
    }
    // Advance the tangential odometer.
    more = false;
    for (int k = 0; k < nt && !more; ++k) {
      if (++iw[k] < nw) { more = true; break; }
      iw[k] = -nw;
      if (++ix[k] < nx) { more = true; break; }
      ix[k] = 0;
    }
  }

  TubeVolumeEstimate est;
  est.cell_volume = std::pow(h, 2) * std::pow(hx * h, nt);
  est.cells_inside = inside;
  est.volume = static_cast<double>(inside) * est.cell_volume;
  est.cells_per_delta = cells_per_delta;
  if (inside < 1000) {
    throw NumericalRefusal("tube_volume_oracle: only " + std::to_string(inside) +
                           " grid cells inside the tube; at least 1000 are required");
  }
  return est;
}

namespace {

// Integral of f over the quarter disk x_d in (0, R), -y_d in (0, R), with the
// tangential coordinates of x and y already set.
double quarter_disk(const BoxGeometry& geom, double radius, Point& x, Point& y, const PairFunction& f,
                    const QuadratureRule& r_ref, const QuadratureRule& th_ref) {
  const int d = geom.dim();
  double s = 0.0;
  for (std::size_t i = 0; i < r_ref.nodes.size(); ++i) {
    const double r = radius * r_ref.nodes[i];
    const double wr = radius * r_ref.weights[i] * r;
    double inner = 0.0;
    for (std::size_t j = 0; j < th_ref.nodes.size(); ++j) {
      const double th = th_ref.nodes[j];
      x.coords[d - 1] = r * std::cos(th);
      y.coords[d - 1] = -r * std::sin(th);
      inner += th_ref.weights[j] * f(x, y);
    }
    s += wr * inner;
  }
  return s;
}

}  // namespace

double minkowski_pair_integral(const BoxGeometry& geom, double delta, const PairFunction& f,
                               int tangential_panels) {
  require(delta > 0.0 && delta < 0.5, "minkowski_pair_integral: delta must be in (0, 1/2)");
  require(tangential_panels >= 1, "minkowski_pair_integral: panels must be positive");
  const int d = geom.dim();
  const double nu = tube_normalizer(d, delta);
  const QuadratureRule r_ref = composite_gauss(10, 2, 0.0, 1.0);
  const QuadratureRule th_ref = composite_gauss(10, 2, 0.0, 0.5 * std::numbers::pi);
  Point x;
  x.side = Side::plus;
  Point y;
  y.side = Side::minus;

  auto disk = [&](double radius) {
    return radius > 0.0 ? quarter_disk(geom, radius, x, y, f, r_ref, th_ref) : 0.0;
  };

  if (d == 1) return disk(delta) / nu;

  const double wmax = std::sqrt(2.0) * delta;
  // Integral over x_t in the box where x_t + w stays inside the unit cube.
  auto over_x = [&](const std::array<double, 2>& w, int nt) {
    std::array<QuadratureRule, 2> rules;
    for (int k = 0; k < nt; ++k) {
      const double lo = std::max(0.0, -w[k]);
      const double hi = std::min(1.0, 1.0 - w[k]);
      rules[k] = composite_gauss(10, tangential_panels, lo, hi);
    }
    double wsum = 0.0;
    for (int k = 0; k < nt; ++k) wsum += w[k] * w[k];
    const double radius = std::sqrt(std::max(0.0, delta * delta - 0.5 * wsum));
    double s = 0.0;
    if (nt == 1) {
      for (std::size_t i = 0; i < rules[0].nodes.size(); ++i) {
        x.coords[0] = rules[0].nodes[i];
        y.coords[0] = x.coords[0] + w[0];
        s += rules[0].weights[i] * disk(radius);
      }
    } else {
      for (std::size_t i = 0; i < rules[0].nodes.size(); ++i) {
        x.coords[0] = rules[0].nodes[i];
        y.coords[0] = x.coords[0] + w[0];
        for (std::size_t j = 0; j < rules[1].nodes.size(); ++j) {
          x.coords[1] = rules[1].nodes[j];
          y.coords[1] = x.coords[1] + w[1];
          s += rules[0].weights[i] * rules[1].weights[j] * disk(radius);
        }
      }
    }
    return s;
  };

  double total = 0.0;
  if (d == 2) {
    // The x-interval length has a kink at w = 0; integrate each sign separately.
    for (double sign : {-1.0, 1.0}) {
      const QuadratureRule wr = composite_gauss(10, 2, 0.0, wmax);
      for (std::size_t i = 0; i < wr.nodes.size(); ++i) {
        total += wr.weights[i] * over_x({sign * wr.nodes[i], 0.0}, 1);
      }
    }
  } else {
    // Polar coordinates for the 2-d offset, split by quadrant.
    const QuadratureRule rr = composite_gauss(10, 1, 0.0, wmax);
    for (int q = 0; q < 4; ++q) {
      const double a0 = q * 0.5 * std::numbers::pi;
      const QuadratureRule pr = composite_gauss(10, 1, a0, a0 + 0.5 * std::numbers::pi);
      for (std::size_t i = 0; i < rr.nodes.size(); ++i) {
        for (std::size_t j = 0; j < pr.nodes.size(); ++j) {
          const std::array<double, 2> w{rr.nodes[i] * std::cos(pr.nodes[j]), rr.nodes[i] * std::sin(pr.nodes[j])};
          total += rr.weights[i] * rr.nodes[i] * pr.weights[j] * over_x(w, 2);
        }
      }
    }
  }
  return total / nu;
}

}  // namespace annihil
