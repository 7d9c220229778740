#pragma once

#include <array>
#include <cstddef>
#include <functional>

namespace annihil {

inline constexpr int kMaxDim = 3;

enum class Side : int { plus = 0, minus = 1 };

inline Side opposite(Side s) { return s == Side::plus ? Side::minus : Side::plus; }
const char* side_name(Side s);

using Coords = std::array<double, kMaxDim>;

/// A location in the closed box of one side. Only the first `dim` coordinates
/// are meaningful; the last meaningful coordinate is the normal one.
struct Point {
  Coords coords{};
  Side side = Side::plus;
};

/// Two unit boxes D+ = (0,1)^{d-1} x (0,1) and D- = (0,1)^{d-1} x (-1,0)
/// glued along the interface x_d = 0. The far faces x_d = 1 and x_d = -1 are
/// absorbing when the corresponding harvest flag is set.
class BoxGeometry {
 public:
  explicit BoxGeometry(int dim, bool harvest_plus = true, bool harvest_minus = true);

  int dim() const { return dim_; }
  bool harvest(Side s) const { return s == Side::plus ? harvest_plus_ : harvest_minus_; }

  /// Distance to the interface, |x_d|.
  double interface_distance(const Point& p) const { return p.coords[dim_ - 1] < 0 ? -p.coords[dim_ - 1] : p.coords[dim_ - 1]; }

  bool contains(const Point& p) const;

  /// Coordinatewise period-2 mirror fold of `x` into the closed box of `side`.
  Point reflect_into(const Coords& x, Side side) const;

  /// min over z in I of |x - z|^2 + |y - z|^2 for x on the plus side and y on
  /// the minus side.
  double pair_interface_dist2(const Point& x, const Point& y) const;

 private:
  int dim_;
  bool harvest_plus_;
  bool harvest_minus_;
};

/// Period-2 mirror map of the real line onto [lo, hi].
double mirror_fold(double v, double lo, double hi);

/// Volume of the unit ball in R^m, 1 <= m <= 4.
double ball_volume(int m);

struct TubeSpec {
  double delta = 0.0;
  double nu = 0.0;
};

/// Asymptotic volume of the one-sided pair tube I^delta per unit interface
/// area: 2^{(d-1)/2} * c_{d+1} * delta^{d+1} / 4. The quarter comes from the
/// sign constraints x_d > 0, y_d < 0; the power of sqrt(2) from the fact that
/// the tube surrounds the diagonal copy {(z, z)} of I, which is stretched by
/// sqrt(2) in each tangential direction.
double tube_normalizer(int dim, double delta);

TubeSpec make_tube(int dim, double delta);

struct TubeVolumeEstimate {
  double volume = 0.0;
  double cell_volume = 0.0;
  std::size_t cells_inside = 0;
  int cells_per_delta = 0;
};

/// Brute-force midpoint-grid count of |I^delta|. The grid has `cells_per_delta`
/// cells per length delta in every direction. Refuses when fewer than 1000
/// cells fall inside the tube.
TubeVolumeEstimate tube_volume_oracle(const BoxGeometry& geom, double delta, int cells_per_delta);

using PairFunction = std::function<double(const Point& x, const Point& y)>;

/// nu(delta)^{-1} * integral of f over I^delta, by nested Gauss-Legendre
/// quadrature: polar coordinates in the normal pair (x_d, -y_d), the
/// tangential offset y_t - x_t, and x_t with exact limits keeping y_t in the
/// unit cube. `tangential_panels` panels per unit length are used along x_t.
double minkowski_pair_integral(const BoxGeometry& geom, double delta, const PairFunction& f,
                               int tangential_panels = 8);

}  // namespace annihil
