#pragma once

#include <functional>
#include <vector>

namespace annihil {

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Gauss-Legendre rule with `order` points mapped to [a, b].
/// Supported orders: 7, 10, 15, 20, 25, 30.
QuadratureRule gauss_legendre(int order, double a, double b);

/// Composite Gauss-Legendre rule: `panels` equal panels of `order` points.
QuadratureRule composite_gauss(int order, int panels, double a, double b);

double integrate(const QuadratureRule& rule, const std::function<double(double)>& f);

}  // namespace annihil
