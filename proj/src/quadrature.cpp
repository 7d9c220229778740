#include "annihil/quadrature.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include "annihil/errors.hpp"

namespace annihil {
namespace {

template <int N>
QuadratureRule reference_rule() {
  using G = boost::math::quadrature::gauss<double, N>;
  const auto& x = G::abscissa();
  const auto& w = G::weights();
  QuadratureRule rule;
  // Boost stores the nonnegative half; zero appears first for odd orders.
  for (std::size_t i = x.size(); i-- > 0;) {
    if (x[i] == 0.0) continue;
    rule.nodes.push_back(-x[i]);
    rule.weights.push_back(w[i]);
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    rule.nodes.push_back(x[i]);
    rule.weights.push_back(w[i]);
  }
  return rule;
}

const QuadratureRule& reference(int order) {
  static const QuadratureRule r7 = reference_rule<7>();
  static const QuadratureRule r10 = reference_rule<10>();
  static const QuadratureRule r15 = reference_rule<15>();
  static const QuadratureRule r20 = reference_rule<20>();
  static const QuadratureRule r25 = reference_rule<25>();
  static const QuadratureRule r30 = reference_rule<30>();
  switch (order) {
    case 7: return r7;
    case 10: return r10;
    case 15: return r15;
    case 20: return r20;
    case 25: return r25;
    case 30: return r30;
    default: throw ContractViolation("unsupported Gauss-Legendre order");
  }
}

}  // namespace

QuadratureRule gauss_legendre(int order, double a, double b) {
  const QuadratureRule& ref = reference(order);
  QuadratureRule out;
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (a + b);
  out.nodes.reserve(ref.nodes.size());
  out.weights.reserve(ref.nodes.size());
  for (std::size_t i = 0; i < ref.nodes.size(); ++i) {
    out.nodes.push_back(mid + half * ref.nodes[i]);
    out.weights.push_back(half * ref.weights[i]);
  }
  return out;
}

QuadratureRule composite_gauss(int order, int panels, double a, double b) {
  require(panels >= 1, "composite_gauss: panels must be positive");
  QuadratureRule out;
  const double h = (b - a) / panels;
  for (int p = 0; p < panels; ++p) {
    QuadratureRule r = gauss_legendre(order, a + p * h, a + (p + 1) * h);
    out.nodes.insert(out.nodes.end(), r.nodes.begin(), r.nodes.end());
    out.weights.insert(out.weights.end(), r.weights.begin(), r.weights.end());
  }
  return out;
}

double integrate(const QuadratureRule& rule, const std::function<double(double)>& f) {
  double s = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) s += rule.weights[i] * f(rule.nodes[i]);
  return s;
}

}  // namespace annihil
