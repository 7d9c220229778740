#include "annihil/pde.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <string>

#include "annihil/errors.hpp"
#include "annihil/quadrature.hpp"

namespace annihil {

void SolverParams::validate() const {
  if (n_normal < 2) throw ConfigError("solver n_normal must be at least 2");
  if (n_tangential < 2) throw ConfigError("solver n_tangential must be at least 2");
  if (!(dt > 0.0)) throw ConfigError("solver dt must be positive");
  if (save_stride < 1) throw ConfigError("solver save_stride must be positive");
  if (spectral_modes < 0) throw ConfigError("solver spectral_modes must be nonnegative");
  if (fd_dt < 0.0) throw ConfigError("solver fd_dt must be nonnegative");
  if (!(cfl_fraction > 0.0 && cfl_fraction <= 1.0)) throw ConfigError("solver cfl_fraction must be in (0, 1]");
  if (!(picard_tol > 0.0)) throw ConfigError("solver picard_tol must be positive");
  if (picard_max < 1) throw ConfigError("solver picard_max must be positive");
}

GridFunction CoupledSolution::grid_function(Side s, std::size_t i) const {
  GridFunction g;
  g.grid = grid;
  g.side = s;
  g.values = field(s, i);
  return g;
}

std::size_t CoupledSolution::time_index(double t) const {
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (std::abs(times[i] - t) <= 1e-9 * std::max(1.0, std::abs(t))) return i;
  }
  throw NumericalRefusal("time " + std::to_string(t) + " is not a save time of the solution");
}

double CoupledSolution::trace_at(Side s, double t, const Coords& z) const {
  const auto& tr = s == Side::plus ? trace_plus : trace_minus;
  require(!trace_times.empty(), "trace_at: empty solution");
  t = std::clamp(t, trace_times.front(), trace_times.back());
  auto it = std::upper_bound(trace_times.begin(), trace_times.end(), t);
  std::size_t hi = static_cast<std::size_t>(it - trace_times.begin());
  if (hi >= trace_times.size()) hi = trace_times.size() - 1;
  const std::size_t lo = hi == 0 ? 0 : hi - 1;
  const double span = trace_times[hi] - trace_times[lo];
  const double w = span > 0.0 ? (t - trace_times[lo]) / span : 0.0;
  auto spatial = [&](const std::vector<double>& v) {
    if (grid.dim == 1) return v[0];
    const int n = grid.n_tangential;
    const double x = std::clamp(z[0], 0.0, 1.0) * n;
    const int i = std::min(static_cast<int>(x), n - 1);
    const double f = x - i;
    return (1.0 - f) * v[i] + f * v[i + 1];
  };
  return (1.0 - w) * spatial(tr[lo]) + w * spatial(tr[hi]);
}

namespace {

constexpr double kSqrt2 = std::numbers::sqrt2;
constexpr double kPi = std::numbers::pi;

void require_pde_dim(const BoxGeometry& geom) {
  if (geom.dim() > 2) throw ContractViolation("PDE solvers support d = 1 and d = 2");
}

// Discrete cosine basis on the tangential nodes z_i = i / n (exact for the trapezoid rule).
struct TangentialBasis {
  int modes = 1;
  int nodes = 1;
  std::vector<double> psi;      // psi[m * nodes + i]
  std::vector<double> weights;  // trapezoid weights of the nodes
  std::vector<double> norm2;    // discrete squared norm of each mode

  explicit TangentialBasis(const Grid& g) {
    if (g.dim == 1) {
      psi = {1.0};
      weights = {1.0};
      norm2 = {1.0};
      return;
    }
    const int n = g.n_tangential;
    modes = nodes = n + 1;
    psi.resize(static_cast<std::size_t>(modes) * nodes);
    weights.resize(nodes);
    norm2.resize(modes);
    for (int i = 0; i < nodes; ++i) weights[i] = g.tangential_weight(i);
    for (int m = 0; m < modes; ++m) {
      for (int i = 0; i < nodes; ++i) psi[m * nodes + i] = m == 0 ? 1.0 : kSqrt2 * std::cos(m * kPi * i / n);
      norm2[m] = (m == n && m > 0) ? 2.0 : 1.0;
    }
  }

  void forward(const std::vector<double>& f, std::vector<double>& out) const {
    out.assign(modes, 0.0);
    for (int m = 0; m < modes; ++m) {
      double s = 0.0;
      for (int i = 0; i < nodes; ++i) s += weights[i] * f[i] * psi[m * nodes + i];
      out[m] = s / norm2[m];
    }
  }
};

// Separable evaluation of the semigroup of u0 from its continuous modal coefficients.
struct FreeEvolution {
  const ProductKernel& kernel;
  ModalCoefficients coeffs;
  int Kn = 0;
  int Mt = 1;
  const Grid& grid;
  std::vector<double> phi;  // phi[k * (J+1) + j]
  std::vector<double> psi;  // psi[m * nodes + i]

  FreeEvolution(const ProductKernel& k, const DensityFunction& u0, const Grid& g, double t_min)
      : kernel(k), grid(g) {
    Kn = k.normal().modes(t_min);
    Mt = g.dim == 2 ? k.tangential().modes(t_min) : 1;
    coeffs = project(k, u0, Mt, Kn);
    const int J = g.n_normal;
    phi.resize(static_cast<std::size_t>(Kn) * (J + 1));
    for (int kk = 0; kk < Kn; ++kk) {
      for (int j = 0; j <= J; ++j) phi[kk * (J + 1) + j] = k.normal().eval(kk, g.normal_node(j));
    }
    const int nodes = g.tangential_nodes();
    psi.resize(static_cast<std::size_t>(Mt) * nodes);
    for (int m = 0; m < Mt; ++m) {
      for (int i = 0; i < nodes; ++i) psi[m * nodes + i] = g.dim == 2 ? k.tangential().eval(m, g.tangential_node(i)) : 1.0;
    }
  }

  // Values at normal nodes j in [0, jmax] and all tangential nodes.
  void evaluate(double t, int jmax, std::vector<double>& out) const {
    const int J = grid.n_normal;
    const int nodes = grid.tangential_nodes();
    std::vector<double> G(static_cast<std::size_t>(Mt) * (jmax + 1), 0.0);
    for (int m = 0; m < Mt; ++m) {
      for (int kk = 0; kk < Kn; ++kk) {
        const double c = coeffs.at(m, 0, kk) * std::exp(-kernel.normal().eigenvalue(kk) * t);
        if (c == 0.0) continue;
        for (int j = 0; j <= jmax; ++j) G[m * (jmax + 1) + j] += c * phi[kk * (J + 1) + j];
      }
    }
    out.assign(static_cast<std::size_t>(nodes) * (jmax + 1), 0.0);
    for (int m = 0; m < Mt; ++m) {
      const double decay = grid.dim == 2 ? std::exp(-kernel.tangential().eigenvalue(m) * t) : 1.0;
      for (int i = 0; i < nodes; ++i) {
        const double w = decay * psi[m * nodes + i];
        for (int j = 0; j <= jmax; ++j) out[i * (jmax + 1) + j] += w * G[m * (jmax + 1) + j];
      }
    }
  }

  double mass(double t) const {
    double s = 0.0;
    for (int kk = 0; kk < Kn; ++kk) {
      s += coeffs.at(0, 0, kk) * std::exp(-kernel.normal().eigenvalue(kk) * t) * kernel.normal().integral(kk);
    }
    return s;
  }
};

// Lag weights of the linear-in-time interface source for one side.
struct LagWeights {
  int modes = 1;
  int lags = 0;
  int J = 0;
  std::vector<double> later;    // weight of the node at the end of the lag interval, [m][k][j]
  std::vector<double> earlier;  // weight of the node at its start
  std::vector<double> mass_later;
  std::vector<double> mass_earlier;

  std::size_t at(int m, int k, int j) const {
    return (static_cast<std::size_t>(m) * lags + k) * (J + 1) + j;
  }

  LagWeights(const ProductKernel& kern, const Grid& g, const TangentialBasis& tb, double dt, int steps)
      : modes(tb.modes), lags(steps), J(g.n_normal) {
    later.assign(static_cast<std::size_t>(modes) * lags * (J + 1), 0.0);
    earlier.assign(later.size(), 0.0);
    mass_later.assign(lags, 0.0);
    mass_earlier.assign(lags, 0.0);
    const QuadratureRule q = gauss_legendre(20, 0.0, 1.0);
    std::vector<double> pn(J + 1);
    std::vector<double> nu(modes);
    for (int m = 0; m < modes; ++m) nu[m] = g.dim == 2 ? kern.tangential().eigenvalue(m) : 0.0;
    for (int k = 0; k < lags; ++k) {
      for (std::size_t iq = 0; iq < q.nodes.size(); ++iq) {
        const double v = q.nodes[iq];
        double tau;
        double w;
        double frac;  // (tau - k dt) / dt
        if (k == 0) {
          tau = dt * v * v;
          w = q.weights[iq] * 2.0 * dt * v;
          frac = v * v;
        } else {
          tau = dt * (k + v);
          w = q.weights[iq] * dt;
          frac = v;
        }
        for (int j = 0; j <= J; ++j) pn[j] = kern.normal().kernel(tau, g.normal_node(j), 0.0);
        const double surv = kern.normal().survival(tau, 0.0);
        mass_later[k] += w * (1.0 - frac) * surv;
        mass_earlier[k] += w * frac * surv;
        for (int m = 0; m < modes; ++m) {
          const double e = std::exp(-nu[m] * tau);
          const double wl = w * (1.0 - frac) * e;
          const double we = w * frac * e;
          for (int j = 0; j <= J; ++j) {
            later[at(m, k, j)] += wl * pn[j];
            earlier[at(m, k, j)] += we * pn[j];
          }
        }
      }
    }
  }
};

double simpson_weight(int i, int n) {
  if (n % 2 != 0) return (i == 0 || i == n) ? 0.5 / n : 1.0 / n;
  const double h = 1.0 / n;
  if (i == 0 || i == n) return h / 3.0;
  return (i % 2 == 1 ? 4.0 : 2.0) * h / 3.0;
}

void check_nonnegative(const std::vector<double>& u, const char* who, double t) {
  const double mn = *std::min_element(u.begin(), u.end());
  if (mn < -1e-9) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s: solution undershoot %.3e at t = %.6g; refine the resolution", who, mn, t);
    throw NumericalRefusal(buf);
  }
}

}  // namespace

double grid_mass(const CoupledSolution& sol, Side side, std::size_t i) {
  const Grid& g = sol.grid;
  const auto& u = sol.field(side, i);
  const DriftSpec& drift = sol.drift(side);
  double s = 0.0;
  for (int it = 0; it < g.tangential_nodes(); ++it) {
    const double wt = g.dim == 2 ? simpson_weight(it, g.n_tangential) : 1.0;
    for (int j = 0; j <= g.n_normal; ++j) {
      const Point p = g.point(side, it, j);
      s += wt * simpson_weight(j, g.n_normal) * u[g.index(it, j)] * drift.rho(p, g.dim);
    }
  }
  return s;
}

double annihilated_mass(const CoupledSolution& sol, double T) { return sol.annihilated[sol.time_index(T)]; }

double harvested_mass(const CoupledSolution& sol, Side side, double T) {
  const std::size_t i = sol.time_index(T);
  return grid_mass(sol, side, 0) - grid_mass(sol, side, i) - sol.annihilated[i];
}

CoupledSolution solve_mild(const BoxGeometry& geom, const DensityFunction& u0_plus, const DensityFunction& u0_minus,
                           double lambda, double T, const SolverParams& params, double diffusion_plus,
                           double diffusion_minus) {
  require_pde_dim(geom);
  params.validate();
  require(lambda >= 0.0, "solve_mild: lambda must be nonnegative");
  require(T > 0.0, "solve_mild: T must be positive");
  const long long steps_ll = std::llround(T / params.dt);
  if (std::abs(steps_ll * params.dt - T) > 1e-9 * T) throw ConfigError("solve_mild: T must be a multiple of dt");
  const int steps = static_cast<int>(steps_ll);
  const double dt = params.dt;
  const int d = geom.dim();
  const Grid grid = Grid::make(d, params.n_tangential, params.n_normal);
  const int J = grid.n_normal;
  const int nodes = grid.tangential_nodes();
  const TangentialBasis tb(grid);

  const std::array<ProductKernel, 2> kern{
      ProductKernel(geom, Side::plus, diffusion_plus, 1e-10, params.spectral_modes),
      ProductKernel(geom, Side::minus, diffusion_minus, 1e-10, params.spectral_modes)};
  const std::array<const DensityFunction*, 2> u0{&u0_plus, &u0_minus};
  std::vector<FreeEvolution> free;
  std::vector<LagWeights> lag;
  for (int s = 0; s < 2; ++s) {
    free.emplace_back(kern[s], *u0[s], grid, dt);
    lag.emplace_back(kern[s], grid, tb, dt, steps);
  }

  CoupledSolution sol;
  sol.method = "mild";
  sol.grid = grid;
  sol.lambda = lambda;
  sol.drift_plus.s = diffusion_plus;
  sol.drift_minus.s = diffusion_minus;
  sol.harvest_plus = geom.harvest(Side::plus);
  sol.harvest_minus = geom.harvest(Side::minus);
  sol.initial_mass_plus = free[0].mass(0.0);
  sol.initial_mass_minus = free[1].mass(0.0);

  // fhat[n][m]: tangential modes of u+ u- on I at step n.
  std::vector<std::vector<double>> fhat(steps + 1);
  std::array<std::vector<double>, 2> trace;
  for (int s = 0; s < 2; ++s) {
    const Side side = s == 0 ? Side::plus : Side::minus;
    trace[s].resize(nodes);
    for (int i = 0; i < nodes; ++i) trace[s][i] = (*u0[s])(grid.point(side, i, 0));
  }
  std::vector<double> f(nodes);
  for (int i = 0; i < nodes; ++i) f[i] = trace[0][i] * trace[1][i];
  tb.forward(f, fhat[0]);
  double annihilated = 0.0;

  auto record_trace = [&](double t) {
    sol.trace_times.push_back(t);
    sol.trace_plus.push_back(trace[0]);
    sol.trace_minus.push_back(trace[1]);
  };
  auto save = [&](int n) {
    const double t = n * dt;
    sol.times.push_back(t);
    for (int s = 0; s < 2; ++s) {
      const Side side = s == 0 ? Side::plus : Side::minus;
      std::vector<double> u;
      if (n == 0) {
        u.resize(grid.size());
        for (int it = 0; it < nodes; ++it) {
          for (int j = 0; j <= J; ++j) u[grid.index(it, j)] = (*u0[s])(grid.point(side, it, j));
        }
      } else {
        free[s].evaluate(t, J, u);
        // Interface source: D_m(j) = sum_k later f_{n-k} + earlier f_{n-k-1}.
        std::vector<double> D(static_cast<std::size_t>(tb.modes) * (J + 1), 0.0);
        const LagWeights& L = lag[s];
        for (int m = 0; m < tb.modes; ++m) {
          for (int k = 0; k < n; ++k) {
            const double fl = fhat[n - k][m];
            const double fe = fhat[n - k - 1][m];
            const std::size_t base = L.at(m, k, 0);
            for (int j = 0; j <= J; ++j) D[m * (J + 1) + j] += L.later[base + j] * fl + L.earlier[base + j] * fe;
          }
        }
        for (int m = 0; m < tb.modes; ++m) {
          for (int it = 0; it < nodes; ++it) {
            const double w = 0.5 * lambda * tb.psi[m * tb.nodes + it];
            for (int j = 0; j <= J; ++j) u[grid.index(it, j)] -= w * D[m * (J + 1) + j];
          }
        }
        if (geom.harvest(side)) {
          for (int it = 0; it < nodes; ++it) u[grid.index(it, J)] = 0.0;
        }
        check_nonnegative(u, "solve_mild", t);
      }
      // Spectral mass: free part minus the survival-weighted source.
      double mass = free[s].mass(t);
      const LagWeights& L = lag[s];
      for (int k = 0; k < n; ++k) mass -= 0.5 * lambda * (L.mass_later[k] * fhat[n - k][0] + L.mass_earlier[k] * fhat[n - k - 1][0]);
      (s == 0 ? sol.u_plus : sol.u_minus).push_back(std::move(u));
      (s == 0 ? sol.mass_plus : sol.mass_minus).push_back(mass);
    }
    sol.annihilated.push_back(annihilated);
    sol.harvested_plus.push_back(sol.initial_mass_plus - sol.mass_plus.back() - annihilated);
    sol.harvested_minus.push_back(sol.initial_mass_minus - sol.mass_minus.back() - annihilated);
  };

  record_trace(0.0);
  save(0);
  std::array<std::vector<double>, 2> base;
  std::array<std::vector<double>, 2> hist;
  std::vector<double> fh;
  for (int n = 1; n <= steps; ++n) {
    const double t = n * dt;
    for (int s = 0; s < 2; ++s) {
      std::vector<double> v;
      free[s].evaluate(t, 0, v);
      base[s].assign(nodes, 0.0);
      for (int i = 0; i < nodes; ++i) base[s][i] = v[i];
      const LagWeights& L = lag[s];
      hist[s].assign(tb.modes, 0.0);
      for (int m = 0; m < tb.modes; ++m) {
        double h = 0.0;
        for (int k = 1; k < n; ++k) h += L.later[L.at(m, k, 0)] * fhat[n - k][m];
        for (int k = 0; k < n; ++k) h += L.earlier[L.at(m, k, 0)] * fhat[n - k - 1][m];
        hist[s][m] = h;
      }
    }
    int it = 0;
    for (;; ++it) {
      if (it >= params.picard_max) {
        char buf[200];
        std::snprintf(buf, sizeof buf,
                      "solve_mild: Picard iteration did not converge at t = %.6g; try dt <= %.3g", t, dt / 4);
        throw NumericalRefusal(buf);
      }
      for (int i = 0; i < nodes; ++i) f[i] = trace[0][i] * trace[1][i];
      tb.forward(f, fh);
      double change = 0.0;
      for (int s = 0; s < 2; ++s) {
        const LagWeights& L = lag[s];
        for (int i = 0; i < nodes; ++i) {
          double src = 0.0;
          for (int m = 0; m < tb.modes; ++m) {
            src += tb.psi[m * tb.nodes + i] * (hist[s][m] + L.later[L.at(m, 0, 0)] * fh[m]);
          }
          const double v = base[s][i] - 0.5 * lambda * src;
          change = std::max(change, std::abs(v - trace[s][i]));
          trace[s][i] = v;
        }
      }
      if (change < params.picard_tol) break;
    }
    for (int i = 0; i < nodes; ++i) f[i] = trace[0][i] * trace[1][i];
    tb.forward(f, fhat[n]);
    annihilated += 0.5 * lambda * 0.5 * dt * (fhat[n - 1][0] + fhat[n][0]);
    record_trace(t);
    if (n % params.save_stride == 0 || n == steps) save(n);
  }
  return sol;
}

CoupledSolution solve_fd(const BoxGeometry& geom, const DensityFunction& u0_plus, const DensityFunction& u0_minus,
                         double lambda, const DriftSpec& drift_plus, const DriftSpec& drift_minus, double T,
                         const SolverParams& params) {
  require_pde_dim(geom);
  params.validate();
  require(lambda >= 0.0, "solve_fd: lambda must be nonnegative");
  require(T > 0.0, "solve_fd: T must be positive");
  const int d = geom.dim();
  drift_plus.validate(d);
  drift_minus.validate(d);
  const Grid grid = Grid::make(d, params.n_tangential, params.n_normal);
  const int J = grid.n_normal;
  const int nt = d == 2 ? grid.n_tangential : 0;
  const int nodes = grid.tangential_nodes();
  const double hn = 1.0 / J;
  const double ht = d == 2 ? 1.0 / nt : 1.0;
  const double hmin = std::min(hn, ht);
  const double smax = std::max(drift_plus.s, drift_minus.s);
  const double limit = hmin * hmin / (2.0 * d * smax);

  const double interval = params.save_stride * params.dt;
  const long long saves_ll = std::llround(T / params.dt);
  if (std::abs(saves_ll * params.dt - T) > 1e-9 * T) throw ConfigError("solve_fd: T must be a multiple of dt");
  double dt;
  long long sub;
  if (params.fd_dt > 0.0) {
    if (params.fd_dt > limit) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "solve_fd: time step %.3g violates the stability limit h^2/(2 d s) = %.3g",
                    params.fd_dt, limit);
      throw NumericalRefusal(buf);
    }
    sub = std::max(1LL, std::llround(params.dt / params.fd_dt));
    dt = params.dt / sub;
    if (dt > limit) sub += 1, dt = params.dt / sub;
  } else {
    sub = static_cast<long long>(std::ceil(params.dt / (params.cfl_fraction * limit)));
    dt = params.dt / sub;
  }
  (void)interval;
  const long long coarse = saves_ll;

  struct SideState {
    Side side;
    DriftSpec drift;
    bool harvest;
    std::vector<double> u;
    std::vector<double> rho;     // nodes
    std::vector<double> rho_n;   // normal half nodes (it, j + 1/2), j < J
    std::vector<double> rho_t;   // tangential half nodes (it + 1/2, j), it < nt
    std::vector<double> vol;     // control volume per node
    std::vector<double> du;
  };
  auto phys = [&](Side side, double x, double a) {
    Point p;
    p.side = side;
    if (d == 2) p.coords[0] = x;
    p.coords[d - 1] = side == Side::plus ? a : -a;
    return p;
  };
  auto cell = [](int i, int n, double h) { return (i == 0 || i == n) ? 0.5 * h : h; };

  std::array<SideState, 2> st;
  const std::array<const DensityFunction*, 2> u0{&u0_plus, &u0_minus};
  for (int s = 0; s < 2; ++s) {
    SideState& S = st[s];
    S.side = s == 0 ? Side::plus : Side::minus;
    S.drift = s == 0 ? drift_plus : drift_minus;
    S.harvest = geom.harvest(S.side);
    S.u.resize(grid.size());
    S.rho.resize(grid.size());
    S.vol.resize(grid.size());
    S.du.assign(grid.size(), 0.0);
    S.rho_n.assign(static_cast<std::size_t>(nodes) * J, 0.0);
    S.rho_t.assign(static_cast<std::size_t>(std::max(nt, 1)) * (J + 1), 0.0);
    for (int it = 0; it < nodes; ++it) {
      const double x = grid.tangential_node(it);
      for (int j = 0; j <= J; ++j) {
        const Point p = grid.point(S.side, it, j);
        S.u[grid.index(it, j)] = (*u0[s])(p);
        S.rho[grid.index(it, j)] = S.drift.rho(p, d);
        S.vol[grid.index(it, j)] = (d == 2 ? cell(it, nt, ht) : 1.0) * cell(j, J, hn);
        if (j < J) S.rho_n[it * J + j] = S.drift.rho(phys(S.side, x, (j + 0.5) * hn), d);
        if (d == 2 && it < nt) S.rho_t[it * (J + 1) + j] = S.drift.rho(phys(S.side, x + 0.5 * ht, j * hn), d);
      }
      if (S.harvest) S.u[grid.index(it, J)] = 0.0;
    }
  }

  CoupledSolution sol;
  sol.method = "fd";
  sol.grid = grid;
  sol.lambda = lambda;
  sol.drift_plus = drift_plus;
  sol.drift_minus = drift_minus;
  sol.harvest_plus = geom.harvest(Side::plus);
  sol.harvest_minus = geom.harvest(Side::minus);

  auto discrete_mass = [&](const SideState& S) {
    double m = 0.0;
    for (std::size_t k = 0; k < S.u.size(); ++k) m += S.vol[k] * S.rho[k] * S.u[k];
    return m;
  };
  sol.initial_mass_plus = discrete_mass(st[0]);
  sol.initial_mass_minus = discrete_mass(st[1]);
  double annihilated = 0.0;
  std::array<double, 2> harvested{0.0, 0.0};
  std::vector<double> f(nodes);
  std::vector<double> tw(nodes);
  for (int it = 0; it < nodes; ++it) tw[it] = grid.tangential_weight(it);

  auto record = [&](double t, bool with_field) {
    sol.trace_times.push_back(t);
    std::vector<double> tp(nodes);
    std::vector<double> tm(nodes);
    for (int it = 0; it < nodes; ++it) {
      tp[it] = st[0].u[grid.index(it, 0)];
      tm[it] = st[1].u[grid.index(it, 0)];
    }
    sol.trace_plus.push_back(std::move(tp));
    sol.trace_minus.push_back(std::move(tm));
    if (!with_field) return;
    sol.times.push_back(t);
    sol.u_plus.push_back(st[0].u);
    sol.u_minus.push_back(st[1].u);
    sol.mass_plus.push_back(discrete_mass(st[0]));
    sol.mass_minus.push_back(discrete_mass(st[1]));
    sol.annihilated.push_back(annihilated);
    sol.harvested_plus.push_back(harvested[0]);
    sol.harvested_minus.push_back(harvested[1]);
  };
  record(0.0, true);

  for (long long n = 1; n <= coarse; ++n) {
    for (long long q = 0; q < sub; ++q) {
      for (int it = 0; it < nodes; ++it) f[it] = st[0].u[grid.index(it, 0)] * st[1].u[grid.index(it, 0)];
      double rate_a = 0.0;
      for (int it = 0; it < nodes; ++it) rate_a += 0.5 * lambda * tw[it] * f[it];
      for (int s = 0; s < 2; ++s) {
        SideState& S = st[s];
        const double sd = S.drift.s;
        double rate_h = 0.0;
        std::fill(S.du.begin(), S.du.end(), 0.0);
        for (int it = 0; it < nodes; ++it) {
          const double ct = d == 2 ? cell(it, nt, ht) : 1.0;
          // Normal fluxes G_{j+1/2} = s rho (u_{j+1} - u_j) / h; interface flux lambda f.
          double g_prev = lambda * f[it];
          for (int j = 0; j < J; ++j) {
            const double g = sd * S.rho_n[it * J + j] * (S.u[grid.index(it, j + 1)] - S.u[grid.index(it, j)]) / hn;
            S.du[grid.index(it, j)] += ct * (g - g_prev);
            g_prev = g;
          }
          if (S.harvest) {
            rate_h -= 0.5 * ct * g_prev;
          } else {
            S.du[grid.index(it, J)] += ct * (0.0 - g_prev);
          }
        }
        if (d == 2) {
          for (int j = 0; j <= J; ++j) {
            const double cn = cell(j, J, hn);
            double h_prev = 0.0;
            for (int it = 0; it < nt; ++it) {
              const double h =
                  sd * S.rho_t[it * (J + 1) + j] * (S.u[grid.index(it + 1, j)] - S.u[grid.index(it, j)]) / ht;
              S.du[grid.index(it, j)] += cn * (h - h_prev);
              h_prev = h;
            }
            S.du[grid.index(nt, j)] += cn * (0.0 - h_prev);
          }
        }
        harvested[s] += dt * rate_h;
        for (std::size_t k = 0; k < S.u.size(); ++k) {
          S.du[k] *= dt / (2.0 * S.rho[k] * S.vol[k]);
        }
        if (S.harvest) {
          for (int it = 0; it < nodes; ++it) S.du[grid.index(it, J)] = 0.0;
        }
      }
      for (int s = 0; s < 2; ++s) {
        for (std::size_t k = 0; k < st[s].u.size(); ++k) st[s].u[k] += st[s].du[k];
      }
      annihilated += dt * rate_a;
      const double t = (static_cast<double>(n - 1) + static_cast<double>(q + 1) / sub) * params.dt;
      check_nonnegative(st[0].u, "solve_fd", t);
      check_nonnegative(st[1].u, "solve_fd", t);
      if (q + 1 < sub) record(t, false);
    }
    record(n * params.dt, n % params.save_stride == 0 || n == coarse);
  }
  return sol;
}

void write_csv(const CoupledSolution& sol, std::ostream& os) {
  const Grid& g = sol.grid;
  os << (g.dim == 2 ? "t,x,x2,u_plus,u_minus\n" : "t,x,u_plus,u_minus\n");
  char buf[160];
  for (std::size_t n = 0; n < sol.times.size(); ++n) {
    for (int it = 0; it < g.tangential_nodes(); ++it) {
      for (int j = 0; j <= g.n_normal; ++j) {
        const std::size_t k = g.index(it, j);
        if (g.dim == 2) {
          std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g\n", sol.times[n], g.tangential_node(it),
                        g.normal_node(j), sol.u_plus[n][k], sol.u_minus[n][k]);
        } else {
          std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", sol.times[n], g.normal_node(j),
                        sol.u_plus[n][k], sol.u_minus[n][k]);
        }
        os << buf;
      }
    }
  }
}

}  // namespace annihil
