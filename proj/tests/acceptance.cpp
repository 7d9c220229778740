// Acceptance runs. `acceptance --criterion N` evaluates one criterion and
// prints its checks followed by a single PASS/FAIL line; without --criterion
// all eight run in order. The exit status is nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "annihil/errors.hpp"
#include "annihil/geometry.hpp"
#include "annihil/harness.hpp"
#include "annihil/kernels.hpp"
#include "annihil/particle_system.hpp"
#include "annihil/pde.hpp"
#include "annihil/quadrature.hpp"

using namespace annihil;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

/// Collects named checks for one criterion.
class Report {
 public:
  void check(bool ok, const std::string& what) {
    std::cout << "  [" << (ok ? "ok" : "FAILED") << "] " << what << "\n" << std::flush;
    pass_ = pass_ && ok;
  }
  void note(const std::string& what) { std::cout << "  " << what << "\n" << std::flush; }
  bool pass() const { return pass_; }

 private:
  bool pass_ = true;
};

std::string num(double v, int digits = 6) {
  std::ostringstream os;
  os << std::setprecision(digits) << v;
  return os.str();
}

std::string est(const Estimate& e) { return num(e.mean) + " +- " + num(e.stderr_, 3); }

double gauss(double z, double v) { return std::exp(-z * z / (2.0 * v)) / std::sqrt(2.0 * kPi * v); }

double neumann_images(double t, double a, double b) {
  double sum = 0.0;
  for (int n = -20; n <= 20; ++n) sum += gauss(a - b - 2.0 * n, t) + gauss(a + b - 2.0 * n, t);
  return sum;
}

// Reflecting at 0, absorbing at 1.
double mixed_images(double t, double a, double b) {
  double sum = 0.0;
  for (int n = -20; n <= 20; ++n) {
    const double c = 4.0 * n;
    sum += gauss(a - b - c, t) + gauss(a + b - c, t) - gauss(a - (2.0 - b) - c, t) - gauss(a - (2.0 + b) - c, t);
  }
  return sum;
}

DensityFunction linear_profile(int dim) {
  return [dim](const Point& p) { return 2.0 * (1.0 - std::abs(p.coords[dim - 1])); };
}

// P_t (2 (1 - a)) at distance a by quadrature of the image kernel.
double free_evolution(double t, double a) {
  static const auto rule = composite_gauss(20, 20, 0.0, 1.0);
  if (t == 0.0) return 2.0 * (1.0 - a);
  return integrate(rule, [&](double b) { return mixed_images(t, a, b) * 2.0 * (1.0 - b); });
}

Point point(const std::vector<double>& c, Side s) {
  Point p;
  p.side = s;
  for (std::size_t i = 0; i < c.size(); ++i) p.coords[i] = c[i];
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Exact d = 2 tube volume in the unit boxes.
double tube_volume_d2(double delta) {
  return kPi / 4.0 * (4.0 * std::sqrt(2.0) / 3.0 * std::pow(delta, 3) - std::pow(delta, 4));
}

bool criterion_geometry() {
  Report r;
  const BoxGeometry g1(1);
  const auto one = [](const Point&, const Point&) { return 1.0; };
  for (double delta : {0.08, 0.04, 0.02, 0.01}) {
    const double quarter = kPi * delta * delta / 4.0;
    const double quad = tube_normalizer(1, delta) * minkowski_pair_integral(g1, delta, one);
    r.check(std::abs(quad / quarter - 1.0) < 1e-3,
            "d=1 quadrature tube volume / (pi delta^2 / 4) at delta=" + num(delta) + ": " + num(quad / quarter, 12));
  }
  const auto grid = tube_volume_oracle(g1, 0.02, 400);
  r.check(std::abs(grid.volume / (kPi * 0.0004 / 4.0) - 1.0) < 2e-3,
          "d=1 grid count / (pi delta^2 / 4) at delta=0.02: " + num(grid.volume / (kPi * 0.0004 / 4.0)));

  const BoxGeometry g2(2);
  const auto v4 = tube_volume_oracle(g2, 0.04, 24);
  const auto v2 = tube_volume_oracle(g2, 0.02, 24);
  const double r4 = v4.volume / std::pow(0.04, 3), r2 = v2.volume / std::pow(0.02, 3);
  r.check(std::abs(r4 / r2 - 1.0) < 0.1, "d=2 |I^delta|/delta^3 at 0.04 and 0.02: " + num(r4) + ", " + num(r2));
  r.check(std::abs(v2.volume / tube_volume_d2(0.02) - 1.0) < 0.02,
          "d=2 grid count against the exact volume at delta=0.02: ratio " + num(v2.volume / tube_volume_d2(0.02)));
  const double m = minkowski_pair_integral(g2, 0.02, one);
  r.check(std::abs(m - 1.0) < 0.05, "d=2 minkowski_pair_integral(1) at delta=0.02: " + num(m));
  return r.pass();
}

bool criterion_kernels() {
  Report r;
  std::mt19937_64 gen(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  double sym = 0.0, face = 0.0;
  for (int d = 1; d <= 3; ++d) {
    for (bool harvest : {true, false}) {
      const BoxGeometry g(d, harvest, harvest);
      for (Side side : {Side::plus, Side::minus}) {
        const ProductKernel k(g, side);
        const double sign = side == Side::plus ? 1.0 : -1.0;
        for (int i = 0; i < 200; ++i) {
          Point x, y;
          x.side = y.side = side;
          for (int c = 0; c < d; ++c) {
            x.coords[c] = u(gen);
            y.coords[c] = u(gen);
          }
          x.coords[d - 1] *= sign;
          y.coords[d - 1] *= sign;
          for (double t : {2e-4, 5e-3, 0.05, 0.5, 3.0}) {
            const double a = k.eval(t, x, y), b = k.eval(t, y, x);
            sym = std::max(sym, std::abs(a - b) / std::max(1.0, std::abs(a)));
            if (harvest) {
              Point yf = y;
              yf.coords[d - 1] = sign;
              face = std::max({face, std::abs(k.eval(t, x, yf)), std::abs(k.eval(t, yf, x))});
            }
          }
        }
      }
    }
  }
  r.check(sym < 1e-12, "symmetry max relative |p(t,x,y) - p(t,y,x)|: " + num(sym, 3));
  r.check(face < 1e-12, "Dirichlet face max |p|: " + num(face, 3));

  double ck = 0.0, eig = 0.0, image = 0.0;
  const auto rule = composite_gauss(20, 40, 0.0, 1.0);
  for (auto bc : {BoundaryPair::neumann_both, BoundaryPair::neumann0_dirichlet1}) {
    const Eigenbasis1D e(bc);
    for (double s : {0.01, 0.1, 0.3}) {
      for (double t : {0.02, 0.2}) {
        for (double a : {0.0, 0.3, 0.8}) {
          for (double b : {0.1, 0.6, 0.95}) {
            const double lhs = integrate(rule, [&](double z) { return e.kernel(s, a, z) * e.kernel(t, z, b); });
            ck = std::max(ck, std::abs(lhs - e.kernel(s + t, a, b)));
          }
        }
      }
    }
    // Against the explicit cosine modes, and through the kernel: P_t phi_k = exp(-mu_k t) phi_k.
    for (int k = 0; k < 12; ++k) {
      const double w = bc == BoundaryPair::neumann_both ? k * kPi : (k + 0.5) * kPi;
      const double c = bc == BoundaryPair::neumann_both && k == 0 ? 1.0 : std::sqrt(2.0);
      const double mu = 0.5 * w * w;
      for (double a : {0.0, 0.17, 0.5, 0.83, 1.0}) {
        eig = std::max(eig, std::abs(e.eval(k, a) - c * std::cos(w * a)) + std::abs(e.eigenvalue(k) - mu) / std::max(1.0, mu));
        for (double t : {0.01, 0.1}) {
          const double lhs = integrate(rule, [&](double b) { return e.kernel(t, a, b) * c * std::cos(w * b); });
          eig = std::max(eig, std::abs(lhs - std::exp(-mu * t) * c * std::cos(w * a)));
        }
      }
    }
    for (double t : {2e-4, 2e-3, 0.05, 1.0}) {
      for (double a : {0.0, 0.4, 0.9}) {
        for (double b : {0.05, 0.5, 0.99}) {
          const double oracle =
              bc == BoundaryPair::neumann_both ? neumann_images(t, a, b) : mixed_images(t, a, b);
          image = std::max(image, std::abs(e.kernel(t, a, b) - oracle));
        }
      }
    }
  }
  r.check(ck < 1e-6, "Chapman-Kolmogorov max error: " + num(ck, 3));
  r.check(eig < 1e-10, "eigen-relation P_t phi_k = exp(-mu_k t) phi_k and explicit modes: " + num(eig, 3));
  r.check(image < 1e-8, "agreement with the method of images: " + num(image, 3));
  return r.pass();
}

double sup_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

bool criterion_pde() {
  Report r;
  const BoxGeometry g(1);
  const SolverParams sp;
  const int n = sp.n_normal;
  const CoupledSolution mild = solve_mild(g, linear_profile(1), linear_profile(1), 1.0, 0.5, sp);
  const CoupledSolution fd = solve_fd(g, linear_profile(1), linear_profile(1), 1.0, DriftSpec{}, DriftSpec{}, 0.5, sp);
  double d = 0.0;
  for (std::size_t i = 0; i < mild.times.size(); ++i) {
    d = std::max({d, sup_diff(mild.u_plus[i], fd.u_plus[i]), sup_diff(mild.u_minus[i], fd.u_minus[i])});
  }
  r.check(mild.times.size() == fd.times.size() && d <= 1e-3, "sup |mild - fd| on the canonical scenario: " + num(d, 3));

  const CoupledSolution free = solve_mild(g, linear_profile(1), linear_profile(1), 0.0, 0.5, sp);
  const ProductKernel kp(g, Side::plus);
  double e_images = 0.0, e_semigroup = 0.0;
  for (std::size_t i = 0; i < free.times.size(); ++i) {
    const GridFunction pt = semigroup_apply(kp, free.times[i], linear_profile(1), free.grid);
    for (int j = 0; j <= n; ++j) {
      const double oracle = free_evolution(free.times[i], static_cast<double>(j) / n);
      e_images = std::max({e_images, std::abs(free.u_plus[i][j] - oracle), std::abs(free.u_minus[i][j] - oracle)});
      e_semigroup = std::max(e_semigroup, std::abs(free.u_plus[i][j] - pt.values[j]));
    }
  }
  r.check(e_images <= 1e-8, "lambda=0 against the image-sum semigroup: " + num(e_images, 3));
  r.check(e_semigroup <= 1e-8, "lambda=0 against the spectral semigroup: " + num(e_semigroup, 3));

  double balance = 0.0, residual = 0.0, comparison = -1e300, lower = 0.0;
  for (const CoupledSolution* sol : {&mild, &fd}) {
    for (std::size_t i = 0; i < sol->times.size(); ++i) {
      for (Side s : {Side::plus, Side::minus}) {
        const double harvested = s == Side::plus ? sol->harvested_plus[i] : sol->harvested_minus[i];
        const double m0 = s == Side::plus ? sol->initial_mass_plus : sol->initial_mass_minus;
        const double mt = s == Side::plus ? sol->mass_plus[i] : sol->mass_minus[i];
        balance = std::max(balance, std::abs(m0 - mt - sol->annihilated[i] - harvested));
        residual = std::max(residual, std::abs(harvested_mass(*sol, s, sol->times[i]) - harvested));
        const auto& u = sol->field(s, i);
        for (int j = 0; j <= n; ++j) {
          comparison = std::max(comparison, u[j] - free_evolution(sol->times[i], static_cast<double>(j) / n));
          lower = std::min(lower, u[j]);
        }
      }
    }
  }
  r.check(balance <= 1e-3, "solver mass balance residual: " + num(balance, 3));
  r.check(residual <= 1e-3, "harvested-mass formula against solver accounting: " + num(residual, 3));
  r.check(comparison <= 1e-9, "comparison bound max(u - P_t u0): " + num(comparison, 3));
  r.check(lower >= -1e-9, "nonnegativity min u: " + num(lower, 3));
  return r.pass();
}

SimParams invariant_params(std::mt19937_64& gen, int trial) {
  std::uniform_int_distribution<int> n_d(20, 150);
  std::uniform_real_distribution<double> lam_d(0.5, 20.0);
  SimParams p;
  p.N = n_d(gen);
  p.lambda = lam_d(gen);
  p.T = 0.1;
  p.seed = 1000 + trial;
  p.schedule_c = 2.0;
  p.scheme = trial % 2 == 0 ? InteractionScheme::bridge : InteractionScheme::endpoint;
  p.m = trial % 5 == 0 ? p.N + 7 : 0;
  return p;
}

InitialProfile profile_for(const BoxGeometry& g, Side s) {
  return g.harvest(s) ? InitialProfile::linear(s, g.dim())
                      : InitialProfile::custom(s, [](const Point&) { return 1.0; }, 1.0);
}

bool criterion_particles() {
  Report r;
  std::mt19937_64 gen(4);
  std::uniform_int_distribution<int> dim_d(1, 2);
  int bad_accounting = 0, bad_events = 0, steps = 0;
  std::size_t annihilations = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const BoxGeometry g(dim_d(gen), trial % 3 != 0, trial % 4 != 0);
    const SimParams p = invariant_params(gen, trial);
    const std::size_t m = p.particles();
    Simulation sim(g, p, profile_for(g, Side::plus), profile_for(g, Side::minus), 0);
    std::size_t seen = 0;
    while (!sim.finished()) {
      sim.step();
      ++steps;
      const Configuration& c = sim.config();
      bool ok = true;
      for (Side s : {Side::plus, Side::minus}) {
        ok = ok && c.side(s).size() == m &&
             c.count(s, Status::active) + c.count(s, Status::harvested) + c.count(s, Status::annihilated) == m;
      }
      ok = ok && c.count(Side::plus, Status::annihilated) == c.count(Side::minus, Status::annihilated);
      std::size_t ann = 0, harv = 0;
      for (const auto& e : sim.events()) (e.kind == EventKind::annihilation ? ann : harv) += 1;
      ok = ok && ann == c.count(Side::plus, Status::annihilated) &&
           harv == c.count(Side::plus, Status::harvested) + c.count(Side::minus, Status::harvested);
      bad_accounting += ok ? 0 : 1;
      const auto& ev = sim.events();
      for (std::size_t i = seen; i < ev.size(); ++i) {
        bool eok = ev[i].time <= sim.time() + 1e-12 && (i == 0 || ev[i].time >= ev[i - 1].time);
        if (ev[i].kind == EventKind::annihilation) {
          eok = eok && g.pair_interface_dist2(ev[i].x, ev[i].y) < sim.potential().delta * sim.potential().delta;
        }
        bad_events += eok ? 0 : 1;
      }
      seen = ev.size();
    }
    annihilations += sim.config().count(Side::plus, Status::annihilated);
  }
  r.check(bad_accounting == 0, "count accounting over " + std::to_string(steps) + " steps of 50 runs: " +
                                   std::to_string(bad_accounting) + " violations");
  r.check(bad_events == 0, "event log order and tube membership: " + std::to_string(bad_events) + " violations");
  r.check(annihilations > 0, "annihilations occurred in the random runs: " + std::to_string(annihilations));

  int violations = 0, compared = 0;
  for (int d : {1, 2}) {
    for (auto scheme : {InteractionScheme::bridge, InteractionScheme::endpoint}) {
      const BoxGeometry g(d);
      SimParams p;
      p.N = 300;
      p.lambda = 3.0;
      p.T = 0.3;
      p.schedule_c = 1.0;
      p.scheme = scheme;
      SimParams p0 = p;
      p0.lambda = 0.0;
      const auto up = InitialProfile::linear(Side::plus, d), um = InitialProfile::linear(Side::minus, d);
      for (int rep = 0; rep < 4; ++rep) {
        Simulation a(g, p, up, um, rep), b(g, p0, up, um, rep);
        while (!a.finished()) {
          a.step();
          b.step();
          for (Side s : {Side::plus, Side::minus}) {
            for (std::size_t i = 0; i < a.config().side(s).size(); ++i) {
              const auto& x = a.config().side(s)[i];
              const auto& y = b.config().side(s)[i];
              if (x.status != Status::active) continue;
              ++compared;
              if (y.status != Status::active || x.position.coords != y.position.coords) ++violations;
            }
            if (a.measure(s).mass() > b.measure(s).mass()) ++violations;
          }
        }
      }
    }
  }
  r.check(violations == 0, "lambda=0 domination coupling, " + std::to_string(compared) +
                               " particle-steps compared: " + std::to_string(violations) + " violations");

  const fs::path root = fs::temp_directory_path() / "annihil_acceptance_determinism";
  fs::remove_all(root);
  ExperimentConfig c = parse_config(nlohmann::json::parse(
      R"({"experiment":"simulate","dim":2,"sim":{"N":400,"T":0.1,"replicas":12,"schedule_c":1.0,"seed":9}})"));
  std::vector<std::string> outputs;
  for (int workers : {1, 8, 1}) {
    c.workers = workers;
    c.output_dir = (root / ("w" + std::to_string(workers) + "_" + std::to_string(outputs.size()))).string();
    run_experiment(c);
    outputs.push_back(slurp(fs::path(c.output_dir) / "trajectory.csv") + slurp(fs::path(c.output_dir) / "events.ndjson"));
  }
  r.check(!outputs[0].empty() && outputs[0] == outputs[1] && outputs[0] == outputs[2],
          "simulate outputs byte-identical for 1, 8 and 1 workers (" + std::to_string(outputs[0].size()) + " bytes)");
  fs::remove_all(root);
  return r.pass();
}

bool criterion_martingale() {
  Report r;
  ExperimentConfig c = parse_config(nlohmann::json{{"experiment", "martingale"}});
  c.workers = 0;
  const MartingaleReport rep = run_martingale(c);
  for (const auto& row : rep.rows) {
    r.note("N=" + std::to_string(row.N) + ": M_T " + est(row.M_T) + ", E[M_T^2] " + est(row.M_T2) + ", bracket " +
           est(row.bracket) + ", M_T^2 - [M]_T " + est(row.difference));
    r.check(std::abs(row.M_T.mean) <= 3.0 * row.M_T.stderr_, "N=" + std::to_string(row.N) + " |mean M_T| <= 3 stderr");
    r.check(std::abs(row.difference.mean) <= 3.0 * row.difference.stderr_,
            "N=" + std::to_string(row.N) + " E[M_T^2] against the bracket within 3 stderr");
  }
  if (rep.rows.size() == 2) {
    const double ratio = rep.rows[1].M_T2.mean / rep.rows[0].M_T2.mean;
    r.check(ratio >= 0.35 && ratio <= 0.7, "E[M_T^2] ratio N=1000 -> 2000: " + num(ratio));
  } else {
    r.check(false, "expected two N values");
  }
  // Discretization check: the smaller N again at dt / 2.
  ExperimentConfig half = c;
  half.sim.dt = c.sim.dt / 2;
  half.martingale.N_values = {c.martingale.N_values.front()};
  const MartingaleRow row = run_martingale(half).rows.front();
  r.note("dt=" + num(half.sim.dt) + ", N=" + std::to_string(row.N) + ": M_T " + est(row.M_T) + ", E[M_T^2] " +
         est(row.M_T2) + ", bracket " + est(row.bracket));
  r.check(std::abs(row.M_T.mean) <= 3.0 * row.M_T.stderr_, "dt/2 |mean M_T| <= 3 stderr");
  r.check(std::abs(row.difference.mean) <= 3.0 * row.difference.stderr_,
          "dt/2 E[M_T^2] against the bracket within 3 stderr");
  return r.pass();
}

const ConvergeRow& row_at(const ConvergeReport& rep, double t, int N) {
  for (const auto& row : rep.rows) {
    if (row.N == N && std::abs(row.t - t) < 1e-9) return row;
  }
  throw ContractViolation("acceptance: missing converge row");
}

bool criterion_converge() {
  Report r;
  ExperimentConfig c = parse_config(nlohmann::json{{"experiment", "converge"}});
  c.workers = 0;
  const ConvergeReport rep = run_converge(c, [](const std::string& m) { std::cout << "  " << m << "\n" << std::flush; });
  for (double t : c.converge.times) {
    std::vector<const ConvergeRow*> rows;
    for (const auto& row : rep.rows) {
      if (std::abs(row.t - t) < 1e-9) rows.push_back(&row);
    }
    std::string line = "t=" + num(t) + ":";
    bool decreasing = rows.size() == c.converge.N_values.size();
    for (std::size_t i = 0; i < rows.size(); ++i) {
      line += " N=" + std::to_string(rows[i]->N) + " rho " + est(rows[i]->rho);
      if (i > 0) decreasing = decreasing && rows[i]->rho.mean < rows[i - 1]->rho.mean;
    }
    r.note(line);
    r.check(decreasing, "t=" + num(t) + " mean rho strictly decreasing in N");
    if (rows.size() >= 2) {
      const auto& a = rows.front()->rho;
      const auto& b = rows.back()->rho;
      const double gap = a.mean - b.mean, se = std::hypot(a.stderr_, b.stderr_);
      r.check(gap > 3.0 * se, "t=" + num(t) + " N=" + std::to_string(rows.front()->N) + " vs N=" +
                                  std::to_string(rows.back()->N) + " separation " + num(gap / se, 3) + " stderr");
    }
  }
  for (const auto& a : rep.annihilation) {
    r.note("N=" + std::to_string(a.N) + ": events/N " + est(a.annihilated) + ", J/2 " + est(a.interaction_half) +
           ", PDE " + num(a.pde_annihilated) + (a.resolved ? "" : " (unresolved)"));
  }
  const auto& top = rep.annihilation.back();
  r.check(std::abs(top.annihilated.mean - top.pde_annihilated) <= 3.0 * top.annihilated.stderr_ + 1e-3,
          "N=" + std::to_string(top.N) + " events/N against the PDE annihilated mass within 3 stderr + 1e-3");
  r.check(top.resolved, "N=" + std::to_string(top.N) + " interaction sub-grid resolved");

  // Discretization check: the largest N again at dt / 2.
  ExperimentConfig half = c;
  half.sim.dt = c.sim.dt / 2;
  half.converge.N_values = {c.converge.N_values.back()};
  half.converge.times = {c.sim.T};
  const ConvergeReport hr = run_converge(half);
  const auto& ha = hr.annihilation.back();
  r.note("dt=" + num(half.sim.dt) + ", N=" + std::to_string(ha.N) + ": rho(T) " + est(hr.rows.back().rho) +
         ", events/N " + est(ha.annihilated) + ", PDE " + num(ha.pde_annihilated));
  r.check(std::abs(ha.annihilated.mean - ha.pde_annihilated) <= 3.0 * ha.annihilated.stderr_ + 1e-3,
          "dt/2 events/N against the PDE annihilated mass within 3 stderr + 1e-3");
  const Estimate& full = row_at(rep, c.sim.T, ha.N).rho;
  const double drift = std::abs(hr.rows.back().rho.mean - full.mean);
  r.check(drift <= 3.0 * std::hypot(hr.rows.back().rho.stderr_, full.stderr_),
          "dt/2 mean rho(T) within 3 stderr of the dt value (difference " + num(drift, 3) + ")");
  return r.pass();
}

bool criterion_counterexample() {
  Report r;
  ExperimentConfig c = parse_config(nlohmann::json{{"experiment", "counterexample"}});
  c.workers = 0;
  const CounterexampleReport rep = run_counterexample(c);
  int events = 0;
  for (int k : rep.counts) events += k;
  r.note("N=" + std::to_string(rep.N) + ", delta=" + num(rep.delta) + ", mean events per replica " +
         num(static_cast<double>(events) / rep.counts.size()));
  r.note("rho to the decoupled system " + est(rep.rho_decoupled) + ", lambda=0 baseline " + est(rep.rho_baseline));
  r.note("standard-schedule control events/N " + est(rep.control_annihilated));
  r.check(rep.zero_fraction >= 0.95, "fraction of replicas without annihilation: " + num(rep.zero_fraction));
  const double se = std::hypot(rep.rho_decoupled.stderr_, rep.rho_baseline.stderr_);
  r.check(rep.rho_decoupled.mean - rep.rho_baseline.mean <= 3.0 * se,
          "rho to the decoupled system within 3 stderr of the lambda=0 baseline (ratio " + num(rep.rho_ratio) + ")");
  return r.pass();
}

bool criterion_feynman_kac() {
  Report r;
  const BoxGeometry g(1);
  SolverParams sp;
  sp.save_stride = 5;
  const CoupledSolution sol = solve_mild(g, linear_profile(1), linear_profile(1), 1.0, 0.25, sp);
  const double pde = sol.u_plus[sol.time_index(0.25)][sp.n_normal / 2];
  const auto trace = [&](double t, const Coords& z) { return sol.trace_at(Side::minus, t, z); };
  const Point x = point({0.5}, Side::plus);
  FeynmanKacParams fk;
  fk.replicas = 10000;
  fk.dt = 1e-4;
  fk.eps = 0.06;
  fk.seed = 8;
  for (double dt : {fk.dt, fk.dt / 2}) {
    FeynmanKacParams p = fk;
    p.dt = dt;
    const Estimate e = feynman_kac_u(g, Side::plus, 0.25, x, linear_profile(1), trace, p);
    r.check(std::abs(e.mean - pde) <= 3.0 * e.stderr_ + 1e-3,
            "dt=" + num(dt) + ": feynman_kac_u(0.5, 0.25) " + est(e) + " against solve_mild " + num(pde, 8));
  }
  return r.pass();
}

const std::vector<std::pair<std::string, std::function<bool()>>>& criteria() {
  static const std::vector<std::pair<std::string, std::function<bool()>>> all{
      {"geometry oracle", criterion_geometry},
      {"kernel suite", criterion_kernels},
      {"PDE cross-validation", criterion_pde},
      {"particle-system invariants", criterion_particles},
      {"martingale", criterion_martingale},
      {"hydrodynamic convergence", criterion_converge},
      {"counterexample schedule", criterion_counterexample},
      {"Feynman-Kac representation", criterion_feynman_kac},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance runs"};
  int which = 0;
  app.add_option("--criterion", which, "criterion number 1-8; 0 runs all")->check(CLI::Range(0, 8));
  CLI11_PARSE(app, argc, argv);

  bool all_pass = true;
  for (int k = 1; k <= 8; ++k) {
    if (which != 0 && k != which) continue;
    const auto& [name, fn] = criteria()[k - 1];
    std::cout << "criterion " << k << " (" << name << ")\n" << std::flush;
    const auto start = std::chrono::steady_clock::now();
    bool pass = false;
    std::string error;
    try {
      pass = fn();
    } catch (const std::exception& e) {
      error = e.what();
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << "criterion " << k << ": " << (pass ? "PASS" : "FAIL") << " (" << name << ", " << num(seconds, 4)
              << " s" << (error.empty() ? "" : ", error: " + error) << ")\n"
              << std::flush;
    all_pass = all_pass && pass;
  }
  return all_pass ? 0 : 1;
}
