#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "annihil/errors.hpp"
#include "annihil/kernels.hpp"
#include "annihil/particle_system.hpp"
#include "annihil/quadrature.hpp"
#include "doctest.h"

using namespace annihil;

namespace {

constexpr double kPi = std::numbers::pi;

struct Stats {
  double mean = 0.0;
  double se = 0.0;
};

Stats stats(const std::vector<double>& v) {
  Stats s;
  for (double a : v) s.mean += a;
  s.mean /= v.size();
  double q = 0.0;
  for (double a : v) q += (a - s.mean) * (a - s.mean);
  s.se = std::sqrt(q / (v.size() - 1) / v.size());
  return s;
}

SimParams small_params(int N, double lambda, double T = 0.1) {
  SimParams p;
  p.N = N;
  p.lambda = lambda;
  p.T = T;
  p.dt = 1e-3;
  return p;
}

void check_invariants(const Simulation& sim, int m) {
  const Configuration& c = sim.config();
  for (Side s : {Side::plus, Side::minus}) {
    REQUIRE(c.side(s).size() == static_cast<std::size_t>(m));
    CHECK(c.count(s, Status::active) + c.count(s, Status::harvested) + c.count(s, Status::annihilated) ==
          static_cast<std::size_t>(m));
  }
  CHECK(c.count(Side::plus, Status::annihilated) == c.count(Side::minus, Status::annihilated));
}

}  // namespace

TEST_CASE("initial sampling of the linear profile") {
  BoxGeometry g(1);
  SimParams p;
  p.N = 10000;
  Rng rp = make_stream(1, 0, Stream::init_plus);
  Rng rm = make_stream(1, 0, Stream::init_minus);
  const Configuration c = init(g, p, InitialProfile::linear(Side::plus, 1), InitialProfile::linear(Side::minus, 1), rp, rm);
  std::vector<double> xp, xm;
  for (const auto& r : c.plus) xp.push_back(r.position.coords[0]);
  for (const auto& r : c.minus) xm.push_back(r.position.coords[0]);
  const Stats sp = stats(xp), sm = stats(xm);
  CHECK(std::abs(sp.mean - 1.0 / 3.0) < 3.0 * sp.se);
  CHECK(std::abs(sm.mean + 1.0 / 3.0) < 3.0 * sm.se);
  std::sort(xp.begin(), xp.end());
  double ks = 0.0;
  const int n = static_cast<int>(xp.size());
  for (int i = 0; i < n; ++i) {
    const double F = 2.0 * xp[i] - xp[i] * xp[i];
    ks = std::max({ks, std::abs(F - static_cast<double>(i) / n), std::abs(F - static_cast<double>(i + 1) / n)});
  }
  CHECK(ks < 0.02);
  for (const auto& r : c.plus) CHECK(r.status == Status::active);
  CHECK(empirical_measure(c, Side::plus, p.N).mass() == doctest::Approx(1.0));
}

TEST_CASE("init refuses bad profiles") {
  BoxGeometry g(1);
  SimParams p;
  p.N = 10;
  Rng r1 = make_stream(1, 0, Stream::init_plus), r2 = make_stream(1, 0, Stream::init_minus);
  const auto heavy = InitialProfile::custom(Side::plus, [](const Point& x) { return 4.0 * (1.0 - x.coords[0]); }, 4.0);
  CHECK_THROWS_AS(init(g, p, heavy, InitialProfile::linear(Side::minus, 1), r1, r2), ConfigError);
  const auto flat = InitialProfile::custom(Side::plus, [](const Point&) { return 1.0; }, 1.0);
  CHECK_THROWS_AS(init(g, p, flat, InitialProfile::linear(Side::minus, 1), r1, r2), ConfigError);
  BoxGeometry off(1, false, false);
  CHECK_NOTHROW(init(off, p, flat, InitialProfile::linear(Side::minus, 1), r1, r2));
}

TEST_CASE("delta schedules and parameter validation") {
  SimParams p;
  p.N = 400;
  CHECK(p.delta(1) == doctest::Approx(0.4 / 400));
  CHECK(p.delta(2) == doctest::Approx(0.4 / 20));
  p.schedule = DeltaSchedule::counterexample;
  CHECK(p.delta(1) == doctest::Approx(std::pow(400.0, -3.0)));
  CHECK(p.delta(2) == doctest::Approx(std::pow(400.0, -2.0)));
  p.schedule = DeltaSchedule::explicit_value;
  p.delta_value = 0.01;
  CHECK(p.delta(3) == 0.01);

  SimParams bad = small_params(100, 1.0);
  bad.T = 0.1005;
  CHECK_THROWS_AS(bad.validate(1), ConfigError);
  bad = small_params(100, 1.0);
  bad.dt = 0.2;
  CHECK_THROWS_AS(bad.validate(1), ConfigError);
  bad = small_params(100, 1.0);
  bad.scheme = InteractionScheme::occupation;
  CHECK_THROWS_AS(bad.validate(1), ConfigError);  // delta too large for the point-tube limit
  bad.schedule = DeltaSchedule::counterexample;
  CHECK_THROWS_AS(bad.validate(2), ConfigError);
  bad.N = 1000;
  CHECK_NOTHROW(bad.validate(1));
  bad.N = 10;
  bad.lambda = 5.0;
  CHECK_THROWS_AS(bad.validate(1), ConfigError);
}

TEST_CASE("the bridge scheme refuses unresolvable pair rates") {
  BoxGeometry g(1);
  SimParams p = small_params(1000, 1.0);
  p.schedule = DeltaSchedule::counterexample;
  const auto up = InitialProfile::linear(Side::plus, 1);
  const auto um = InitialProfile::linear(Side::minus, 1);
  CHECK_THROWS_AS(Simulation(g, p, up, um, 0), NumericalRefusal);
  p.allow_unresolved = true;
  Simulation sim(g, p, up, um, 0);
  CHECK_FALSE(sim.resolved());
  CHECK(sim.substep_levels() == p.max_substep_levels);
}

TEST_CASE("mass is conserved without harvest or annihilation") {
  BoxGeometry g(2, false, false);
  SimParams p = small_params(500, 0.0, 0.2);
  const auto up = InitialProfile::custom(Side::plus, [](const Point&) { return 1.0; }, 1.0);
  const auto um = InitialProfile::custom(Side::minus, [](const Point&) { return 1.0; }, 1.0);
  Simulation sim(g, p, up, um, 3);
  while (!sim.finished()) {
    sim.step();
    CHECK(sim.measure(Side::plus).mass() == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(sim.measure(Side::minus).mass() == doctest::Approx(1.0).epsilon(1e-14));
  }
  CHECK(sim.events().empty());
}

TEST_CASE("harvested mass follows the mixed kernel") {
  BoxGeometry g(1);
  SimParams p = small_params(1000, 0.0, 0.5);
  const auto up = InitialProfile::linear(Side::plus, 1);
  const auto um = InitialProfile::linear(Side::minus, 1);
  std::vector<double> masses;
  for (int r = 0; r < 20; ++r) {
    Simulation sim(g, p, up, um, r);
    double prev = 1.0;
    while (!sim.finished()) {
      sim.step();
      const double m = sim.measure(Side::plus).mass();
      CHECK(m <= prev);
      prev = m;
    }
    masses.push_back(prev);
  }
  ProductKernel k(g, Side::plus);
  const auto rule = composite_gauss(20, 10, 0.0, 1.0);
  const double oracle = integrate(rule, [&](double a) {
    Point x;
    x.coords[0] = a;
    return 2.0 * (1.0 - a) * k.survival(0.5, x);
  });
  const Stats s = stats(masses);
  CHECK(std::abs(s.mean - oracle) < 3.0 * s.se);
}

TEST_CASE("configuration invariants on random runs") {
  std::mt19937_64 gen(12345);
  std::uniform_int_distribution<int> dim_d(1, 2);
  std::uniform_int_distribution<int> n_d(20, 120);
  std::uniform_real_distribution<double> lam_d(0.5, 20.0);
  for (int trial = 0; trial < 50; ++trial) {
    const int d = dim_d(gen);
    BoxGeometry g(d, trial % 3 != 0, trial % 4 != 0);
    SimParams p = small_params(n_d(gen), lam_d(gen), 0.1);
    p.seed = trial;
    p.schedule_c = 2.0;
    p.scheme = trial % 2 == 0 ? InteractionScheme::bridge : InteractionScheme::endpoint;
    p.m = trial % 5 == 0 ? p.N + 7 : 0;
    const int m = p.particles();
    const auto up = g.harvest(Side::plus) ? InitialProfile::linear(Side::plus, d)
                                          : InitialProfile::custom(Side::plus, [](const Point&) { return 1.0; }, 1.0);
    const auto um = g.harvest(Side::minus) ? InitialProfile::linear(Side::minus, d)
                                           : InitialProfile::custom(Side::minus, [](const Point&) { return 1.0; }, 1.0);
    Simulation sim(g, p, up, um, 0);
    double mp = sim.measure(Side::plus).mass(), mm = sim.measure(Side::minus).mass();
    CHECK(mp == doctest::Approx(static_cast<double>(m) / p.N));
    std::size_t seen = 0;
    while (!sim.finished()) {
      sim.step();
      check_invariants(sim, m);
      const double np = sim.measure(Side::plus).mass(), nm = sim.measure(Side::minus).mass();
      CHECK(np <= mp);
      CHECK(nm <= mm);
      mp = np;
      mm = nm;
      const auto& ev = sim.events();
      for (std::size_t i = seen; i < ev.size(); ++i) {
        if (i > 0) CHECK(ev[i].time >= ev[i - 1].time);
        CHECK(ev[i].time <= sim.time() + 1e-12);
        CHECK(ev[i].time > sim.time() - p.dt - 1e-12);
        if (ev[i].kind == EventKind::annihilation) {
          const auto& x = sim.config().plus[ev[i].id];
          const auto& y = sim.config().minus[ev[i].partner];
          CHECK(x.status == Status::annihilated);
          CHECK(y.status == Status::annihilated);
          CHECK(x.event_time == ev[i].time);
          CHECK(y.event_time == ev[i].time);
          CHECK(x.partner == y.id);
          CHECK(g.pair_interface_dist2(ev[i].x, ev[i].y) < sim.potential().delta * sim.potential().delta);
        }
      }
      seen = ev.size();
    }
    std::size_t ann = 0;
    for (const auto& e : sim.events()) ann += e.kind == EventKind::annihilation ? 1 : 0;
    CHECK(ann == sim.config().count(Side::plus, Status::annihilated));
  }
}

TEST_CASE("an annihilation removes 1/N from both sides at once") {
  // A single pair started in the tube with a large rate.
  BoxGeometry g(1, false, false);
  SimParams p = small_params(1, 1.0, 0.01);
  p.schedule = DeltaSchedule::explicit_value;
  p.delta_value = 0.3;
  p.scheme = InteractionScheme::endpoint;
  // Concentrated near the interface: u0 = 20 (1 - a)^19.
  const auto peak = [](const Point& x) { return 20.0 * std::pow(1.0 - std::abs(x.coords[0]), 19); };
  const auto up = InitialProfile::custom(Side::plus, peak, 20.0);
  const auto um = InitialProfile::custom(Side::minus, peak, 20.0);
  int fired = 0;
  for (int r = 0; r < 20; ++r) {
    Simulation sim(g, p, up, um, r);
    while (!sim.finished()) {
      const double before_p = sim.measure(Side::plus).mass();
      const double before_m = sim.measure(Side::minus).mass();
      sim.step();
      const double dp = before_p - sim.measure(Side::plus).mass();
      const double dm = before_m - sim.measure(Side::minus).mass();
      CHECK(dp == dm);
      if (dp > 0) {
        ++fired;
        CHECK(dp == 1.0);
        CHECK(sim.config().plus[0].event_time == sim.config().minus[0].event_time);
      }
    }
  }
  CHECK(fired > 0);
}

TEST_CASE("domination coupling with the non-annihilating system") {
  for (auto scheme : {InteractionScheme::bridge, InteractionScheme::endpoint}) {
    BoxGeometry g(1);
    SimParams p = small_params(400, 3.0, 0.3);
    p.scheme = scheme;
    p.schedule_c = 1.0;
    SimParams p0 = p;
    p0.lambda = 0.0;
    const auto up = InitialProfile::linear(Side::plus, 1);
    const auto um = InitialProfile::linear(Side::minus, 1);
    for (int r = 0; r < 5; ++r) {
      Simulation a(g, p, up, um, r);
      Simulation b(g, p0, up, um, r);
      bool any = false;
      while (!a.finished()) {
        a.step();
        b.step();
        for (Side s : {Side::plus, Side::minus}) {
          CHECK(a.measure(s).mass() <= b.measure(s).mass());
          // Surviving particles in the annihilating run are at the same place in the free run.
          for (std::size_t i = 0; i < a.config().side(s).size(); ++i) {
            const auto& x = a.config().side(s)[i];
            const auto& y = b.config().side(s)[i];
            if (x.status == Status::active) {
              CHECK(y.status == Status::active);
              CHECK(x.position.coords[0] == y.position.coords[0]);
            }
          }
        }
        any = any || a.measure(Side::plus).mass() < b.measure(Side::plus).mass();
      }
      CHECK(any);
    }
  }
}

TEST_CASE("runs are deterministic given the seed") {
  BoxGeometry g(2);
  SimParams p = small_params(300, 1.0, 0.1);
  p.schedule_c = 1.0;
  p.seed = 77;
  const auto up = InitialProfile::linear(Side::plus, 2);
  const auto um = InitialProfile::linear(Side::minus, 2);
  const RunResult a = run(g, p, up, um, 4);
  const RunResult b = run(g, p, up, um, 4);
  REQUIRE(a.events.size() == b.events.size());
  for (std::size_t i = 0; i < a.events.size(); ++i) {
    CHECK(a.events[i].time == b.events[i].time);
    CHECK(a.events[i].id == b.events[i].id);
    CHECK(a.events[i].x.coords == b.events[i].x.coords);
  }
  CHECK(a.interaction_integral == b.interaction_integral);
  const RunResult c = run(g, p, up, um, 5);
  CHECK(c.final_config.plus[0].position.coords != a.final_config.plus[0].position.coords);
  // Save times: every save_stride steps and at T.
  REQUIRE(a.trajectory.size() == 6);
  for (std::size_t i = 0; i < a.trajectory.size(); ++i) CHECK(a.trajectory[i].t == doctest::Approx(0.02 * i));
  CHECK(is_save_step(100, 100, 30));
  CHECK_FALSE(is_save_step(31, 100, 30));
}

TEST_CASE("accounting identity and the interaction bound") {
  BoxGeometry g(1);
  SimParams p = small_params(1000, 1.0, 0.5);
  const auto up = InitialProfile::linear(Side::plus, 1);
  const auto um = InitialProfile::linear(Side::minus, 1);
  std::vector<double> J;
  for (int r = 0; r < 8; ++r) {
    const RunResult res = run(g, p, up, um, r);
    for (Side s : {Side::plus, Side::minus}) {
      std::size_t ann = 0, harv = 0;
      for (const auto& e : res.events) {
        if (e.kind == EventKind::annihilation) ++ann;
        else if (e.side == s) ++harv;
      }
      const std::size_t alive = res.final_config.count(s, Status::active);
      CHECK(ann + harv + alive == static_cast<std::size_t>(p.N));
    }
    J.push_back(res.interaction_integral);
  }
  const Stats s = stats(J);
  CHECK(s.mean <= 1.0 + 3.0 * s.se);
}

TEST_CASE("pairing against empirical measures") {
  EmpiricalMeasure empty;
  CHECK(pair_against([](const Point&) { return 1.0; }, empty) == 0.0);

  BoxGeometry g(1);
  SimParams p;
  p.N = 10000;
  Rng rp = make_stream(2, 0, Stream::init_plus), rm = make_stream(2, 0, Stream::init_minus);
  // Density proportional to the first mixed eigenfunction sqrt(2) cos(pi a / 2).
  const double z = 2.0 * std::sqrt(2.0) / kPi;
  const auto phi = [](const Point& x) { return std::sqrt(2.0) * std::cos(0.5 * kPi * std::abs(x.coords[0])); };
  const auto up = InitialProfile::custom(Side::plus, [&](const Point& x) { return phi(x) / z; }, std::sqrt(2.0) / z);
  const Configuration c = init(g, p, up, InitialProfile::linear(Side::minus, 1), rp, rm);
  const EmpiricalMeasure mu = empirical_measure(c, Side::plus, p.N);
  CHECK(pair_against([](const Point&) { return 1.0; }, mu) == doctest::Approx(mu.mass()));
  const auto rule = composite_gauss(20, 4, 0.0, 1.0);
  Point x;
  const double oracle = integrate(rule, [&](double a) {
    x.coords[0] = a;
    return phi(x) * phi(x) / z;
  });
  std::vector<double> vals;
  for (const auto& atom : mu.atoms) vals.push_back(phi(atom));
  const Stats s = stats(vals);
  CHECK(std::abs(pair_against(phi, mu) - oracle) < 3.0 * s.se);
}

TEST_CASE("occupation scheme annihilates at the point-tube rate") {
  // With delta far below sqrt(dt), the occupation scheme still removes mass
  // and records both partners at the interface.
  BoxGeometry g(1);
  SimParams p = small_params(2000, 1.0, 0.1);
  p.schedule = DeltaSchedule::counterexample;
  p.scheme = InteractionScheme::occupation;
  const auto up = InitialProfile::linear(Side::plus, 1);
  const auto um = InitialProfile::linear(Side::minus, 1);
  Simulation sim(g, p, up, um, 0);
  while (!sim.finished()) {
    sim.step();
    check_invariants(sim, p.N);
  }
  const std::size_t ann = sim.config().count(Side::plus, Status::annihilated);
  CHECK(ann > 0);
  CHECK(sim.interaction_integral() > 0.0);
  for (const auto& e : sim.events()) {
    if (e.kind == EventKind::annihilation) {
      CHECK(e.x.coords[0] == 0.0);
      CHECK(e.y.coords[0] == 0.0);
    }
  }
}
