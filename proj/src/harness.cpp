#include "annihil/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "annihil/errors.hpp"
#include "annihil/parallel.hpp"
#include "annihil/quadrature.hpp"
#include "annihil/version.hpp"

namespace annihil {

using nlohmann::json;

std::string fmt17(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

const std::vector<std::string>& experiment_kinds() {
  static const std::vector<std::string> kinds{"simulate",       "pde",       "converge",   "martingale",
                                              "counterexample", "minkowski", "massbalance"};
  return kinds;
}

// ---------------------------------------------------------------- config

namespace {

const char* schedule_name(DeltaSchedule s) {
  switch (s) {
    case DeltaSchedule::standard: return "standard";
    case DeltaSchedule::counterexample: return "counterexample";
    case DeltaSchedule::explicit_value: return "explicit";
  }
  return "standard";
}

const char* scheme_name(InteractionScheme s) {
  switch (s) {
    case InteractionScheme::bridge: return "bridge";
    case InteractionScheme::endpoint: return "endpoint";
    case InteractionScheme::occupation: return "occupation";
  }
  return "bridge";
}

const char* method_name(SolverMethod m) {
  switch (m) {
    case SolverMethod::automatic: return "auto";
    case SolverMethod::mild: return "mild";
    case SolverMethod::fd: return "fd";
  }
  return "auto";
}

// Reads keys of one JSON object, remembering which were consumed.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config key '" + label() + "' must be an object");
  }

  bool has(const char* key) const { return j_.contains(key); }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError("");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError("");
      }
      out = v.get<T>();
    } catch (const std::exception&) {
      throw ConfigError("config key '" + label(key) + "' has the wrong type");
    }
  }

  template <class T>
  void get_list(const char* key, std::vector<T>& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    if (!v.is_array()) throw ConfigError("config key '" + label(key) + "' must be an array");
    std::vector<T> tmp;
    for (const auto& e : v) {
      if constexpr (std::is_integral_v<T>) {
        if (!e.is_number_integer()) throw ConfigError("config key '" + label(key) + "' must hold integers");
      } else {
        if (!e.is_number()) throw ConfigError("config key '" + label(key) + "' must hold numbers");
      }
      tmp.push_back(e.get<T>());
    }
    out = std::move(tmp);
  }

  Section child(const char* key) {
    seen_.insert(key);
    return Section(j_.at(key), label(key));
  }

  template <class E>
  void get_enum(const char* key, E& out, const std::vector<std::pair<std::string, E>>& names) {
    std::string s;
    if (!j_.contains(key)) {
      seen_.insert(key);
      return;
    }
    get(key, s);
    for (const auto& [n, e] : names) {
      if (n == s) {
        out = e;
        return;
      }
    }
    std::string allowed;
    for (const auto& [n, e] : names) allowed += (allowed.empty() ? "" : ", ") + n;
    throw ConfigError("config key '" + label(key) + "' must be one of " + allowed + ", got '" + s + "'");
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown config key '" + label(it.key()) + "'");
    }
  }

  std::string label(const std::string& key = "") const {
    if (key.empty()) return path_;
    return path_.empty() ? key : path_ + "." + key;
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_drift(Section s, DriftSpec& d) {
  std::vector<double> b;
  s.get_list("b", b);
  if (b.size() > static_cast<std::size_t>(kMaxDim)) throw ConfigError("config key '" + s.label("b") + "' is too long");
  d.b = Coords{};
  for (std::size_t i = 0; i < b.size(); ++i) d.b[i] = b[i];
  s.get("s", d.s);
  s.finish();
}

json drift_json(const DriftSpec& d, int dim) {
  json b = json::array();
  for (int i = 0; i < dim; ++i) b.push_back(d.b[i]);
  return {{"b", b}, {"s", d.s}};
}

const std::vector<std::pair<std::string, DeltaSchedule>> kSchedules{
    {"standard", DeltaSchedule::standard},
    {"counterexample", DeltaSchedule::counterexample},
    {"explicit", DeltaSchedule::explicit_value}};
const std::vector<std::pair<std::string, InteractionScheme>> kSchemes{
    {"bridge", InteractionScheme::bridge},
    {"endpoint", InteractionScheme::endpoint},
    {"occupation", InteractionScheme::occupation}};
const std::vector<std::pair<std::string, SolverMethod>> kMethods{
    {"auto", SolverMethod::automatic}, {"mild", SolverMethod::mild}, {"fd", SolverMethod::fd}};

}  // namespace

ExperimentConfig parse_config(const json& j) {
  ExperimentConfig c;
  Section root(j, "");
  if (!root.has("experiment")) throw ConfigError("missing required config key 'experiment'");
  root.get("experiment", c.experiment);
  root.get("dim", c.dim);
  root.get("harvest_plus", c.harvest_plus);
  root.get("harvest_minus", c.harvest_minus);
  root.get("basis_size", c.basis_size);
  root.get("output_dir", c.output_dir);
  root.get("save_stride", c.save_stride);
  root.get("workers", c.workers);
  if (root.has("sim")) {
    Section s = root.child("sim");
    SimParams& p = c.sim;
    s.get("N", p.N);
    s.get("m", p.m);
    s.get("lambda", p.lambda);
    s.get_enum("delta_schedule", p.schedule, kSchedules);
    s.get("delta_value", p.delta_value);
    s.get("schedule_c", p.schedule_c);
    s.get("dt", p.dt);
    s.get("T", p.T);
    if (s.has("drift_plus")) read_drift(s.child("drift_plus"), p.drift_plus);
    if (s.has("drift_minus")) read_drift(s.child("drift_minus"), p.drift_minus);
    s.get("seed", p.seed);
    s.get("replicas", p.replicas);
    s.get("bridge_correction", p.bridge_correction);
    s.get_enum("scheme", p.scheme, kSchemes);
    s.get("max_substep_probability", p.max_substep_probability);
    s.get("max_substep_levels", p.max_substep_levels);
    s.get("allow_unresolved", p.allow_unresolved);
    s.get("prune_eps", p.prune_eps);
    s.finish();
  }
  if (root.has("solver")) {
    Section s = root.child("solver");
    s.get("n_normal", c.solver.n_normal);
    s.get("n_tangential", c.solver.n_tangential);
    s.get("spectral_modes", c.solver.spectral_modes);
    s.get("fd_dt", c.solver.fd_dt);
    s.get("cfl_fraction", c.solver.cfl_fraction);
    s.get("picard_tol", c.solver.picard_tol);
    s.get("picard_max", c.solver.picard_max);
    s.get_enum("method", c.solver_method, kMethods);
    s.finish();
  }
  if (root.has("converge")) {
    Section s = root.child("converge");
    s.get_list("N_values", c.converge.N_values);
    s.get("replicas", c.converge.replicas);
    s.get_list("times", c.converge.times);
    s.finish();
  }
  if (root.has("martingale")) {
    Section s = root.child("martingale");
    s.get_list("N_values", c.martingale.N_values);
    s.get("replicas", c.martingale.replicas);
    s.get("phi_plus", c.martingale.phi_plus);
    s.get("phi_minus", c.martingale.phi_minus);
    s.finish();
  }
  if (root.has("counterexample")) {
    Section s = root.child("counterexample");
    s.get("N", c.counterexample.N);
    s.get("replicas", c.counterexample.replicas);
    s.get("control_replicas", c.counterexample.control_replicas);
    s.get_enum("scheme", c.counterexample.scheme, kSchemes);
    s.finish();
  }
  if (root.has("minkowski")) {
    Section s = root.child("minkowski");
    s.get_list("dims", c.minkowski.dims);
    s.get_list("deltas", c.minkowski.deltas);
    s.get("cells_per_delta", c.minkowski.cells_per_delta);
    s.finish();
  }
  root.finish();
  validate(c);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

json to_json(const ExperimentConfig& c) {
  const SimParams& p = c.sim;
  json sim = {{"N", p.N},
              {"m", p.m},
              {"lambda", p.lambda},
              {"delta_schedule", schedule_name(p.schedule)},
              {"delta_value", p.delta_value},
              {"schedule_c", p.schedule_c},
              {"dt", p.dt},
              {"T", p.T},
              {"drift_plus", drift_json(p.drift_plus, c.dim)},
              {"drift_minus", drift_json(p.drift_minus, c.dim)},
              {"seed", p.seed},
              {"replicas", p.replicas},
              {"bridge_correction", p.bridge_correction},
              {"scheme", scheme_name(p.scheme)},
              {"max_substep_probability", p.max_substep_probability},
              {"max_substep_levels", p.max_substep_levels},
              {"allow_unresolved", p.allow_unresolved},
              {"prune_eps", p.prune_eps}};
  json solver = {{"n_normal", c.solver.n_normal},         {"n_tangential", c.solver.n_tangential},
                 {"spectral_modes", c.solver.spectral_modes}, {"fd_dt", c.solver.fd_dt},
                 {"cfl_fraction", c.solver.cfl_fraction}, {"picard_tol", c.solver.picard_tol},
                 {"picard_max", c.solver.picard_max},     {"method", method_name(c.solver_method)}};
  return {{"experiment", c.experiment},
          {"dim", c.dim},
          {"harvest_plus", c.harvest_plus},
          {"harvest_minus", c.harvest_minus},
          {"basis_size", c.basis_size},
          {"output_dir", c.output_dir},
          {"save_stride", c.save_stride},
          {"workers", c.workers},
          {"sim", sim},
          {"solver", solver},
          {"converge",
           {{"N_values", c.converge.N_values}, {"replicas", c.converge.replicas}, {"times", c.converge.times}}},
          {"martingale",
           {{"N_values", c.martingale.N_values},
            {"replicas", c.martingale.replicas},
            {"phi_plus", c.martingale.phi_plus},
            {"phi_minus", c.martingale.phi_minus}}},
          {"counterexample",
           {{"N", c.counterexample.N},
            {"replicas", c.counterexample.replicas},
            {"control_replicas", c.counterexample.control_replicas},
            {"scheme", scheme_name(c.counterexample.scheme)}}},
          {"minkowski",
           {{"dims", c.minkowski.dims},
            {"deltas", c.minkowski.deltas},
            {"cells_per_delta", c.minkowski.cells_per_delta}}}};
}

void validate(const ExperimentConfig& c) {
  const auto& kinds = experiment_kinds();
  if (std::find(kinds.begin(), kinds.end(), c.experiment) == kinds.end()) {
    throw ConfigError("config key 'experiment' has unknown value '" + c.experiment + "'");
  }
  if (c.dim < 1 || c.dim > kMaxDim) throw ConfigError("config key 'dim' must be 1, 2 or 3");
  if (c.basis_size < 1 || c.basis_size > 60) throw ConfigError("config key 'basis_size' must be in 1..60");
  if (c.save_stride < 1) throw ConfigError("config key 'save_stride' must be positive");
  if (c.workers < 0) throw ConfigError("config key 'workers' must be nonnegative");
  SimParams p = c.sim;
  p.save_stride = c.save_stride;
  p.validate(c.dim);
  c.solver.validate();
  if (c.converge.N_values.empty() || c.converge.replicas < 1) throw ConfigError("config key 'converge' is incomplete");
  if (c.experiment == "converge" && c.sim.schedule == DeltaSchedule::counterexample) {
    // N delta^d -> 0 under this schedule, so the interaction vanishes in the limit.
    throw ConfigError("config key 'sim.delta_schedule': converge needs N delta^d bounded below; use standard");
  }
  for (int n : c.converge.N_values) {
    if (n < 1) throw ConfigError("config key 'converge.N_values' must be positive");
  }
  if (c.martingale.N_values.empty() || c.martingale.replicas < 2) {
    throw ConfigError("config key 'martingale' needs N_values and at least 2 replicas");
  }
  for (int n : c.martingale.N_values) {
    if (n < 1) throw ConfigError("config key 'martingale.N_values' must be positive");
  }
  if (c.martingale.phi_plus < 1 || c.martingale.phi_plus > c.basis_size || c.martingale.phi_minus < 1 ||
      c.martingale.phi_minus > c.basis_size) {
    throw ConfigError("config key 'martingale.phi_plus/phi_minus' must index the test basis (1..basis_size)");
  }
  if (c.counterexample.N < 1 || c.counterexample.replicas < 1 || c.counterexample.control_replicas < 1) {
    throw ConfigError("config key 'counterexample' needs positive N and replica counts");
  }
  for (int d : c.minkowski.dims) {
    if (d < 1 || d > kMaxDim) throw ConfigError("config key 'minkowski.dims' must hold 1, 2 or 3");
  }
  for (double d : c.minkowski.deltas) {
    if (!(d > 0.0 && d < 0.5)) throw ConfigError("config key 'minkowski.deltas' must lie in (0, 1/2)");
  }
  if (c.minkowski.cells_per_delta < 2) throw ConfigError("config key 'minkowski.cells_per_delta' must be >= 2");
}

// ---------------------------------------------------------------- scenario

namespace {

InitialProfile linear_profile(const BoxGeometry& geom, Side side, const DriftSpec& drift) {
  const int d = geom.dim();
  if (drift.is_zero(d)) return InitialProfile::linear(side, d);
  const QuadratureRule q = composite_gauss(10, 8, 0.0, 1.0);
  const QuadratureRule q0{{0.0}, {1.0}};
  const QuadratureRule& q1 = d >= 2 ? q : q0;
  const QuadratureRule& q2 = d == 3 ? q : q0;
  double z = 0.0;
  Point p;
  p.side = side;
  for (std::size_t a = 0; a < q1.nodes.size(); ++a) {
    for (std::size_t b = 0; b < q2.nodes.size(); ++b) {
      if (d >= 2) p.coords[0] = q1.nodes[a];
      if (d == 3) p.coords[1] = q2.nodes[b];
      for (std::size_t k = 0; k < q.nodes.size(); ++k) {
        p.coords[d - 1] = side == Side::plus ? q.nodes[k] : -q.nodes[k];
        z += q1.weights[a] * q2.weights[b] * q.weights[k] * 2.0 * (1.0 - q.nodes[k]) * drift.rho(p, d);
      }
    }
  }
  // Largest value of rho on the closed box: each exponent term is maximal at an endpoint.
  double log_max = 0.0;
  for (int i = 0; i < d; ++i) {
    const double lo = (i == d - 1 && side == Side::minus) ? -1.0 : 0.0;
    const double hi = lo + 1.0;
    log_max += std::max(2.0 * drift.b[i] * lo, 2.0 * drift.b[i] * hi) / drift.s;
  }
  const double bound = 2.0 / z * std::exp(log_max);
  auto u0 = [d, z](const Point& x) { return 2.0 * (1.0 - normal_coordinate(x, d)) / z; };
  return InitialProfile::custom(side, u0, bound);
}

std::filesystem::path prepare_output(const ExperimentConfig& c) {
  std::filesystem::path dir(c.output_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + dir.string() + "': " + ec.message());
  return dir;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  return out;
}

// JSON writer that prints every floating value with 17 significant digits.
void write_json(std::ostream& os, const json& j, int indent = 0) {
  const std::string pad(indent, ' ');
  const std::string pad2(indent + 2, ' ');
  switch (j.type()) {
    case json::value_t::object: {
      if (j.empty()) {
        os << "{}";
        return;
      }
      os << "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) os << ",\n";
        first = false;
        os << pad2 << json(it.key()).dump() << ": ";
        write_json(os, it.value(), indent + 2);
      }
      os << "\n" << pad << "}";
      return;
    }
    case json::value_t::array: {
      os << "[";
      bool first = true;
      for (const auto& e : j) {
        if (!first) os << ", ";
        first = false;
        write_json(os, e, indent + 2);
      }
      os << "]";
      return;
    }
    case json::value_t::number_float: os << fmt17(j.get<double>()); return;
    default: os << j.dump(); return;
  }
}

json make_manifest(const ExperimentConfig& c, const std::string& command) {
  return {{"tool", "annihil"},
          {"version", kVersion},
          {"command", command},
          {"seed", c.sim.seed},
          {"config", to_json(c)}};
}

void finish_manifest(const ExperimentConfig& c, json& manifest, const std::vector<std::string>& outputs) {
  manifest["outputs"] = outputs;
  const auto dir = prepare_output(c);
  auto out = open_output(dir / "manifest.json");
  write_json(out, manifest);
  out << "\n";
}

std::string coords_json(const Point& p, int dim) {
  std::string s = "[";
  for (int i = 0; i < dim; ++i) s += (i ? "," : "") + fmt17(p.coords[i]);
  return s + "]";
}

void write_events(std::ostream& os, const EventLog& events, int replica, int dim) {
  for (const auto& e : events) {
    os << "{\"replica\":" << replica << ",\"t\":" << fmt17(e.time);
    if (e.kind == EventKind::annihilation) {
      os << ",\"kind\":\"annihilation\",\"plus\":" << e.id << ",\"minus\":" << e.partner
         << ",\"x\":" << coords_json(e.x, dim) << ",\"y\":" << coords_json(e.y, dim);
    } else {
      os << ",\"kind\":\"harvest\",\"side\":\"" << side_name(e.side) << "\",\"id\":" << e.id
         << ",\"x\":" << coords_json(e.x, dim);
    }
    os << "}\n";
  }
}

json estimate_json(const Estimate& e) { return {{"mean", e.mean}, {"stderr", e.stderr_}, {"samples", e.samples}}; }

Pairings solution_pairings(const CoupledSolution& sol, std::size_t i, const TestBasis& basis) {
  MeasurePair mp{density_to_measure(sol.grid_function(Side::plus, i), sol.drift_plus),
                 density_to_measure(sol.grid_function(Side::minus, i), sol.drift_minus)};
  return pairings(mp, basis);
}

// Index of time t in a list of save times, or -1.
int find_time(const std::vector<double>& times, double t) {
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (std::abs(times[i] - t) <= 1e-9 * std::max(1.0, t)) return static_cast<int>(i);
  }
  return -1;
}

unsigned workers_of(const ExperimentConfig& c) { return static_cast<unsigned>(c.workers); }

}  // namespace

Scenario make_scenario(const ExperimentConfig& c) {
  BoxGeometry geom(c.dim, c.harvest_plus, c.harvest_minus);
  SimParams p = c.sim;
  p.save_stride = c.save_stride;
  return Scenario{geom, linear_profile(geom, Side::plus, p.drift_plus), linear_profile(geom, Side::minus, p.drift_minus),
                  p};
}

CoupledSolution solve_pde(const Scenario& s, const SolverParams& params, SolverMethod method, double lambda) {
  SolverParams sp = params;
  sp.dt = s.sim.dt;
  sp.save_stride = s.sim.save_stride;
  const int d = s.geom.dim();
  const bool zero_drift = s.sim.drift_plus.is_zero(d) && s.sim.drift_minus.is_zero(d);
  if (method == SolverMethod::automatic) method = zero_drift ? SolverMethod::mild : SolverMethod::fd;
  if (method == SolverMethod::mild) {
    if (!zero_drift) throw ConfigError("the mild solver requires zero drift; use solver method 'fd'");
    return solve_mild(s.geom, s.u0_plus.function(), s.u0_minus.function(), lambda, s.sim.T, sp, s.sim.drift_plus.s,
                      s.sim.drift_minus.s);
  }
  return solve_fd(s.geom, s.u0_plus.function(), s.u0_minus.function(), lambda, s.sim.drift_plus, s.sim.drift_minus,
                  s.sim.T, sp);
}

Estimate summarize(const std::vector<double>& x) {
  Estimate e;
  e.samples = x.size();
  if (x.empty()) return e;
  double s = 0.0;
  for (double v : x) s += v;
  e.mean = s / static_cast<double>(x.size());
  if (x.size() > 1) {
    double q = 0.0;
    for (double v : x) q += (v - e.mean) * (v - e.mean);
    e.stderr_ = std::sqrt(q / static_cast<double>(x.size() - 1) / static_cast<double>(x.size()));
  }
  return e;
}

ReplicaObservation observe_replica(const Scenario& s, const TestBasis& basis, std::uint64_t replica,
                                   bool keep_events) {
  Simulation sim(s.geom, s.sim, s.u0_plus, s.u0_minus, replica);
  ReplicaObservation obs;
  auto record = [&] {
    obs.times.push_back(sim.time());
    obs.pairings.push_back(pairings(to_measure_pair(sim.measure(Side::plus), sim.measure(Side::minus)), basis));
  };
  record();
  while (!sim.finished()) {
    sim.step();
    if (is_save_step(sim.steps_done(), sim.total_steps(), s.sim.save_stride)) record();
  }
  obs.annihilations = sim.config().count(Side::plus, Status::annihilated);
  obs.interaction_integral = sim.interaction_integral();
  obs.resolved = sim.resolved();
  if (keep_events) {
    obs.events = sim.events();
    obs.final_config = sim.config();
  }
  return obs;
}

// ---------------------------------------------------------------- experiments

ConvergeReport run_converge(const ExperimentConfig& c, const Logger& log) {
  if (c.dim > 2) throw ConfigError("converge supports d = 1 and d = 2");
  ConvergeReport report;
  const TestBasis basis(BoxGeometry(c.dim, c.harvest_plus, c.harvest_minus), c.basis_size, c.sim.drift_plus.s,
                        c.sim.drift_minus.s);
  std::vector<double> last_means;
  // Save often enough that every requested time is a save time.
  int stride = c.save_stride;
  for (double t : c.converge.times) {
    const long long k = std::llround(t / c.sim.dt);
    if (k <= 0 || std::abs(k * c.sim.dt - t) > 1e-9 * std::max(1.0, t) || t > c.sim.T + 1e-12) {
      throw ConfigError("config key 'converge.times': " + fmt17(t) + " is not a step time in (0, T]");
    }
    stride = std::gcd(stride, static_cast<int>(k));
  }
  for (int N : c.converge.N_values) {
    ExperimentConfig cn = c;
    cn.sim.N = N;
    cn.save_stride = stride;
    const Scenario s = make_scenario(cn);
    const CoupledSolution sol = solve_pde(s, c.solver, c.solver_method, s.sim.lambda);
    std::vector<int> idx;
    for (double t : c.converge.times) {
      const int i = find_time(sol.times, t);
      if (i < 0) throw ConfigError("config key 'converge.times': " + fmt17(t) + " is not a save time");
      idx.push_back(i);
    }
    std::vector<Pairings> pde(sol.times.size());
    for (std::size_t i = 0; i < sol.times.size(); ++i) pde[i] = solution_pairings(sol, i, basis);

    const int R = c.converge.replicas;
    std::vector<std::vector<WeakDistance>> dist(R);
    std::vector<double> ann(R), jhalf(R), jump(R);
    std::vector<char> resolved(R, 1);
    parallel_for(R, workers_of(c), [&](std::size_t r) {
      const ReplicaObservation obs = observe_replica(s, basis, r, false);
      if (obs.times.size() != sol.times.size()) throw ContractViolation("converge: save times differ");
      for (int i : idx) dist[r].push_back(rho_distance(obs.pairings[i], pde[i]));
      double mj = 0.0;
      for (std::size_t k = 1; k < obs.pairings.size(); ++k) {
        mj = std::max(mj, rho_distance(obs.pairings[k - 1], obs.pairings[k]).value);
      }
      jump[r] = mj;
      ann[r] = static_cast<double>(obs.annihilations) / N;
      jhalf[r] = 0.5 * obs.interaction_integral;
      resolved[r] = obs.resolved;
    });
    for (std::size_t q = 0; q < idx.size(); ++q) {
      std::vector<double> v(R);
      double tail = 0.0;
      for (int r = 0; r < R; ++r) {
        v[r] = dist[r][q].value;
        tail = std::max(tail, dist[r][q].tail_bound);
      }
      report.rows.push_back({N, sol.times[idx[q]], summarize(v), tail});
    }
    ConvergeAnnihilation a;
    a.N = N;
    a.annihilated = summarize(ann);
    a.pde_annihilated = sol.annihilated.back();
    a.interaction_half = summarize(jhalf);
    a.max_jump = summarize(jump);
    a.resolved = std::all_of(resolved.begin(), resolved.end(), [](char x) { return x != 0; });
    report.annihilation.push_back(a);
    last_means.push_back(report.rows.back().rho.mean);
    if (log) {
      std::ostringstream m;
      m << "converge N=" << N << " rho(T)=" << report.rows.back().rho.mean << " ann/N=" << a.annihilated.mean
        << " pde=" << a.pde_annihilated;
      log(m.str());
    }
  }
  if (last_means.size() >= 2) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(last_means.size());
    for (std::size_t i = 0; i < last_means.size(); ++i) {
      const double x = std::log(static_cast<double>(c.converge.N_values[i]));
      const double y = std::log(last_means[i]);
      sx += x, sy += y, sxx += x * x, sxy += x * y;
    }
    report.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  }
  return report;
}

MartingaleReport run_martingale(const ExperimentConfig& c, const Logger& log) {
  const int d = c.dim;
  if (d > 2) throw ConfigError("martingale supports d = 1 and d = 2");
  if (!c.sim.drift_plus.is_zero(d) || !c.sim.drift_minus.is_zero(d)) {
    throw ConfigError("martingale: eigen test functions satisfy A phi = -mu phi only for zero drift");
  }
  if (c.sim.scheme == InteractionScheme::occupation && c.sim.lambda > 0.0) {
    throw ConfigError("martingale needs pair observations; the occupation scheme does not provide them");
  }
  const BoxGeometry geom(d, c.harvest_plus, c.harvest_minus);
  const TestBasis basis(geom, c.basis_size, c.sim.drift_plus.s, c.sim.drift_minus.s);
  const TestFunction& fp = basis.f(c.martingale.phi_plus);
  const TestFunction& fm = basis.g(c.martingale.phi_minus);
  MartingaleReport report;
  report.phi_plus = c.martingale.phi_plus;
  report.phi_minus = c.martingale.phi_minus;
  for (int N : c.martingale.N_values) {
    ExperimentConfig cn = c;
    cn.sim.N = N;
    const Scenario s = make_scenario(cn);
    const int R = c.martingale.replicas;
    std::vector<std::vector<double>> paths(R);
    std::vector<double> times;
    std::vector<double> mt(R), mt2(R), brk(R), diff(R);
    parallel_for(R, workers_of(c), [&](std::size_t r) {
      Simulation sim(s.geom, s.sim, s.u0_plus, s.u0_minus, r);
      double comp = 0.0;
      double jump_bracket = 0.0;
      sim.set_pair_observer([&](const Point& x, const Point& y, double w) {
        const double v = fp(x) + fm(y);
        comp += 0.5 * w * v;
        jump_bracket += 0.5 * w * v * v / N;
      });
      const double dt = s.sim.dt;
      auto value = [&](double& drift_part, double& qv_part) {
        double v = 0.0;
        drift_part = 0.0;
        qv_part = 0.0;
        for (Side side : {Side::plus, Side::minus}) {
          const TestFunction& phi = side == Side::plus ? fp : fm;
          double sv = 0.0;
          double sg = 0.0;
          for (const auto& rec : sim.config().side(side)) {
            if (rec.status != Status::active) continue;
            sv += phi(rec.position);
            const Coords g = phi.gradient(rec.position);
            double g2 = 0.0;
            for (int i = 0; i < d; ++i) g2 += g[i] * g[i];
            sg += g2;
          }
          v += sv / N;
          drift_part += phi.eigenvalue * sv / N;
          qv_part += phi.diffusion * sg / (static_cast<double>(N) * N);
        }
        return v;
      };
      double a0, g0;
      const double v0 = value(a0, g0);
      double integral = 0.0;
      double qv = 0.0;
      std::vector<double> path{0.0};
      std::vector<double> tloc{0.0};
      while (!sim.finished()) {
        sim.step();
        double a1, g1;
        const double v1 = value(a1, g1);
        integral += 0.5 * dt * (a0 + a1);
        qv += 0.5 * dt * (g0 + g1);
        a0 = a1;
        g0 = g1;
        if (is_save_step(sim.steps_done(), sim.total_steps(), s.sim.save_stride)) {
          path.push_back(v1 - v0 + integral + comp);
          tloc.push_back(sim.time());
        }
      }
      const double m = path.back();
      const double b = qv + jump_bracket;
      mt[r] = m;
      mt2[r] = m * m;
      brk[r] = b;
      diff[r] = m * m - b;
      paths[r] = std::move(path);
      if (r == 0) times = tloc;
    });
    MartingaleRow row;
    row.N = N;
    row.replicas = R;
    row.times = times;
    for (std::size_t k = 0; k < times.size(); ++k) {
      std::vector<double> v(R);
      for (int r = 0; r < R; ++r) v[r] = paths[r][k];
      row.mean_M.push_back(summarize(v));
    }
    row.M_T = summarize(mt);
    row.M_T2 = summarize(mt2);
    row.bracket = summarize(brk);
    row.difference = summarize(diff);
    if (log) {
      std::ostringstream m;
      m << "martingale N=" << N << " mean M_T=" << row.M_T.mean << " +- " << row.M_T.stderr_
        << " E[M_T^2]=" << row.M_T2.mean << " bracket=" << row.bracket.mean;
      log(m.str());
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

CounterexampleReport run_counterexample(const ExperimentConfig& c, const Logger& log) {
  if (c.dim > 2) throw ConfigError("counterexample supports d = 1 and d = 2");
  CounterexampleReport report;
  const TestBasis basis(BoxGeometry(c.dim, c.harvest_plus, c.harvest_minus), c.basis_size, c.sim.drift_plus.s,
                        c.sim.drift_minus.s);
  ExperimentConfig ce = c;
  ce.sim.N = c.counterexample.N;
  ce.sim.schedule = DeltaSchedule::counterexample;
  ce.sim.scheme = c.counterexample.scheme;
  const Scenario s = make_scenario(ce);
  report.N = s.sim.N;
  report.delta = s.sim.delta(c.dim);
  const CoupledSolution decoupled = solve_pde(s, c.solver, c.solver_method, 0.0);
  const Pairings target = solution_pairings(decoupled, decoupled.times.size() - 1, basis);

  auto arm = [&](const Scenario& sc, int R, std::vector<double>& rho, std::vector<double>& ann,
                 std::vector<int>* counts) {
    rho.assign(R, 0.0);
    ann.assign(R, 0.0);
    if (counts) counts->assign(R, 0);
    parallel_for(R, workers_of(c), [&](std::size_t r) {
      const ReplicaObservation obs = observe_replica(sc, basis, r, false);
      rho[r] = rho_distance(obs.pairings.back(), target).value;
      ann[r] = static_cast<double>(obs.annihilations) / sc.sim.N;
      if (counts) (*counts)[r] = obs.annihilations;
    });
  };

  std::vector<double> rho, ann;
  arm(s, c.counterexample.replicas, rho, ann, &report.counts);
  report.rho_decoupled = summarize(rho);
  report.zero_fraction =
      static_cast<double>(std::count(report.counts.begin(), report.counts.end(), 0)) / report.counts.size();
  if (log) {
    log("counterexample N=" + std::to_string(report.N) + " delta=" + fmt17(report.delta) +
        " zero-event fraction=" + fmt17(report.zero_fraction) + " mean events/N=" + fmt17(summarize(ann).mean));
  }

  ExperimentConfig base = ce;
  base.sim.lambda = 0.0;
  const Scenario sb = make_scenario(base);
  arm(sb, c.counterexample.replicas, rho, ann, nullptr);
  report.rho_baseline = summarize(rho);
  report.rho_ratio = report.rho_decoupled.mean / report.rho_baseline.mean;

  ExperimentConfig ctrl = c;
  ctrl.sim.N = c.counterexample.N;
  ctrl.sim.schedule = DeltaSchedule::standard;
  const Scenario sc = make_scenario(ctrl);
  arm(sc, c.counterexample.control_replicas, rho, ann, nullptr);
  report.control_annihilated = summarize(ann);
  if (log) {
    log("counterexample rho ratio=" + fmt17(report.rho_ratio) +
        " control events/N=" + fmt17(report.control_annihilated.mean));
  }
  return report;
}

MinkowskiReport run_minkowski(const ExperimentConfig& c, const Logger& log) {
  MinkowskiReport report;
  for (int d : c.minkowski.dims) {
    const BoxGeometry geom(d, c.harvest_plus, c.harvest_minus);
    // f(x, y) = exp(x_d + y_d) (1 + sum_{i<d} x_i y_i); on the diagonal of I it is 1 + |z|^2.
    auto smooth = [d](const Point& x, const Point& y) {
      double t = 1.0;
      for (int i = 0; i < d - 1; ++i) t += x.coords[i] * y.coords[i];
      return std::exp(x.coords[d - 1] + y.coords[d - 1]) * t;
    };
    const double smooth_limit = 1.0 + (d - 1) / 3.0;
    for (double delta : c.minkowski.deltas) {
      if (d <= 2) {
        const TubeVolumeEstimate tube = tube_volume_oracle(geom, delta, c.minkowski.cells_per_delta);
        report.tubes.push_back({d, delta, tube.volume, tube_normalizer(d, delta), tube.volume / std::pow(delta, d + 1)});
      }
      report.integrals.push_back(
          {d, delta, "one", minkowski_pair_integral(geom, delta, [](const Point&, const Point&) { return 1.0; }), 1.0});
      report.integrals.push_back({d, delta, "smooth", minkowski_pair_integral(geom, delta, smooth), smooth_limit});
      if (log) log("minkowski d=" + std::to_string(d) + " delta=" + fmt17(delta));
    }
  }
  return report;
}

MassBalanceReport run_massbalance(const ExperimentConfig& c, const Logger& log) {
  MassBalanceReport report;
  const Scenario s = make_scenario(c);
  if (c.dim <= 2) {
    const CoupledSolution sol = solve_pde(s, c.solver, c.solver_method, s.sim.lambda);
    report.method = sol.method;
    for (std::size_t i = 0; i < sol.times.size(); ++i) {
      for (Side side : {Side::plus, Side::minus}) {
        const double initial = side == Side::plus ? sol.initial_mass_plus : sol.initial_mass_minus;
        const double mass = side == Side::plus ? sol.mass_plus[i] : sol.mass_minus[i];
        const double harvested = side == Side::plus ? sol.harvested_plus[i] : sol.harvested_minus[i];
        const double formula = harvested_mass(sol, side, sol.times[i]);
        report.max_pde_residual = std::max(report.max_pde_residual, std::abs(formula - harvested));
        report.max_pde_balance =
            std::max(report.max_pde_balance, std::abs(initial - mass - harvested - sol.annihilated[i]));
      }
    }
    report.harvested_plus = harvested_mass(sol, Side::plus, s.sim.T);
    report.annihilated = annihilated_mass(sol, s.sim.T);
  }
  const int R = s.sim.replicas;
  report.replicas = R;
  std::vector<double> ann(R), harv(R);
  std::vector<char> exact(R, 1);
  parallel_for(R, workers_of(c), [&](std::size_t r) {
    Simulation sim(s.geom, s.sim, s.u0_plus, s.u0_minus, r);
    const int m = s.sim.particles();
    bool ok = true;
    while (!sim.finished()) {
      sim.step();
      const Configuration& cfg = sim.config();
      for (Side side : {Side::plus, Side::minus}) {
        const std::size_t tot = cfg.count(side, Status::active) + cfg.count(side, Status::harvested) +
                        cfg.count(side, Status::annihilated);
        ok = ok && tot == static_cast<std::size_t>(m) && cfg.side(side).size() == static_cast<std::size_t>(m);
      }
      ok = ok && cfg.count(Side::plus, Status::annihilated) == cfg.count(Side::minus, Status::annihilated);
    }
    const auto& ev = sim.events();
    const auto n_ann = std::count_if(ev.begin(), ev.end(), [](const EventRecord& e) { return e.kind == EventKind::annihilation; });
    ok = ok && static_cast<std::size_t>(n_ann) == sim.config().count(Side::plus, Status::annihilated);
    exact[r] = ok;
    ann[r] = static_cast<double>(sim.config().count(Side::plus, Status::annihilated)) / s.sim.N;
    harv[r] = static_cast<double>(sim.config().count(Side::plus, Status::harvested)) / s.sim.N;
  });
  report.particle_accounting_exact = std::all_of(exact.begin(), exact.end(), [](char x) { return x != 0; });
  report.particle_annihilated = summarize(ann);
  report.particle_harvested_plus = summarize(harv);
  if (log) log("massbalance pde residual=" + fmt17(report.max_pde_residual));
  return report;
}

// ---------------------------------------------------------------- commands

json cmd_simulate(const ExperimentConfig& c, const Logger& log) {
  const Scenario s = make_scenario(c);
  const auto dir = prepare_output(c);
  json manifest = make_manifest(c, "simulate");
  const bool with_pde = c.dim <= 2;
  std::vector<Pairings> pde;
  const TestBasis basis(s.geom, c.basis_size, s.sim.drift_plus.s, s.sim.drift_minus.s);
  if (with_pde) {
    const CoupledSolution sol = solve_pde(s, c.solver, c.solver_method, s.sim.lambda);
    for (std::size_t i = 0; i < sol.times.size(); ++i) pde.push_back(solution_pairings(sol, i, basis));
    manifest["results"]["pde_method"] = sol.method;
  }
  const int R = s.sim.replicas;
  std::vector<ReplicaObservation> obs(R);
  parallel_for(R, workers_of(c), [&](std::size_t r) { obs[r] = observe_replica(s, basis, r, true); });

  auto traj = open_output(dir / "trajectory.csv");
  traj << "replica,t,side,mass,annihilated,harvested,rho,rho_tail_bound\n";
  auto events = open_output(dir / "events.ndjson");
  json per_replica = json::array();
  for (int r = 0; r < R; ++r) {
    const ReplicaObservation& o = obs[r];
    std::vector<int> ann_at(o.times.size(), 0);
    std::array<std::vector<int>, 2> harv_at{std::vector<int>(o.times.size(), 0), std::vector<int>(o.times.size(), 0)};
    for (const auto& e : o.events) {
      for (std::size_t k = 0; k < o.times.size(); ++k) {
        if (e.time <= o.times[k] + 1e-12) {
          if (e.kind == EventKind::annihilation) {
            ++ann_at[k];
          } else {
            ++harv_at[static_cast<int>(e.side)][k];
          }
        }
      }
    }
    for (std::size_t k = 0; k < o.times.size(); ++k) {
      for (Side side : {Side::plus, Side::minus}) {
        const Pairings& p = o.pairings[k];
        const double mass = side == Side::plus ? p.mass_plus : p.mass_minus;
        double rho = std::nan("");
        double tail = std::nan("");
        if (with_pde) {
          const Pairings& q = pde[k];
          const auto& a = side == Side::plus ? p.plus : p.minus;
          const auto& b = side == Side::plus ? q.plus : q.minus;
          rho = 0.0;
          double w = 1.0;
          for (std::size_t n = 0; n < a.size(); ++n) {
            w *= 0.5;
            rho += w * std::abs(a[n] - b[n]);
          }
          tail = w * (mass + (side == Side::plus ? q.mass_plus : q.mass_minus));
        }
        traj << r << ',' << fmt17(o.times[k]) << ',' << side_name(side) << ',' << fmt17(mass) << ','
             << fmt17(static_cast<double>(ann_at[k]) / s.sim.N) << ','
             << fmt17(static_cast<double>(harv_at[static_cast<int>(side)][k]) / s.sim.N) << ',' << fmt17(rho) << ','
             << fmt17(tail) << '\n';
      }
    }
    write_events(events, o.events, r, c.dim);
    per_replica.push_back({{"replica", r},
                           {"annihilations", o.annihilations},
                           {"interaction_integral", o.interaction_integral},
                           {"resolved", o.resolved}});
  }
  manifest["results"]["delta"] = s.sim.delta(c.dim);
  manifest["results"]["replicas"] = per_replica;
  finish_manifest(c, manifest, {"trajectory.csv", "events.ndjson", "manifest.json"});
  if (log) log("simulate: wrote " + std::to_string(R) + " replicas to " + dir.string());
  return manifest;
}

json cmd_pde(const ExperimentConfig& c, const Logger& log) {
  const Scenario s = make_scenario(c);
  const auto dir = prepare_output(c);
  const CoupledSolution sol = solve_pde(s, c.solver, c.solver_method, s.sim.lambda);
  {
    auto out = open_output(dir / "pde.csv");
    write_csv(sol, out);
  }
  json manifest = make_manifest(c, "pde");
  const double T = s.sim.T;
  manifest["results"] = {{"method", sol.method},
                         {"T", T},
                         {"annihilated", annihilated_mass(sol, T)},
                         {"harvested_plus", harvested_mass(sol, Side::plus, T)},
                         {"harvested_minus", harvested_mass(sol, Side::minus, T)},
                         {"mass_plus", sol.mass_plus.back()},
                         {"mass_minus", sol.mass_minus.back()},
                         {"trace_plus_at_T", sol.trace_plus.back()[0]}};
  finish_manifest(c, manifest, {"pde.csv", "manifest.json"});
  if (log) log("pde: " + sol.method + " solution written to " + (dir / "pde.csv").string());
  return manifest;
}

json cmd_converge(const ExperimentConfig& c, const Logger& log) {
  const ConvergeReport rep = run_converge(c, log);
  const auto dir = prepare_output(c);
  {
    auto out = open_output(dir / "converge.csv");
    out << "N,t,mean_rho,stderr,rho_tail_bound\n";
    for (const auto& r : rep.rows) {
      out << r.N << ',' << fmt17(r.t) << ',' << fmt17(r.rho.mean) << ',' << fmt17(r.rho.stderr_) << ','
          << fmt17(r.tail_bound) << '\n';
    }
    auto ann = open_output(dir / "annihilation.csv");
    ann << "N,mean_annihilated,stderr,pde_annihilated,mean_interaction_half,mean_max_rho_jump,resolved\n";
    for (const auto& a : rep.annihilation) {
      ann << a.N << ',' << fmt17(a.annihilated.mean) << ',' << fmt17(a.annihilated.stderr_) << ','
          << fmt17(a.pde_annihilated) << ',' << fmt17(a.interaction_half.mean) << ',' << fmt17(a.max_jump.mean) << ','
          << (a.resolved ? "true" : "false") << '\n';
    }
  }
  json manifest = make_manifest(c, "converge");
  manifest["results"] = {{"loglog_slope_last_time", rep.slope}};
  finish_manifest(c, manifest, {"converge.csv", "annihilation.csv", "manifest.json"});
  return manifest;
}

json cmd_martingale(const ExperimentConfig& c, const Logger& log) {
  const MartingaleReport rep = run_martingale(c, log);
  const auto dir = prepare_output(c);
  json rows = json::array();
  {
    auto out = open_output(dir / "martingale.csv");
    out << "N,t,mean_M,stderr\n";
    for (const auto& r : rep.rows) {
      for (std::size_t k = 0; k < r.times.size(); ++k) {
        out << r.N << ',' << fmt17(r.times[k]) << ',' << fmt17(r.mean_M[k].mean) << ',' << fmt17(r.mean_M[k].stderr_)
            << '\n';
      }
      rows.push_back({{"N", r.N},
                      {"replicas", r.replicas},
                      {"M_T", estimate_json(r.M_T)},
                      {"M_T2", estimate_json(r.M_T2)},
                      {"bracket", estimate_json(r.bracket)},
                      {"M_T2_minus_bracket", estimate_json(r.difference)}});
    }
  }
  json manifest = make_manifest(c, "martingale");
  manifest["results"] = {{"phi_plus", rep.phi_plus}, {"phi_minus", rep.phi_minus}, {"rows", rows}};
  finish_manifest(c, manifest, {"martingale.csv", "manifest.json"});
  return manifest;
}

json cmd_counterexample(const ExperimentConfig& c, const Logger& log) {
  const CounterexampleReport rep = run_counterexample(c, log);
  const auto dir = prepare_output(c);
  {
    auto out = open_output(dir / "counterexample.csv");
    out << "replica,annihilations\n";
    for (std::size_t r = 0; r < rep.counts.size(); ++r) out << r << ',' << rep.counts[r] << '\n';
  }
  json manifest = make_manifest(c, "counterexample");
  manifest["results"] = {{"N", rep.N},
                         {"delta", rep.delta},
                         {"zero_event_fraction", rep.zero_fraction},
                         {"rho_to_decoupled", estimate_json(rep.rho_decoupled)},
                         {"rho_baseline_lambda0", estimate_json(rep.rho_baseline)},
                         {"rho_ratio", rep.rho_ratio},
                         {"control_annihilated", estimate_json(rep.control_annihilated)}};
  finish_manifest(c, manifest, {"counterexample.csv", "manifest.json"});
  return manifest;
}

json cmd_minkowski(const ExperimentConfig& c, const Logger& log) {
  const MinkowskiReport rep = run_minkowski(c, log);
  const auto dir = prepare_output(c);
  {
    auto out = open_output(dir / "minkowski.csv");
    out << "dim,delta,quantity,value,reference\n";
    for (const auto& t : rep.tubes) {
      out << t.dim << ',' << fmt17(t.delta) << ",tube_volume," << fmt17(t.volume) << ',' << fmt17(t.nu) << '\n';
      out << t.dim << ',' << fmt17(t.delta) << ",tube_volume_over_delta_power," << fmt17(t.ratio_delta_power)
          << ",nan\n";
    }
    for (const auto& m : rep.integrals) {
      out << m.dim << ',' << fmt17(m.delta) << ",pair_integral_" << m.function << ',' << fmt17(m.value) << ','
          << fmt17(m.limit) << '\n';
    }
  }
  json manifest = make_manifest(c, "minkowski");
  finish_manifest(c, manifest, {"minkowski.csv", "manifest.json"});
  return manifest;
}

json cmd_massbalance(const ExperimentConfig& c, const Logger& log) {
  const MassBalanceReport rep = run_massbalance(c, log);
  json manifest = make_manifest(c, "massbalance");
  manifest["results"] = {{"pde_method", rep.method},
                         {"max_pde_residual", rep.max_pde_residual},
                         {"max_pde_balance", rep.max_pde_balance},
                         {"pde_harvested_plus", rep.harvested_plus},
                         {"pde_annihilated", rep.annihilated},
                         {"replicas", rep.replicas},
                         {"particle_accounting_exact", rep.particle_accounting_exact},
                         {"particle_annihilated", estimate_json(rep.particle_annihilated)},
                         {"particle_harvested_plus", estimate_json(rep.particle_harvested_plus)}};
  finish_manifest(c, manifest, {"manifest.json"});
  return manifest;
}

json run_experiment(const ExperimentConfig& c, const Logger& log) {
  if (c.experiment == "simulate") return cmd_simulate(c, log);
  if (c.experiment == "pde") return cmd_pde(c, log);
  if (c.experiment == "converge") return cmd_converge(c, log);
  if (c.experiment == "martingale") return cmd_martingale(c, log);
  if (c.experiment == "counterexample") return cmd_counterexample(c, log);
  if (c.experiment == "minkowski") return cmd_minkowski(c, log);
  if (c.experiment == "massbalance") return cmd_massbalance(c, log);
  throw ConfigError("config key 'experiment' has unknown value '" + c.experiment + "'");
}

}  // namespace annihil
