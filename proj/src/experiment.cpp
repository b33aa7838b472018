#include "aphase/experiment.hpp"
#include "aphase/errors.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace aphase {

using nlohmann::json;
using nlohmann::ordered_json;

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

CsvWriter::CsvWriter(std::vector<std::string> header) : header_(std::move(header)) {}

void CsvWriter::add_row(std::vector<std::string> row) {
  if (row.size() != header_.size()) throw Error(ErrorKind::InvalidArgument, "CSV row width does not match header");
  rows_.push_back(std::move(row));
}

std::string CsvWriter::str() const {
  std::ostringstream os;
  auto field = [&](const std::string& f) {
    if (f.find_first_of(",\"\r\n") == std::string::npos) {
      os << f;
      return;
    }
    os << '"';
    for (char c : f) {
      if (c == '"') os << '"';
      os << c;
    }
    os << '"';
  };
  auto line = [&](const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i) os << ',';
      field(r[i]);
    }
    os << "\r\n";
  };
  line(header_);
  for (const auto& r : rows_) line(r);
  return os.str();
}

void CsvWriter::write(const std::filesystem::path& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::ConfigError, "cannot write " + path.string());
  f << str();
}

namespace {

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw Error(ErrorKind::ConfigError, "'" + where + "' must be an object");
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw Error(ErrorKind::ConfigError, "unknown key '" + key + "' in " + where);
  }
}

double number(const json& j, const std::string& what) {
  if (!j.is_number()) throw Error(ErrorKind::ConfigError, "'" + what + "' must be a number");
  return j.get<double>();
}

int integer(const json& j, const std::string& what) {
  if (!j.is_number_integer()) throw Error(ErrorKind::ConfigError, "'" + what + "' must be an integer");
  return j.get<int>();
}

Vec vector_of(const json& j, const std::string& what) {
  if (!j.is_array()) throw Error(ErrorKind::ConfigError, "'" + what + "' must be an array of numbers");
  Vec v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v(i) = number(j[i], what);
  return v;
}

bool circle_product(const SystemSpec& sys) {
  return sys.name == "shear_cycle" || sys.name == "torus_product" || sys.name == "counterexample";
}

Vec from_polar(const Vec& rp, const SystemSpec& sys) {
  if (!circle_product(sys)) throw Error(ErrorKind::ConfigError, "polar inputs need a cycle or torus system");
  if (rp.size() != sys.dim) throw Error(ErrorKind::ConfigError, "polar input needs (r, phi) per factor");
  Vec x(sys.dim);
  for (Eigen::Index k = 0; k + 1 < rp.size(); k += 2) x.segment(k, 2) = polar_point(rp(k), rp(k + 1));
  return x;
}

std::vector<double> linspace(const json& spec, const std::string& what) {
  if (!spec.is_array() || spec.size() != 3) throw Error(ErrorKind::ConfigError, "'" + what + "' must be [lo, hi, n]");
  const double lo = number(spec[0], what), hi = number(spec[1], what);
  const int n = integer(spec[2], what);
  if (n < 1) throw Error(ErrorKind::ConfigError, "'" + what + "' needs n >= 1");
  std::vector<double> out;
  for (int i = 0; i < n; ++i) out.push_back(n == 1 ? lo : lo + (hi - lo) * i / (n - 1));
  return out;
}

std::vector<Vec> parse_inputs(const json& in, const SystemSpec& sys, ExperimentConfig& cfg) {
  check_keys(in, "inputs", {"points", "polar", "grid", "fiber", "max_rows"});
  if (in.contains("max_rows")) cfg.max_rows = static_cast<std::size_t>(integer(in["max_rows"], "max_rows"));
  if (in.contains("fiber")) {
    const json& f = in["fiber"];
    check_keys(f, "inputs.fiber", {"radius", "count", "s"});
    if (f.contains("radius")) cfg.fiber.radius = number(f["radius"], "radius");
    if (f.contains("count")) cfg.fiber.count = integer(f["count"], "count");
    if (f.contains("s")) cfg.fiber.s = number(f["s"], "s");
  }
  std::vector<Vec> pts;
  if (in.contains("points"))
    for (const auto& p : in["points"]) {
      Vec v = vector_of(p, "points");
      if (v.size() != sys.dim) throw Error(ErrorKind::ConfigError, "point dimension does not match the system");
      pts.push_back(v);
    }
  if (in.contains("polar"))
    for (const auto& p : in["polar"]) pts.push_back(from_polar(vector_of(p, "polar"), sys));
  if (in.contains("grid")) {
    const json& g = in["grid"];
    check_keys(g, "inputs.grid", {"polar", "cartesian"});
    if (g.contains("polar")) {
      check_keys(g["polar"], "inputs.grid.polar", {"r", "phi"});
      if (sys.dim != 2 || !circle_product(sys)) throw Error(ErrorKind::ConfigError, "polar grid needs a planar cycle");
      const auto rs = linspace(g["polar"].at("r"), "r");
      const auto ps = linspace(g["polar"].at("phi"), "phi");
      if (rs.size() * ps.size() > cfg.max_rows) throw Error(ErrorKind::ConfigError, "grid exceeds max_rows");
      for (double r : rs)
        for (double p : ps) pts.push_back(polar_point(r, p));
    }
    if (g.contains("cartesian")) {
      check_keys(g["cartesian"], "inputs.grid.cartesian", {"lo", "hi", "n"});
      const Vec lo = vector_of(g["cartesian"].at("lo"), "lo");
      const Vec hi = vector_of(g["cartesian"].at("hi"), "hi");
      const Vec nn = vector_of(g["cartesian"].at("n"), "n");
      if (lo.size() != sys.dim || hi.size() != sys.dim || nn.size() != sys.dim)
        throw Error(ErrorKind::ConfigError, "cartesian grid bounds must match the system dimension");
      double total = 1.0;
      for (Eigen::Index i = 0; i < nn.size(); ++i) total *= std::max(1.0, nn(i));
      if (total > static_cast<double>(cfg.max_rows)) throw Error(ErrorKind::ConfigError, "grid exceeds max_rows");
      std::vector<int> idx(sys.dim, 0);
      for (;;) {
        Vec x(sys.dim);
        for (int d = 0; d < sys.dim; ++d)
          x(d) = nn(d) <= 1 ? lo(d) : lo(d) + (hi(d) - lo(d)) * idx[d] / (nn(d) - 1);
        pts.push_back(x);
        int d = sys.dim - 1;
        while (d >= 0 && ++idx[d] >= static_cast<int>(nn(d))) idx[d--] = 0;
        if (d < 0) break;
      }
    }
  }
  if (pts.size() > cfg.max_rows) throw Error(ErrorKind::ConfigError, "inputs exceed max_rows");
  return pts;
}

void parse_tolerances(const json& t, ExperimentConfig& cfg) {
  check_keys(t, "tolerances",
             {"picard_tol", "dt", "T_trunc", "max_iter", "eps", "fixed_point_tol", "max_shrink", "delta_min",
              "unit_tol", "gap", "constant_samples", "R_init", "constants"});
  if (t.contains("picard_tol")) cfg.solver.picard_tol = number(t["picard_tol"], "picard_tol");
  if (t.contains("dt")) cfg.solver.dt = number(t["dt"], "dt");
  if (t.contains("T_trunc")) cfg.solver.T_trunc = number(t["T_trunc"], "T_trunc");
  if (t.contains("max_iter")) cfg.solver.max_iter = integer(t["max_iter"], "max_iter");
  if (t.contains("eps")) cfg.phase.eps = number(t["eps"], "eps");
  if (t.contains("fixed_point_tol")) cfg.phase.fixed_point_tol = number(t["fixed_point_tol"], "fixed_point_tol");
  if (t.contains("max_shrink")) cfg.phase.max_shrink = integer(t["max_shrink"], "max_shrink");
  if (t.contains("delta_min")) {
    cfg.phase.delta_min = number(t["delta_min"], "delta_min");
    cfg.splitting.delta_min = cfg.phase.delta_min;
  }
  if (t.contains("unit_tol")) cfg.splitting.unit_tol = number(t["unit_tol"], "unit_tol");
  if (t.contains("gap")) cfg.splitting.gap = number(t["gap"], "gap");
  if (t.contains("constant_samples")) cfg.constants.samples = integer(t["constant_samples"], "constant_samples");
  if (t.contains("R_init")) cfg.R_init = number(t["R_init"], "R_init");
  if (t.contains("constants")) {
    check_keys(t["constants"], "tolerances.constants", {"c", "alpha", "K", "C", "r", "R"});
    for (const auto& [key, value] : t["constants"].items()) cfg.overrides.values[key] = number(value, key);
  }
}

void resolve(ExperimentConfig& cfg) {
  ordered_json r;
  r["system"]["name"] = cfg.system_name;
  r["system"]["params"] = ordered_json::object();
  for (const auto& [k, v] : cfg.params) r["system"]["params"][k] = v;
  r["experiment"] = cfg.experiment;
  ordered_json pts = ordered_json::array();
  for (const Vec& p : cfg.points) pts.push_back(std::vector<double>(p.data(), p.data() + p.size()));
  r["inputs"]["points"] = pts;
  r["inputs"]["fiber"] = {{"radius", cfg.fiber.radius}, {"count", cfg.fiber.count}, {"s", cfg.fiber.s}};
  r["inputs"]["max_rows"] = cfg.max_rows;
  ordered_json t;
  t["picard_tol"] = cfg.solver.picard_tol;
  t["dt"] = cfg.solver.dt;
  t["T_trunc"] = cfg.solver.T_trunc;
  t["max_iter"] = cfg.solver.max_iter;
  t["eps"] = cfg.phase.eps;
  t["fixed_point_tol"] = cfg.phase.fixed_point_tol;
  t["max_shrink"] = cfg.phase.max_shrink;
  t["delta_min"] = cfg.phase.delta_min;
  t["unit_tol"] = cfg.splitting.unit_tol;
  t["gap"] = cfg.splitting.gap;
  t["constant_samples"] = cfg.constants.samples;
  t["R_init"] = cfg.R_init;
  t["constants"] = ordered_json::object();
  for (const auto& [k, v] : cfg.overrides.values) t["constants"][k] = v;
  r["tolerances"] = t;
  r["output"] = cfg.output.string();
  r["seed"] = cfg.seed;
  r["workers"] = cfg.workers;
  cfg.resolved = r;
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
  check_keys(j, "config", {"system", "experiment", "inputs", "tolerances", "output", "seed", "workers"});
  ExperimentConfig cfg;
  const json& s = j.at("system");
  check_keys(s, "system", {"name", "params"});
  if (!s.contains("name") || !s["name"].is_string()) throw Error(ErrorKind::ConfigError, "system.name is required");
  cfg.system_name = s["name"].get<std::string>();
  if (s.contains("params")) {
    if (!s["params"].is_object()) throw Error(ErrorKind::ConfigError, "'system.params' must be an object");
    for (const auto& [k, v] : s["params"].items()) cfg.params[k] = number(v, k);
  }
  const SystemSpec sys = make_system(cfg.system_name, cfg.params);

  if (!j.contains("experiment") || !j["experiment"].is_string())
    throw Error(ErrorKind::ConfigError, "experiment is required");
  cfg.experiment = j["experiment"].get<std::string>();
  static const std::set<std::string> kinds{"phase", "fiber", "verify", "constants", "sweep"};
  if (!kinds.count(cfg.experiment)) throw Error(ErrorKind::ConfigError, "unknown experiment '" + cfg.experiment + "'");

  if (j.contains("tolerances")) parse_tolerances(j["tolerances"], cfg);
  if (j.contains("inputs")) cfg.points = parse_inputs(j["inputs"], sys, cfg);
  if (j.contains("output")) {
    if (!j["output"].is_string()) throw Error(ErrorKind::ConfigError, "'output' must be a string");
    cfg.output = j["output"].get<std::string>();
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) throw Error(ErrorKind::ConfigError, "'seed' must be a non-negative integer");
    cfg.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("workers")) cfg.workers = integer(j["workers"], "workers");
  if (cfg.workers < 1) throw Error(ErrorKind::ConfigError, "'workers' must be at least 1");
  cfg.constants.seed = cfg.seed;
  cfg.constants.splitting = cfg.splitting;
  resolve(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorKind::ConfigError, "cannot open config " + path.string());
  json j;
  try {
    j = json::parse(f);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::ConfigError, std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

void apply_overrides(ExperimentConfig& cfg, const std::optional<std::string>& out, std::optional<int> workers,
                     std::optional<std::uint64_t> seed) {
  if (out) cfg.output = *out;
  if (workers) {
    if (*workers < 1) throw Error(ErrorKind::ConfigError, "--workers must be at least 1");
    cfg.workers = *workers;
  }
  if (seed) {
    cfg.seed = *seed;
    cfg.constants.seed = *seed;
  }
  resolve(cfg);
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::vector<std::string> indexed(const std::string& prefix, Eigen::Index n) {
  std::vector<std::string> out;
  for (Eigen::Index i = 1; i <= n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

void append(std::vector<std::string>& row, const Vec& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) row.push_back(format_double(v(i)));
}

std::vector<double> phase_angles(const SystemSpec& sys, const Vec& xi) {
  std::vector<double> out;
  if (!circle_product(sys)) return out;
  for (Eigen::Index k = 0; k + 1 < xi.size(); k += 2) {
    double a = std::atan2(xi(k + 1), xi(k));
    if (a < 0) a += 2.0 * std::numbers::pi;
    out.push_back(a);
  }
  return out;
}

struct Check {
  std::string name;
  bool pass;
  std::string detail;
};

ordered_json constants_json(const HyperbolicConstants& k) {
  ordered_json c;
  auto put = [&](const char* name, double v) {
    auto it = k.provenance.find(name);
    c[name] = {{"value", std::isfinite(v) ? ordered_json(v) : ordered_json(format_double(v))},
               {"provenance", it == k.provenance.end() ? "estimated" : to_string(it->second)}};
  };
  put("c", k.c);
  put("alpha", k.alpha);
  put("K", k.K);
  put("C", k.C);
  put("C0", k.C0);
  put("r", k.r);
  put("R", k.R);
  put("kappa", k.kappa);
  c["shrink_steps"] = k.shrink_steps;
  c["invariant_set_ok"] = k.invariant_set_ok();
  c["derivative_set_ok"] = k.derivative_set_ok();
  c["contraction_ok"] = k.contraction_ok();
  return c;
}

// Phase and sweep tables share one layout.
void phase_table(const SystemSpec& sys, const ExperimentConfig& cfg, const PhaseSolver& solver, bool sweep,
                 std::vector<Check>& checks, ordered_json& report, HyperbolicConstants& k) {
  const auto outcomes = solver.solve_batch(cfg.points, cfg.workers);
  const std::size_t n_angles = circle_product(sys) ? static_cast<std::size_t>(sys.dim / 2) : 0;
  std::vector<std::string> header{"index"};
  for (auto& h : indexed("x0_", sys.dim)) header.push_back(h);
  for (auto& h : indexed("xi_", sys.dim)) header.push_back(h);
  if (n_angles == 1)
    header.push_back("phase_angle");
  else
    for (auto& h : indexed("phase_angle_", static_cast<Eigen::Index>(n_angles))) header.push_back(h);
  for (const char* h : {"residual", "decay_rate", "decay_prefactor", "separation_t8", "reduction_time", "eps",
                        "certificate_ok", "verified", "status"})
    header.push_back(h);
  CsvWriter csv(header);
  std::size_t failed = 0, unverified = 0, not_hyperbolic = 0;
  double c0 = 0.0;
  ordered_json errors = ordered_json::array();
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    std::vector<std::string> row{std::to_string(i)};
    append(row, cfg.points[i]);
    const auto& o = outcomes[i];
    if (o.result) {
      const PhaseResult& r = *o.result;
      append(row, r.xi_star);
      for (double a : phase_angles(sys, r.xi_star)) row.push_back(format_double(a));
      for (double v : {r.residual, r.decay.rate, r.decay.prefactor, r.decay.separation_end, r.reduction_time, r.eps})
        row.push_back(format_double(v));
      row.push_back(r.certificate_ok ? "true" : "false");
      row.push_back(r.verified ? "true" : "false");
      const bool ok = r.verified && r.certificate_ok && r.residual <= 1e-8;
      row.push_back(ok ? "ok" : "VerificationFailed");
      if (!ok) ++unverified;
      if (std::isfinite(r.C0_measured)) c0 = std::max(c0, r.C0_measured);
    } else {
      for (Eigen::Index d = 0; d < sys.dim; ++d) row.push_back("nan");
      for (std::size_t a = 0; a < n_angles; ++a) row.push_back("nan");
      for (int v = 0; v < 6; ++v) row.push_back("nan");
      row.push_back("false");
      row.push_back("false");
      row.push_back(std::string(to_string(*o.error)));
      ++failed;
      if (*o.error == ErrorKind::NonHyperbolic || *o.error == ErrorKind::ConstantsInfeasible) ++not_hyperbolic;
      errors.push_back({{"index", i}, {"error", to_string(*o.error)}, {"message", o.message}});
    }
    csv.add_row(std::move(row));
  }
  csv.write(cfg.output / (sweep ? "sweep.csv" : "phase.csv"));
  k.C0 = c0;
  k.provenance["C0"] = Provenance::Measured;
  report["rows"] = outcomes.size();
  report["failed_rows"] = failed;
  report["row_errors"] = errors;
  if (not_hyperbolic) throw Error(ErrorKind::NonHyperbolic, "a query reported a non-hyperbolic splitting");
  checks.push_back({"all accepted rows verified", unverified == 0, std::to_string(unverified) + " unverified"});
  if (!sweep) checks.push_back({"all rows solved", failed == 0, std::to_string(failed) + " failed"});
}

void fiber_tables(const SystemSpec& sys, const ExperimentConfig& cfg, const PhaseSolver& solver,
                  std::vector<Check>& checks, ordered_json& report) {
  const FiberSolver& fibers = solver.fibers();
  const double alpha = fibers.constants().alpha;
  std::vector<std::string> header{"base_index", "j"};
  for (auto& h : indexed("eta_", sys.dim)) header.push_back(h);
  for (auto& h : indexed("point_", sys.dim)) header.push_back(h);
  header.push_back("decay_rate");
  CsvWriter pts(header);
  CsvWriter inv({"base_index", "j", "s", "distance", "pass"});
  std::vector<Vec> bases;
  bool decay_ok = true, invariance_ok = true;
  for (std::size_t b = 0; b < cfg.points.size(); ++b) {
    const Vec xi = sys.manifold.project(cfg.points[b]);
    if ((xi - cfg.points[b]).norm() > 1e-8)
      throw Error(ErrorKind::OffManifold, "fiber base " + std::to_string(b) + " is not on M");
    bases.push_back(xi);
    const FiberSample sample = sample_fiber(fibers, xi, cfg.fiber.radius, cfg.fiber.count);
    for (std::size_t j = 0; j < sample.points.size(); ++j) {
      std::vector<std::string> row{std::to_string(b), std::to_string(j)};
      append(row, sample.eta[j]);
      append(row, sample.points[j]);
      row.push_back(format_double(sample.decay_rates[j]));
      pts.add_row(std::move(row));
      decay_ok = decay_ok && sample.decay_rates[j] >= 0.9 * alpha;
    }
    const InvarianceReport rep = verify_fiber_invariance(fibers, sample, cfg.fiber.s);
    for (std::size_t j = 0; j < rep.distances.size(); ++j)
      inv.add_row({std::to_string(b), std::to_string(j), format_double(cfg.fiber.s), format_double(rep.distances[j]),
                   rep.distances[j] <= 1e-4 ? "true" : "false"});
    invariance_ok = invariance_ok && rep.pass;
  }
  ordered_json disjoint = ordered_json::array();
  bool disjoint_ok = true;
  for (std::size_t b = 0; b + 1 < bases.size(); ++b) {
    const DisjointnessReport d = verify_disjointness(fibers, bases[b], bases[b + 1], cfg.fiber.radius, cfg.fiber.count);
    disjoint.push_back({{"bases", {b, b + 1}}, {"min_distance", d.min_distance}, {"overlap", d.overlap}});
    disjoint_ok = disjoint_ok && !d.overlap;
  }
  pts.write(cfg.output / "fiber.csv");
  inv.write(cfg.output / "invariance.csv");
  report["disjointness"] = disjoint;
  checks.push_back({"fiber points decay at >= 0.9 alpha", decay_ok, ""});
  checks.push_back({"fiber invariance distance <= 1e-4", invariance_ok, ""});
  checks.push_back({"fibers of distinct bases disjoint", disjoint_ok, ""});
}

void verify_table(const SystemSpec& sys, const ExperimentConfig& cfg, const PhaseSolver& solver,
                  std::vector<Check>& checks) {
  std::vector<std::string> header{"index"};
  for (auto& h : indexed("x0_", sys.dim)) header.push_back(h);
  for (auto& h : indexed("xi_", sys.dim)) header.push_back(h);
  for (const char* h : {"residual", "idempotence_error", "decay_rate", "pass"}) header.push_back(h);
  CsvWriter csv(header);
  const auto first = solver.solve_batch(cfg.points, cfg.workers);
  std::vector<Vec> stars;
  for (const auto& o : first)
    if (o.result) stars.push_back(o.result->xi_star);
  const auto second = solver.solve_batch(stars, cfg.workers);
  bool all = true;
  std::size_t s = 0;
  for (std::size_t i = 0; i < first.size(); ++i) {
    std::vector<std::string> row{std::to_string(i)};
    append(row, cfg.points[i]);
    if (!first[i].result) {
      if (*first[i].error == ErrorKind::NonHyperbolic || *first[i].error == ErrorKind::ConstantsInfeasible)
        throw Error(*first[i].error, first[i].message);
      for (Eigen::Index d = 0; d < sys.dim; ++d) row.push_back("nan");
      row.insert(row.end(), {"nan", "nan", "nan", "false"});
      all = false;
    } else {
      const PhaseResult& r = *first[i].result;
      const auto& again = second[s++];
      const double idem = again.result ? (again.result->xi_star - r.xi_star).norm() : INFINITY;
      const bool pass = r.residual <= 1e-8 && idem <= 1e-8 && r.verified;
      append(row, r.xi_star);
      row.push_back(format_double(r.residual));
      row.push_back(format_double(idem));
      row.push_back(format_double(r.decay.rate));
      row.push_back(pass ? "true" : "false");
      all = all && pass;
    }
    csv.add_row(std::move(row));
  }
  csv.write(cfg.output / "verify.csv");
  checks.push_back({"residual <= 1e-8, idempotent, verified decay", all, ""});
}

}  // namespace

RunOutcome run_experiment(const ExperimentConfig& cfg) {
  const auto t_start = Clock::now();
  RunOutcome out;
  ordered_json& report = out.report;
  report["config"] = cfg.resolved;
  ordered_json timings;
  std::filesystem::create_directories(cfg.output);
  std::vector<Check> checks;
  try {
    const SystemSpec sys = make_system(cfg.system_name, cfg.params);
    auto t0 = Clock::now();
    HyperbolicConstants k = estimate_constants(sys, sys.manifold, 0.0, cfg.R_init, cfg.overrides, cfg.constants);
    timings["constants_s"] = seconds_since(t0);
    checks.push_back({"constants satisfy invariance and contraction conditions", k.valid(), ""});

    t0 = Clock::now();
    if (cfg.experiment == "constants") {
      CsvWriter csv({"name", "value", "provenance"});
      const std::pair<const char*, double> rows[] = {{"c", k.c}, {"alpha", k.alpha}, {"K", k.K},   {"C", k.C},
                                                     {"r", k.r}, {"R", k.R},         {"kappa", k.kappa}};
      for (const auto& [name, v] : rows) csv.add_row({name, format_double(v), to_string(k.provenance[name])});
      csv.write(cfg.output / "constants.csv");
    } else {
      const PhaseSolver solver(sys, k, cfg.splitting, cfg.solver, cfg.phase);
      if (cfg.experiment == "phase" || cfg.experiment == "sweep")
        phase_table(sys, cfg, solver, cfg.experiment == "sweep", checks, report, k);
      else if (cfg.experiment == "fiber")
        fiber_tables(sys, cfg, solver, checks, report);
      else
        verify_table(sys, cfg, solver, checks);
    }
    timings["experiment_s"] = seconds_since(t0);
    report["constants"] = constants_json(k);
    bool all = true;
    ordered_json cj = ordered_json::array();
    for (const auto& c : checks) {
      cj.push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
      all = all && c.pass;
    }
    report["checks"] = cj;
    report["status"] = all ? "pass" : "verification_failed";
    out.code = all ? ExitCode::Ok : ExitCode::VerificationFailed;
  } catch (const Error& e) {
    report["status"] = "error";
    report["error"] = {{"kind", to_string(e.kind())}, {"message", e.what()}};
    switch (e.kind()) {
      case ErrorKind::NonHyperbolic:
      case ErrorKind::ConstantsInfeasible:
        out.code = ExitCode::NotHyperbolic;
        break;
      case ErrorKind::ConfigError:
        out.code = ExitCode::Usage;
        break;
      default:
        out.code = ExitCode::VerificationFailed;
    }
  }
  timings["total_s"] = seconds_since(t_start);
  report["timings"] = timings;
  report["exit_code"] = static_cast<int>(out.code);
  std::ofstream f(cfg.output / "report.json");
  f << report.dump(2) << '\n';
  return out;
}

}  // namespace aphase
