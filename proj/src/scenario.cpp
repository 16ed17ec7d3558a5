#include "rieszwb/scenario.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace rieszwb {

namespace {

using nlohmann::json;

const json& need(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) throw ScenarioError(path + key, "missing required field '" + key + "'");
  return j.at(key);
}

double number(const json& v, const std::string& field) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "inf" || s == "infinity") return std::numeric_limits<double>::infinity();
  }
  throw ScenarioError(field, "expected a number");
}

double number_at(const json& j, const std::string& key, const std::string& path) {
  return number(need(j, key, path), path + key);
}

int integer_at(const json& j, const std::string& key, const std::string& path) {
  const json& v = need(j, key, path);
  if (!v.is_number_integer()) throw ScenarioError(path + key, "expected an integer");
  return v.get<int>();
}

Vec point(const json& v, int n, const std::string& field) {
  if (!v.is_array()) throw ScenarioError(field, "expected an array of " + std::to_string(n) + " numbers");
  if (static_cast<int>(v.size()) != n)
    throw ScenarioError(field, "expected " + std::to_string(n) + " coordinates, got " + std::to_string(v.size()));
  Vec x(n);
  for (int k = 0; k < n; ++k) x[k] = number(v[static_cast<std::size_t>(k)], field);
  if (!x.allFinite()) throw ScenarioError(field, "coordinates must be finite");
  return x;
}

std::vector<double> numbers(const json& v, const std::string& field) {
  if (!v.is_array() || v.empty()) throw ScenarioError(field, "expected a nonempty array of numbers");
  std::vector<double> out;
  for (const auto& e : v) out.push_back(number(e, field));
  return out;
}

std::vector<double> ladder_at(const json& p) {
  auto l = numbers(need(p, "ladder", "params."), "params.ladder");
  for (std::size_t k = 0; k < l.size(); ++k) {
    if (!(l[k] > 0.0) || !std::isfinite(l[k])) throw ScenarioError("params.ladder", "radii must be positive and finite");
    if (k > 0 && !(l[k] > l[k - 1])) throw ScenarioError("params.ladder", "radii must be strictly increasing");
  }
  return l;
}

std::vector<double> q_values(const json& p, bool allow_single) {
  std::vector<double> q;
  if (p.contains("q_grid")) {
    q = numbers(p.at("q_grid"), "params.q_grid");
  } else if (allow_single && p.contains("q")) {
    q = {number(p.at("q"), "params.q")};
  } else {
    throw ScenarioError(allow_single ? "params.q" : "params.q_grid",
                        allow_single ? "missing required field 'q' (or 'q_grid')" : "missing required field 'q_grid'");
  }
  return q;
}

void check_positive_q(const std::vector<double>& q, const std::string& field) {
  for (double v : q)
    if (!(v > 0.0) || !std::isfinite(v)) throw ScenarioError(field, "q must be positive and finite");
}

std::vector<Vec> path_points(const json& p, int n) {
  std::vector<Vec> path;
  if (p.contains("z_path")) {
    const json& zp = p.at("z_path");
    if (!zp.is_array() || zp.empty()) throw ScenarioError("params.z_path", "expected a nonempty array of points");
    for (std::size_t k = 0; k < zp.size(); ++k) path.push_back(point(zp[k], n, "params.z_path[" + std::to_string(k) + "]"));
    return path;
  }
  if (p.contains("path")) {
    const json& pp = p.at("path");
    const Vec a = point(need(pp, "from", "params.path."), n, "params.path.from");
    const Vec b = point(need(pp, "to", "params.path."), n, "params.path.to");
    const int steps = integer_at(pp, "steps", "params.path.");
    if (steps < 1) throw ScenarioError("params.path.steps", "must be >= 1");
    for (int k = 0; k <= steps; ++k) path.push_back(a + (b - a) * (static_cast<double>(k) / steps));
    return path;
  }
  throw ScenarioError("params.z_path", "missing required field 'z_path' (or 'path')");
}

void validate_params(const Scenario& s) {
  const json& p = s.params;
  const int n = dimension(s.set);
  const std::string& t = s.task;
  auto z_of = [&](const char* key) { return point(need(p, key, "params."), n, std::string("params.") + key); };
  auto exterior = [&](const Vec& z, const std::string& field) {
    if (contains(s.set, z)) throw ScenarioError(field, "point lies in the set; an exterior point is required");
  };
  if (t == "capacity" || t == "equilibrium") return;
  if (t == "balayage") {
    const json& src = need(p, "source", "params.");
    const json& pts = need(src, "points", "params.source.");
    const auto masses = numbers(need(src, "masses", "params.source."), "params.source.masses");
    if (!pts.is_array() || pts.size() != masses.size())
      throw ScenarioError("params.source.points", "need one point per mass");
    for (std::size_t k = 0; k < pts.size(); ++k) point(pts[k], n, "params.source.points[" + std::to_string(k) + "]");
    for (double m : masses)
      if (!(m >= 0.0) || !std::isfinite(m)) throw ScenarioError("params.source.masses", "masses must be nonnegative");
    return;
  }
  if (t == "harmonic") {
    exterior(z_of("z"), "params.z");
    return;
  }
  if (t == "hvalue") {
    exterior(z_of("z"), "params.z");
    ladder_at(p);
    return;
  }
  if (t == "wiener") {
    point(need(p, "y", "params."), n, "params.y");
    const double ratio = number_at(p, "ratio", "params.");
    if (ratio == 1.0) throw ScenarioError("params.ratio", "ratio must differ from 1");
    if (!(ratio > 0.0) || !std::isfinite(ratio)) throw ScenarioError("params.ratio", "ratio must be positive");
    const json& jr = need(p, "j_range", "params.");
    if (!jr.is_array() || jr.size() != 2 || !jr[0].is_number_integer() || !jr[1].is_number_integer())
      throw ScenarioError("params.j_range", "expected [j_lo, j_hi] integers");
    if (jr[1].get<int>() < jr[0].get<int>()) throw ScenarioError("params.j_range", "j_hi must be >= j_lo");
    const json& m = need(p, "mode", "params.");
    if (!m.is_string()) throw ScenarioError("params.mode", "expected a string");
    WienerMode mode;
    try {
      mode = wiener_mode_from_string(m.get<std::string>());
    } catch (const std::exception& e) {
      throw ScenarioError("params.mode", e.what());
    }
    if (mode == WienerMode::thin_at_infinity_test && !(ratio > 1.0))
      throw ScenarioError("params.ratio", "thin_at_infinity_test needs ratio > 1");
    if (mode != WienerMode::thin_at_infinity_test && !(ratio < 1.0))
      throw ScenarioError("params.ratio", "irregular_test and ultra_test need ratio in (0, 1)");
    if (p.contains("delta")) {
      const double d = number(p.at("delta"), "params.delta");
      if (!(d > 0.0 && d < 1.0)) throw ScenarioError("params.delta", "delta must lie in (0, 1)");
    }
    return;
  }
  if (t == "gauss" || t == "formula_check") {
    exterior(z_of("z"), "params.z");
    check_positive_q(q_values(p, true), "params.q");
    return;
  }
  if (t == "existence") {
    exterior(z_of("z"), "params.z");
    check_positive_q({number_at(p, "q", "params.")}, "params.q");
    ladder_at(p);
    return;
  }
  if (t == "support_scan") {
    exterior(z_of("z"), "params.z");
    const auto q = q_values(p, false);
    const bool relative = p.value("q_relative_to_h", false);
    for (std::size_t k = 1; k < q.size(); ++k)
      if (q[k] < q[k - 1]) throw ScenarioError("params.q_grid", "q grid must be sorted ascending");
    if (!relative) check_positive_q(q, "params.q_grid");
    ladder_at(p);
    return;
  }
  if (t == "continuity_scan") {
    const auto path = path_points(p, n);
    for (std::size_t k = 0; k < path.size(); ++k) exterior(path[k], "params.z_path[" + std::to_string(k) + "]");
    const std::string mode = p.value("mode", std::string("q_equals_h"));
    if (mode == "fixed_q") {
      const double q = number_at(p, "q", "params.");
      if (!(q > 0.0 && q <= 1.0)) throw ScenarioError("params.q", "fixed_q mode needs 0 < q <= 1");
    } else if (mode != "q_equals_h") {
      throw ScenarioError("params.mode", "expected 'q_equals_h' or 'fixed_q'");
    }
    return;
  }
  throw ScenarioError("task", "unknown task '" + t + "'");
}


std::string iso_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

std::string trace_csv(const std::vector<TraceRow>& t) {
  std::ostringstream os;
  write_trace_csv(os, t);
  return os.str();
}

struct Runner {
  const Scenario& s;
  const RunOptions& opt;
  SolveSettings settings;
  RunStatus status = RunStatus::ok;
  std::vector<std::pair<std::string, std::string>> files;
  int traces = 0;

  Runner(const Scenario& sc, const RunOptions& o) : s(sc), opt(o), settings(sc.settings) {
    settings.record_trace = o.trace;
  }

  void converged(bool c) {
    if (!c) status = RunStatus::error;
  }
  void conclusive(bool c) {
    if (!c && status == RunStatus::ok) status = RunStatus::inconclusive;
  }
  void trace(const std::vector<TraceRow>& t) {
    if (opt.trace && !t.empty()) files.emplace_back("_trace_" + std::to_string(traces++) + ".csv", trace_csv(t));
  }

  struct Target {
    CloudPtr cloud;
    KernelContext ctx;
  };
  Target target() {
    Target t;
    t.cloud = std::make_shared<const PointCloud>(discretize(s.set, s.resolution, settings.discretize));
    t.ctx = assemble_kernel(t.cloud, s.alpha, settings.kernel);
    return t;
  }

  static json cloud_json(const Target& t) {
    return {{"nodes", t.cloud->size()}, {"total_weight", t.cloud->total_weight()},
            {"diagonal_rule", t.ctx.diagonal_rule.parameters}};
  }

  Vec vec(const char* key) const { return point(s.params.at(key), dimension(s.set), key); }

  json run() {
    const json& p = s.params;
    const std::string& t = s.task;
    if (t == "capacity" || t == "equilibrium") {
      const Target tg = target();
      const EquilibriumResult eq = equilibrium_measure(tg.ctx, settings);
      converged(eq.converged);
      trace(eq.trace);
      json r = cloud_json(tg);
      r["capacity"] = eq.capacity;
      if (t == "equilibrium") {
        r["equilibrium"] = to_json(eq);
        r["min_potential_on_nodes"] = eq.potential_on_nodes.size() ? eq.potential_on_nodes.minCoeff() : 0.0;
      } else {
        r["mass"] = eq.gamma.total_mass();
        r["energy"] = eq.energy;
        r["kkt_residual"] = eq.kkt_residual;
        r["converged"] = eq.converged;
      }
      return r;
    }
    if (t == "balayage" || t == "harmonic") {
      const Target tg = target();
      BalayageResult b;
      if (t == "harmonic") {
        b = harmonic_measure(vec("z"), tg.ctx, settings);
      } else {
        const json& src = p.at("source");
        const auto masses = numbers(src.at("masses"), "params.source.masses");
        PointSource ps;
        ps.points.resize(dimension(s.set), static_cast<Eigen::Index>(masses.size()));
        ps.masses.resize(static_cast<Eigen::Index>(masses.size()));
        for (std::size_t k = 0; k < masses.size(); ++k) {
          ps.points.col(static_cast<Eigen::Index>(k)) = point(src.at("points")[k], dimension(s.set), "params.source.points");
          ps.masses[static_cast<Eigen::Index>(k)] = masses[k];
        }
        b = balayage(tg.ctx, ps, settings);
      }
      converged(b.converged);
      trace(b.trace);
      json r = cloud_json(tg);
      r["balayage"] = to_json(b);
      r["mass"] = b.swept.total_mass();
      return r;
    }
    if (t == "hvalue") {
      const HValueReport h = h_value(vec("z"), s.set, s.alpha, ladder_at(p), s.resolution, settings,
                                     p.value("cross_check_tol", 0.02));
      for (const auto& g : h.rungs) converged(g.converged);
      conclusive(!h.inconclusive);
      return {{"h_value", to_json(h)}};
    }
    if (t == "wiener") {
      const int lo = p.at("j_range")[0].get<int>();
      const int hi = p.at("j_range")[1].get<int>();
      const WienerReport w = wiener_classify(s.set, vec("y"), number(p.at("ratio"), "ratio"), lo, hi,
                                             wiener_mode_from_string(p.at("mode").get<std::string>()), s.alpha,
                                             s.resolution, settings, p.value("delta", 0.05));
      for (const auto& sl : w.slices) converged(sl.converged);
      conclusive(w.verdict != SeriesVerdict::inconclusive);
      return {{"wiener", to_json(w)}};
    }
    if (t == "gauss") {
      const Target tg = target();
      const Vec z = vec("z");
      json rows = json::array();
      std::ostringstream csv;
      csv.precision(17);
      csv << "q,value,constant,support_radius,kkt_residual,converged\n";
      for (double q : q_values(p, true)) {
        const WeightedSolveReport w = solve_weighted(tg.ctx, FieldSpec{z, q, s.alpha}, settings);
        converged(w.converged);
        trace(w.trace);
        rows.push_back(to_json(w));
        csv << q << ',' << w.value << ',' << w.constant << ',' << w.support_radius << ',' << w.kkt_residual << ','
            << (w.converged ? "true" : "false") << '\n';
      }
      files.emplace_back(".csv", csv.str());
      json r = cloud_json(tg);
      r["solutions"] = rows;
      return r;
    }
    if (t == "formula_check") {
      const Target tg = target();
      const Vec z = vec("z");
      const BalayageResult hm = harmonic_measure(z, tg.ctx, settings);
      const EquilibriumResult eq = equilibrium_measure(tg.ctx, settings);
      converged(hm.converged && eq.converged);
      const double H = 1.0 / hm.swept.total_mass();
      json rows = json::array();
      for (double q : q_values(p, true)) {
        const FieldSpec f{z, q, s.alpha};
        const WeightedSolveReport w = solve_weighted(tg.ctx, f, settings);
        converged(w.converged);
        trace(w.trace);
        json row = {{"q", q}, {"solution", to_json(w, false)}};
        row["constant_check"] = to_json(weighted_constant(w, H, eq.capacity));
        if (q <= H * (1.0 + p.value("h_tol", 1e-6)))
          row["formula"] = to_json(check_solution_formula(tg.ctx, f, w, hm, eq, p.value("h_tol", 1e-6)));
        else
          row["formula"] = {{"branch", "q>H"}, {"note", "representation covers q <= H_z only"}};
        rows.push_back(row);
      }
      json r = cloud_json(tg);
      r["h_z"] = H;
      r["capacity"] = eq.capacity;
      r["harmonic_mass"] = hm.swept.total_mass();
      r["rows"] = rows;
      return r;
    }
    if (t == "existence") {
      const ExistenceVerdict v = existence_probe(s.set, FieldSpec{vec("z"), number(p.at("q"), "q"), s.alpha},
                                                 ladder_at(p), s.resolution, settings);
      for (const auto& r : v.ladder) converged(r.converged);
      conclusive(v.verdict != ExistenceVerdictKind::inconclusive);
      std::ostringstream csv;
      write_existence_csv(csv, v);
      files.emplace_back(".csv", csv.str());
      return {{"existence", to_json(v)}};
    }
    if (t == "support_scan") {
      const Vec z = vec("z");
      const auto ladder = ladder_at(p);
      std::vector<double> q = q_values(p, false);
      json extra = json::object();
      if (p.value("q_relative_to_h", false)) {
        const HValueReport h = h_value(z, s.set, s.alpha, ladder, s.resolution, settings);
        conclusive(!h.inconclusive);
        for (auto& v : q) v += h.value;
        extra = to_json(h);
      }
      const SupportScan sc = support_scan(s.set, z, s.alpha, q, ladder, s.resolution, settings);
      for (const auto& row : sc.rows) {
        for (const auto& r : row.ladder) converged(r.converged);
        conclusive(!row.inconclusive);
      }
      std::ostringstream csv;
      write_support_csv(csv, sc);
      files.emplace_back(".csv", csv.str());
      json r = {{"support_scan", to_json(sc)}};
      if (!extra.empty()) r["h_value"] = extra;
      return r;
    }
    if (t == "continuity_scan") {
      const std::string mode = p.value("mode", std::string("q_equals_h"));
      const ContinuityScan sc =
          continuity_scan(s.set, path_points(p, dimension(s.set)),
                          mode == "fixed_q" ? ContinuityMode::fixed_q : ContinuityMode::q_equals_h,
                          p.contains("q") ? number(p.at("q"), "q") : 1.0, s.alpha, s.resolution, settings);
      for (const auto& st : sc.steps) converged(st.converged);
      std::ostringstream csv;
      write_continuity_csv(csv, sc);
      files.emplace_back(".csv", csv.str());
      json r = to_json(sc);
      r["nodes"] = sc.cloud->size();
      return {{"continuity_scan", r}};
    }
    throw ScenarioError("task", "unknown task '" + t + "'");
  }
};

}  // namespace

const std::vector<std::string>& task_names() {
  static const std::vector<std::string> names = {"capacity",  "equilibrium", "balayage",     "harmonic",
                                                 "hvalue",    "wiener",      "gauss",        "existence",
                                                 "support_scan", "continuity_scan", "formula_check"};
  return names;
}

Scenario parse_scenario(const json& j) {
  if (!j.is_object()) throw ScenarioError("", "scenario must be a JSON object");
  Scenario s;
  const json& name = need(j, "name", "");
  if (!name.is_string() || name.get<std::string>().empty()) throw ScenarioError("name", "expected a nonempty string");
  s.name = name.get<std::string>();
  for (char c : s.name)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.'))
      throw ScenarioError("name", "use letters, digits, '_', '-' or '.' only");
  s.description = j.value("description", std::string());
  const json& task = need(j, "task", "");
  if (!task.is_string()) throw ScenarioError("task", "expected a string");
  s.task = task.get<std::string>();
  bool known = false;
  for (const auto& t : task_names()) known = known || t == s.task;
  if (!known) throw ScenarioError("task", "unknown task '" + s.task + "'");
  s.set_json = need(j, "set", "");
  try {
    from_json(s.set_json, s.set);
    validate(s.set);
  } catch (const ScenarioError&) {
    throw;
  } catch (const std::exception& e) {
    throw ScenarioError("set", e.what());
  }
  s.alpha = number_at(j, "alpha", "");
  try {
    check_alpha(s.alpha, dimension(s.set));
  } catch (const std::exception& e) {
    throw ScenarioError("alpha", e.what());
  }
  s.resolution = integer_at(j, "resolution", "");
  if (s.resolution < 1) throw ScenarioError("resolution", "must be >= 1");
  if (j.contains("params")) {
    if (!j.at("params").is_object()) throw ScenarioError("params", "expected an object");
    s.params = j.at("params");
  }
  if (j.contains("solver")) {
    const json& sv = j.at("solver");
    if (!sv.is_object()) throw ScenarioError("solver", "expected an object");
    if (sv.contains("tol")) {
      s.settings.tol = number(sv.at("tol"), "solver.tol");
      if (!(s.settings.tol > 0.0)) throw ScenarioError("solver.tol", "must be positive");
    }
    if (sv.contains("max_iter")) {
      if (!sv.at("max_iter").is_number_integer() || sv.at("max_iter").get<long>() < 1)
        throw ScenarioError("solver.max_iter", "expected a positive integer");
      s.settings.max_iter = sv.at("max_iter").get<long>();
    }
    if (sv.contains("mass_floor")) s.settings.mass_floor = number(sv.at("mass_floor"), "solver.mass_floor");
    if (sv.contains("diagonal_scheme")) {
      try {
        s.settings.kernel.scheme = diagonal_scheme_from_string(sv.at("diagonal_scheme").get<std::string>());
      } catch (const std::exception& e) {
        throw ScenarioError("solver.diagonal_scheme", e.what());
      }
    }
    if (sv.contains("node_cap")) s.settings.kernel.node_cap = sv.at("node_cap").get<Eigen::Index>();
  }
  if (j.contains("output")) {
    if (!j.at("output").is_string()) throw ScenarioError("output", "expected a path string");
    s.output = j.at("output").get<std::string>();
  }
  validate_params(s);
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("", "cannot read scenario file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ScenarioError("", std::string("malformed JSON: ") + e.what());
  }
  return parse_scenario(j);
}

void apply_overrides(Scenario& s, const Overrides& o) {
  if (o.tol) {
    if (!(*o.tol > 0.0)) throw ScenarioError("tol", "must be positive");
    s.settings.tol = *o.tol;
  }
  if (o.max_iter) {
    if (*o.max_iter < 1) throw ScenarioError("max_iter", "must be positive");
    s.settings.max_iter = *o.max_iter;
  }
  if (o.resolution) {
    if (*o.resolution < 1) throw ScenarioError("resolution", "must be >= 1");
    s.resolution = *o.resolution;
  }
  if (o.threads) {
    if (*o.threads < 1) throw ScenarioError("threads", "must be >= 1");
    s.settings.kernel.threads = *o.threads;
  }
}

std::string to_string(RunStatus s) {
  switch (s) {
    case RunStatus::ok:
      return "ok";
    case RunStatus::inconclusive:
      return "inconclusive";
    case RunStatus::error:
      return "error";
  }
  return "?";
}

int exit_code(RunStatus s) {
  switch (s) {
    case RunStatus::ok:
      return 0;
    case RunStatus::inconclusive:
      return 2;
    case RunStatus::error:
      return 1;
  }
  return 1;
}

nlohmann::json error_report(const std::string& message, const std::string& field, const std::string& scenario,
                            const std::string& task) {
  json r = {{"schema_version", kReportSchemaVersion},
            {"tool", "rieszwb"},
            {"status", "error"},
            {"error", {{"message", message}}}};
  if (!field.empty()) r["error"]["field"] = field;
  if (!scenario.empty()) r["scenario"] = scenario;
  if (!task.empty()) r["task"] = task;
  return r;
}

RunOutput run_scenario(const Scenario& s, const RunOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  Runner runner(s, opt);
  RunOutput out;
  json result;
  try {
    result = runner.run();
  } catch (const ScenarioError& e) {
    out.status = RunStatus::error;
    out.report = error_report(e.what(), e.field(), s.name, s.task);
    return out;
  } catch (const std::exception& e) {
    out.status = RunStatus::error;
    out.report = error_report(e.what(), "", s.name, s.task);
    return out;
  }
  out.status = runner.status;
  const int n = dimension(s.set);
  json config = {{"alpha", s.alpha},
                 {"n", n},
                 {"resolution", s.resolution},
                 {"set", s.set_json},
                 {"params", s.params},
                 {"solver", settings_json(runner.settings)},
                 {"diagonal_rule", describe_diagonal_rule(runner.settings.kernel.scheme, s.alpha, n)},
                 {"threads", runner.settings.kernel.threads}};
  out.report = {{"schema_version", kReportSchemaVersion},
                {"tool", "rieszwb"},
                {"scenario", s.name},
                {"task", s.task},
                {"status", to_string(out.status)},
                {"config", config},
                {"result", result}};
  if (!s.description.empty()) out.report["description"] = s.description;
  if (!opt.normalize) {
    out.report["generated_at"] = iso_now();
    out.report["runtime_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
  out.files = std::move(runner.files);
  return out;
}

}  // namespace rieszwb
