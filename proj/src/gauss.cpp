#include "rieszwb/gauss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace rieszwb {

namespace {

std::vector<double> as_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

nlohmann::json num(double x) {
  if (std::isfinite(x)) return x;
  if (std::isnan(x)) return nullptr;
  return x > 0 ? "inf" : "-inf";
}

struct RungContext {
  CloudPtr cloud;
  KernelContext ctx;
};

RungContext build_rung(const SetDescriptor& desc, double R, double alpha, int resolution, const SolveSettings& s) {
  RungContext rc;
  rc.cloud = std::make_shared<const PointCloud>(discretize(truncate_for_rung(desc, R), resolution, s.discretize));
  rc.ctx = assemble_kernel(rc.cloud, alpha, s.kernel);
  return rc;
}

void check_ladder(const std::vector<double>& ladder) {
  if (ladder.empty()) throw std::invalid_argument("ladder must not be empty");
  for (std::size_t k = 0; k < ladder.size(); ++k) {
    if (!(ladder[k] > 0.0) || !std::isfinite(ladder[k])) throw std::invalid_argument("ladder radii must be positive");
    if (k > 0 && !(ladder[k] > ladder[k - 1])) throw std::invalid_argument("ladder radii must be strictly increasing");
  }
}

LadderRecord record_of(double R, const WeightedSolveReport& r, Eigen::Index nodes) {
  LadderRecord rec;
  rec.radius = R;
  rec.nodes = nodes;
  rec.value = r.value;
  rec.constant = r.constant;
  rec.centroid_radius = r.centroid_radius;
  rec.support_radius = r.support_radius;
  rec.kkt_residual = r.kkt_residual;
  rec.converged = r.converged;
  return rec;
}

double support_radius_of(const PointCloud& c, const std::vector<Eigen::Index>& support) {
  double r = 0.0;
  for (auto i : support) r = std::max(r, c.nodes.col(i).norm());
  return r;
}

}  // namespace

void check_field(const FieldSpec& f, const PointCloud& cloud) {
  if (!(f.q > 0.0) || !std::isfinite(f.q)) throw std::invalid_argument("field: q must be a positive finite number");
  if (f.z.size() != cloud.n) throw std::invalid_argument("field: z dimension mismatch");
  if (!f.z.allFinite()) throw std::invalid_argument("field: z must be finite");
  for (Eigen::Index i = 0; i < cloud.size(); ++i)
    if ((cloud.nodes.col(i) - f.z).squaredNorm() == 0.0)
      throw std::invalid_argument("field: z coincides with a node of the target cloud");
}

WeightedSolveReport solve_weighted(const KernelContext& ctx, const FieldSpec& field, const SolveSettings& s) {
  if (!ctx.cloud) throw std::invalid_argument("solve_weighted: missing cloud");
  check_field(field, *ctx.cloud);
  if (field.alpha != ctx.alpha) throw std::invalid_argument("solve_weighted: field alpha differs from kernel alpha");
  if (ctx.size() == 0) throw std::invalid_argument("solve_weighted: empty target cloud");
  Eigen::VectorXd bn(ctx.size());
  const double p = ctx.exponent();
  for (Eigen::Index i = 0; i < ctx.size(); ++i)
    bn[i] = field.q * std::pow((ctx.cloud->nodes.col(i) - field.z).norm(), p);

  QpProblem prob;
  prob.ctx = &ctx;
  prob.b = bn;
  prob.constraint = Constraint::simplex;
  prob.tol = s.tol;
  prob.max_iter = s.max_iter;
  prob.record_trace = s.record_trace;
  prob.mass_floor = s.mass_floor;
  const QpSolution sol = solve(prob);

  WeightedSolveReport r;
  r.lambda = sol.masses;
  r.q = field.q;
  const Eigen::VectorXd& m = sol.masses.masses;
  const Eigen::VectorXd Km = apply(ctx, m);
  const double energy = m.dot(Km);
  const double field_term = bn.dot(m);  // q U^lambda(z)
  r.value = energy - 2.0 * field_term;
  r.constant = energy - field_term;
  r.multiplier = sol.multiplier;
  r.kkt_residual = sol.kkt_residual;
  r.converged = sol.converged;
  r.iterations = sol.iterations;
  r.support_indices = sol.support;
  r.support_radius = support_radius_of(*ctx.cloud, sol.support);
  double cr = 0.0;
  for (Eigen::Index i = 0; i < m.size(); ++i) cr += m[i] * ctx.cloud->nodes.col(i).norm();
  r.centroid_radius = cr / m.sum();
  r.trace = sol.trace;
  return r;
}

ConstantCheck weighted_constant(const WeightedSolveReport& report, double h_z, double capacity) {
  ConstantCheck c;
  c.measured = report.constant;
  if (!(h_z > 0.0) || !(capacity > 0.0) || !std::isfinite(capacity)) {
    c.note = "formula needs finite positive H_z and capacity";
    return c;
  }
  if (report.q >= h_z) {
    c.note = "q >= H_z: formula route inapplicable";
    return c;
  }
  c.formula = (h_z - report.q) / (h_z * capacity);
  c.relative_gap = std::abs(c.measured - *c.formula) / std::abs(*c.formula);
  c.note = "q < H_z";
  return c;
}

FormulaCheck check_solution_formula(const KernelContext& ctx, const FieldSpec& field,
                                    const WeightedSolveReport& report, const BalayageResult& harmonic,
                                    const EquilibriumResult& equilibrium, double h_tol) {
  if (harmonic.swept.cloud != ctx.cloud || equilibrium.gamma.cloud != ctx.cloud ||
      report.lambda.cloud != ctx.cloud)
    throw std::invalid_argument("formula check: all measures must live on the kernel's cloud");
  const double mass = harmonic.swept.total_mass();
  if (!(mass > 0.0)) throw std::invalid_argument("formula check: harmonic measure has zero mass");
  FormulaCheck fc;
  fc.h_z = 1.0 / mass;
  fc.capacity = equilibrium.capacity;
  const double q = field.q;
  Eigen::VectorXd rhs;
  if (std::abs(q - fc.h_z) <= h_tol * fc.h_z) {
    fc.branch = "q=H";
    rhs = fc.h_z * harmonic.swept.masses;
  } else if (q < fc.h_z) {
    if (!(fc.capacity > 0.0)) throw std::invalid_argument("formula check: q < H_z branch needs positive capacity");
    fc.branch = "q<H";
    fc.coefficient = (fc.h_z - q) / (fc.h_z * fc.capacity);
    rhs = q * harmonic.swept.masses + fc.coefficient * equilibrium.gamma.masses;
  } else {
    throw std::invalid_argument("formula check: representation covers q <= H_z only");
  }
  const Eigen::VectorXd d = report.lambda.masses - rhs;
  fc.energy_residual = std::sqrt(std::max(0.0, energy(ctx, d)));
  const double norm = std::sqrt(std::max(0.0, energy(ctx, report.lambda.masses)));
  fc.relative_energy_residual = norm > 0.0 ? fc.energy_residual / norm : fc.energy_residual;
  fc.tv_residual = d.cwiseAbs().sum();
  return fc;
}

std::string to_string(ExistenceVerdictKind v) {
  switch (v) {
    case ExistenceVerdictKind::solvable:
      return "solvable";
    case ExistenceVerdictKind::mass_escape:
      return "mass_escape";
    case ExistenceVerdictKind::inconclusive:
      return "inconclusive";
  }
  return "?";
}

ExistenceVerdict existence_probe(const SetDescriptor& desc, const FieldSpec& field, const std::vector<double>& ladder,
                                 int resolution, const SolveSettings& s, const ExistenceThresholds& th) {
  check_ladder(ladder);
  validate(desc);
  if (contains(desc, field.z)) throw std::invalid_argument("existence: z lies in the set");
  ExistenceVerdict v;
  v.q = field.q;
  std::vector<double> masses;
  for (double R : ladder) {
    const RungContext rc = build_rung(desc, R, field.alpha, resolution, s);
    if (rc.cloud->empty()) throw std::invalid_argument("existence: truncation at R = " + std::to_string(R) + " is empty");
    const WeightedSolveReport r = solve_weighted(rc.ctx, field, s);
    v.ladder.push_back(record_of(R, r, rc.cloud->size()));
    masses.push_back(harmonic_measure(field.z, rc.ctx, s).swept.total_mass());
  }
  bool clamped = false;
  v.h_estimate = 1.0 / extrapolate_mass(ladder, masses, &clamped);

  const std::size_t K = v.ladder.size();
  if (K < 2) {
    v.reason = "ladder too short";
    return v;
  }
  const auto& a = v.ladder[K - 2];
  const auto& b = v.ladder[K - 1];
  v.value_gap = std::abs(b.value - a.value) / std::max(1.0, std::abs(b.value));
  v.support_change = std::abs(b.support_radius - a.support_radius) / std::max(a.support_radius, 1e-300);
  v.values_decreasing = true;
  for (std::size_t k = 1; k < K; ++k)
    if (!(v.ladder[k].value < v.ladder[k - 1].value)) v.values_decreasing = false;
  // Least-squares line of centroid radius against R.
  {
    double mx = 0.0, my = 0.0;
    for (const auto& r : v.ladder) {
      mx += r.radius;
      my += r.centroid_radius;
    }
    mx /= static_cast<double>(K);
    my /= static_cast<double>(K);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (const auto& r : v.ladder) {
      sxx += (r.radius - mx) * (r.radius - mx);
      sxy += (r.radius - mx) * (r.centroid_radius - my);
      syy += (r.centroid_radius - my) * (r.centroid_radius - my);
    }
    v.centroid_slope = sxx > 0.0 ? sxy / sxx : 0.0;
    v.centroid_r2 = (sxx > 0.0 && syy > 0.0) ? sxy * sxy / (sxx * syy) : 0.0;
  }
  const bool converged = std::all_of(v.ladder.begin(), v.ladder.end(), [](const LadderRecord& r) { return r.converged; });
  if (!converged) {
    v.reason = "solver did not converge on every rung";
    return v;
  }
  if (v.value_gap <= th.cauchy_band && v.support_change <= th.support_band) {
    v.verdict = ExistenceVerdictKind::solvable;
    v.reason = "values Cauchy and support radius stable over the last two rungs";
  } else if (K >= 3 && v.centroid_slope > 0.0 && v.centroid_r2 >= th.min_r2 && v.values_decreasing) {
    v.verdict = ExistenceVerdictKind::mass_escape;
    v.reason = "centroid radius grows linearly with R while values keep decreasing";
  } else {
    v.reason = "neither stabilization nor linear escape detected";
  }
  return v;
}

SupportScan support_scan(const SetDescriptor& desc, const Vec& z, double alpha, const std::vector<double>& q_grid,
                         const std::vector<double>& ladder, int resolution, const SolveSettings& s,
                         double support_band) {
  check_ladder(ladder);
  validate(desc);
  if (q_grid.empty()) throw std::invalid_argument("support_scan: empty q grid");
  for (std::size_t k = 1; k < q_grid.size(); ++k)
    if (q_grid[k] < q_grid[k - 1]) throw std::invalid_argument("support_scan: q grid must be sorted ascending");
  if (contains(desc, z)) throw std::invalid_argument("support_scan: z lies in the set");
  SupportScan scan;
  scan.rows.resize(q_grid.size());
  std::vector<double> masses;
  for (double R : ladder) {
    const RungContext rc = build_rung(desc, R, alpha, resolution, s);
    if (rc.cloud->empty()) throw std::invalid_argument("support_scan: truncation at R = " + std::to_string(R) + " is empty");
    masses.push_back(harmonic_measure(z, rc.ctx, s).swept.total_mass());
    for (std::size_t k = 0; k < q_grid.size(); ++k) {
      const WeightedSolveReport r = solve_weighted(rc.ctx, FieldSpec{z, q_grid[k], alpha}, s);
      scan.rows[k].q = q_grid[k];
      scan.rows[k].ladder.push_back(record_of(R, r, rc.cloud->size()));
    }
  }
  bool clamped = false;
  scan.h_estimate = 1.0 / extrapolate_mass(ladder, masses, &clamped);
  for (auto& row : scan.rows) {
    const std::size_t K = row.ladder.size();
    row.support_radius = row.ladder.back().support_radius;
    row.inconclusive = !std::all_of(row.ladder.begin(), row.ladder.end(), [](const LadderRecord& r) { return r.converged; });
    if (K >= 2) {
      const double a = row.ladder[K - 2].support_radius;
      const double b = row.ladder[K - 1].support_radius;
      row.stable = std::abs(b - a) <= support_band * a;
      row.grows = true;
      for (std::size_t k = 1; k < K; ++k)
        if (!(row.ladder[k].support_radius > row.ladder[k - 1].support_radius)) row.grows = false;
    } else {
      row.inconclusive = true;
    }
  }
  return scan;
}

double bl_distance(const PointCloud& cloud, const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != cloud.size() || b.size() != cloud.size()) throw std::invalid_argument("bl_distance: size mismatch");
  const Eigen::VectorXd d = a - b;
  std::vector<Eigen::Index> src, dst;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (d[i] > 0.0) src.push_back(i);
    if (d[i] < 0.0) dst.push_back(i);
  }
  struct Pair {
    double cost;
    std::size_t s, t;
  };
  std::vector<Pair> pairs;
  pairs.reserve(src.size() * dst.size());
  for (std::size_t i = 0; i < src.size(); ++i)
    for (std::size_t j = 0; j < dst.size(); ++j)
      pairs.push_back({std::min((cloud.nodes.col(src[i]) - cloud.nodes.col(dst[j])).norm(), 2.0), i, j});
  std::sort(pairs.begin(), pairs.end(), [](const Pair& x, const Pair& y) {
    if (x.cost != y.cost) return x.cost < y.cost;
    if (x.s != y.s) return x.s < y.s;
    return x.t < y.t;
  });
  std::vector<double> supply(src.size()), demand(dst.size());
  for (std::size_t i = 0; i < src.size(); ++i) supply[i] = d[src[i]];
  for (std::size_t j = 0; j < dst.size(); ++j) demand[j] = -d[dst[j]];
  double cost = 0.0;
  for (const auto& p : pairs) {
    const double m = std::min(supply[p.s], demand[p.t]);
    if (m <= 0.0) continue;
    cost += m * p.cost;
    supply[p.s] -= m;
    demand[p.t] -= m;
  }
  // Unmatched mass is bounded by sup|f| <= 1.
  const double left = std::accumulate(supply.begin(), supply.end(), 0.0) + std::accumulate(demand.begin(), demand.end(), 0.0);
  return cost + left;
}

ContinuityScan continuity_scan(const SetDescriptor& desc, const std::vector<Vec>& path, ContinuityMode mode,
                               double q, double alpha, int resolution, const SolveSettings& s) {
  validate(desc);
  if (path.empty()) throw std::invalid_argument("continuity_scan: empty path");
  if (mode == ContinuityMode::fixed_q && !(q > 0.0 && q <= 1.0))
    throw std::invalid_argument("continuity_scan: fixed-q mode needs 0 < q <= 1");
  for (const auto& z : path)
    if (contains(desc, z)) throw std::invalid_argument("continuity_scan: path point lies in the set");
  auto cloud = std::make_shared<const PointCloud>(discretize(desc, resolution, s.discretize));
  const KernelContext ctx = assemble_kernel(cloud, alpha, s.kernel);
  ContinuityScan scan;
  scan.cloud = cloud;
  for (std::size_t k = 0; k < path.size(); ++k) {
    ContinuityStep st;
    st.z = path[k];
    if (mode == ContinuityMode::q_equals_h) {
      const double mass = harmonic_measure(path[k], ctx, s).swept.total_mass();
      if (!(mass > 0.0)) throw std::invalid_argument("continuity_scan: harmonic measure vanishes");
      st.q = 1.0 / mass;
    } else {
      st.q = q;
    }
    const WeightedSolveReport r = solve_weighted(ctx, FieldSpec{path[k], st.q, alpha}, s);
    st.value = r.value;
    st.constant = r.constant;
    st.support_radius = r.support_radius;
    st.kkt_residual = r.kkt_residual;
    st.converged = r.converged;
    st.masses = r.lambda.masses;
    if (k > 0) {
      st.step = (path[k] - path[k - 1]).norm();
      st.distance = bl_distance(*cloud, st.masses, scan.steps.back().masses);
    }
    scan.steps.push_back(std::move(st));
  }
  return scan;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

nlohmann::json to_json(const WeightedSolveReport& r, bool with_masses) {
  std::vector<Eigen::Index> sup(r.support_indices.begin(), r.support_indices.end());
  nlohmann::json j = {{"q", r.q},
                      {"value", r.value},
                      {"constant", r.constant},
                      {"multiplier", r.multiplier},
                      {"kkt_residual", r.kkt_residual},
                      {"converged", r.converged},
                      {"iterations", r.iterations},
                      {"total_mass", r.lambda.total_mass()},
                      {"support_size", sup.size()},
                      {"support_radius", r.support_radius},
                      {"centroid_radius", r.centroid_radius}};
  if (with_masses) {
    j["support_indices"] = sup;
    j["masses"] = as_std(r.lambda.masses);
  }
  if (!r.trace.empty()) j["trace"] = trace_json(r.trace);
  return j;
}

nlohmann::json to_json(const ConstantCheck& c) {
  return {{"measured", c.measured},
          {"formula", c.formula ? nlohmann::json(*c.formula) : nlohmann::json(nullptr)},
          {"relative_gap", c.formula ? nlohmann::json(c.relative_gap) : nlohmann::json(nullptr)},
          {"note", c.note}};
}

nlohmann::json to_json(const FormulaCheck& c) {
  return {{"branch", c.branch},
          {"h_z", c.h_z},
          {"capacity", c.capacity},
          {"coefficient", c.coefficient},
          {"energy_residual", c.energy_residual},
          {"relative_energy_residual", c.relative_energy_residual},
          {"tv_residual", c.tv_residual}};
}

namespace {

nlohmann::json ladder_json(const std::vector<LadderRecord>& ladder) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& r : ladder)
    a.push_back({{"radius", r.radius},
                 {"nodes", r.nodes},
                 {"value", r.value},
                 {"constant", r.constant},
                 {"centroid_radius", r.centroid_radius},
                 {"support_radius", r.support_radius},
                 {"kkt_residual", r.kkt_residual},
                 {"converged", r.converged}});
  return a;
}

void csv_row(std::ostream& os, double key, double value, double constant, double support_radius, double kkt,
             bool converged) {
  os << key << ',' << value << ',' << constant << ',' << support_radius << ',' << kkt << ','
     << (converged ? "true" : "false") << '\n';
}

}  // namespace

nlohmann::json to_json(const ExistenceVerdict& v) {
  return {{"verdict", to_string(v.verdict)},
          {"q", v.q},
          {"h_estimate", num(v.h_estimate)},
          {"ladder", ladder_json(v.ladder)},
          {"value_gap", v.value_gap},
          {"support_change", v.support_change},
          {"centroid_slope", v.centroid_slope},
          {"centroid_r2", v.centroid_r2},
          {"values_decreasing", v.values_decreasing},
          {"reason", v.reason}};
}

nlohmann::json to_json(const SupportScan& s) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : s.rows)
    rows.push_back({{"q", r.q},
                    {"support_radius", r.support_radius},
                    {"stable", r.stable},
                    {"grows", r.grows},
                    {"inconclusive", r.inconclusive},
                    {"ladder", ladder_json(r.ladder)}});
  return {{"h_estimate", num(s.h_estimate)}, {"rows", rows}};
}

nlohmann::json to_json(const ContinuityScan& s) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& st : s.steps)
    steps.push_back({{"z", as_std(st.z)},
                     {"q", st.q},
                     {"step", st.step},
                     {"bl_distance", st.distance},
                     {"value", st.value},
                     {"constant", st.constant},
                     {"support_radius", st.support_radius},
                     {"kkt_residual", st.kkt_residual},
                     {"converged", st.converged}});
  return {{"bl_distance_method", "greedy transport upper bound, cost min(|x-y|, 2)"}, {"steps", steps}};
}

void write_support_csv(std::ostream& os, const SupportScan& s) {
  os.precision(17);
  os << "q,value,constant,support_radius,kkt_residual,converged\n";
  for (const auto& r : s.rows) {
    const auto& l = r.ladder.back();
    csv_row(os, r.q, l.value, l.constant, l.support_radius, l.kkt_residual, l.converged);
  }
}

void write_continuity_csv(std::ostream& os, const ContinuityScan& s) {
  os.precision(17);
  os << "step,value,constant,support_radius,kkt_residual,converged,bl_distance\n";
  for (const auto& st : s.steps) {
    os << st.step << ',' << st.value << ',' << st.constant << ',' << st.support_radius << ',' << st.kkt_residual
       << ',' << (st.converged ? "true" : "false") << ',' << st.distance << '\n';
  }
}

void write_existence_csv(std::ostream& os, const ExistenceVerdict& v) {
  os.precision(17);
  os << "q,value,constant,support_radius,kkt_residual,converged,radius\n";
  for (const auto& r : v.ladder)
    os << v.q << ',' << r.value << ',' << r.constant << ',' << r.support_radius << ',' << r.kkt_residual << ','
       << (r.converged ? "true" : "false") << ',' << r.radius << '\n';
}

}  // namespace rieszwb
