#include "rieszwb/potential_ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rieszwb {

namespace {

QpProblem make_problem(const KernelContext& ctx, Eigen::VectorXd b, Constraint c, const SolveSettings& s) {
  QpProblem p;
  p.ctx = &ctx;
  p.b = std::move(b);
  p.constraint = c;
  p.tol = s.tol;
  p.max_iter = s.max_iter;
  p.record_trace = s.record_trace;
  p.mass_floor = s.mass_floor;
  return p;
}

nlohmann::json num(double x) {
  if (std::isfinite(x)) return x;
  if (std::isnan(x)) return nullptr;
  return x > 0 ? "inf" : "-inf";
}

std::vector<double> as_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

double radical_inverse(unsigned long long i, unsigned base) {
  double f = 1.0;
  double r = 0.0;
  while (i > 0) {
    f /= base;
    r += f * static_cast<double>(i % base);
    i /= base;
  }
  return r;
}

}  // namespace

nlohmann::json settings_json(const SolveSettings& s) {
  return {{"tol", s.tol},
          {"max_iter", s.max_iter},
          {"mass_floor", s.mass_floor},
          {"diagonal_scheme", to_string(s.kernel.scheme)},
          {"node_cap", s.kernel.node_cap},
          {"skin_fraction", s.discretize.skin_fraction},
          {"layer_growth", s.discretize.layer_growth},
          {"axial_grading", s.discretize.axial_grading},
          {"ring_ratio", s.discretize.ring_ratio},
          {"min_stations", s.discretize.min_stations},
          {"log_radius_floor", s.discretize.log_radius_floor}};
}

// ---------------------------------------------------------------------------
// Equilibrium measure
// ---------------------------------------------------------------------------

EquilibriumResult equilibrium_measure(const KernelContext& ctx, const SolveSettings& s) {
  EquilibriumResult r;
  if (ctx.size() == 0) {
    r.gamma = DiscreteMeasure::zero(ctx.cloud);
    return r;
  }
  const QpSolution sol = solve(make_problem(ctx, Eigen::VectorXd::Ones(ctx.size()), Constraint::cone, s));
  r.gamma = sol.masses;
  r.capacity = sol.masses.total_mass();
  r.potential_on_nodes = apply(ctx, sol.masses.masses);
  r.energy = sol.masses.masses.dot(r.potential_on_nodes);
  r.kkt_residual = sol.kkt_residual;
  r.converged = sol.converged;
  r.iterations = sol.iterations;
  r.trace = sol.trace;
  return r;
}

EquilibriumResult equilibrium_measure(CloudPtr cloud, double alpha, const SolveSettings& s) {
  const KernelContext ctx = assemble_kernel(std::move(cloud), alpha, s.kernel);
  return equilibrium_measure(ctx, s);
}

double capacity(CloudPtr cloud, double alpha, const SolveSettings& s) {
  if (!cloud || cloud->empty()) return 0.0;
  return equilibrium_measure(std::move(cloud), alpha, s).capacity;
}

// ---------------------------------------------------------------------------
// Balayage
// ---------------------------------------------------------------------------

Eigen::VectorXd source_potential(const KernelContext& target, const PointSource& src) {
  if (src.points.rows() != target.n) throw KernelError("balayage: source dimension mismatch");
  if (src.masses.size() != src.points.cols()) throw KernelError("balayage: source mass count mismatch");
  if (!src.points.allFinite() || !src.masses.allFinite()) throw KernelError("balayage: non-finite source");
  if ((src.masses.array() < 0.0).any()) throw KernelError("balayage: source masses must be nonnegative");
  try {
    return point_potential(target.alpha, src.points, src.masses, target.cloud->nodes);
  } catch (const KernelError&) {
    throw KernelError("balayage: a point source coincides with a target node (potential undefined there)");
  }
}

Eigen::VectorXd source_potential(const KernelContext& target, const DiscreteMeasure& src) {
  if (src.cloud == target.cloud) return apply(target, src.masses);
  if (!src.cloud) throw KernelError("balayage: source measure has no cloud");
  return source_potential(target, PointSource{src.cloud->nodes, src.masses});
}

namespace {

BalayageResult sweep(const KernelContext& target, const Eigen::VectorXd& b, double source_mass,
                     nlohmann::json description, const SolveSettings& s) {
  BalayageResult r;
  r.source = std::move(description);
  r.source_mass = source_mass;
  if (target.size() == 0) {
    r.swept = DiscreteMeasure::zero(target.cloud);
    return r;
  }
  const QpSolution sol = solve(make_problem(target, b, Constraint::cone, s));
  r.swept = sol.masses;
  r.mass_ratio = source_mass > 0.0 ? sol.masses.total_mass() / source_mass : 0.0;
  const Eigen::VectorXd diff = apply(target, sol.masses.masses) - b;
  r.potential_match_residual = diff.cwiseAbs().maxCoeff();
  for (auto i : sol.support) r.support_match_residual = std::max(r.support_match_residual, std::abs(diff[i]));
  r.kkt_residual = sol.kkt_residual;
  r.converged = sol.converged;
  r.iterations = sol.iterations;
  r.trace = sol.trace;
  return r;
}

}  // namespace

BalayageResult balayage(const KernelContext& target, const PointSource& src, const SolveSettings& s) {
  const Eigen::VectorXd b = source_potential(target, src);
  nlohmann::json d = {{"kind", "point_charges"}, {"count", src.points.cols()}, {"masses", as_std(src.masses)}};
  nlohmann::json pts = nlohmann::json::array();
  for (Eigen::Index k = 0; k < src.points.cols(); ++k) pts.push_back(as_std(src.points.col(k)));
  d["points"] = pts;
  return sweep(target, b, src.masses.sum(), d, s);
}

BalayageResult balayage(const KernelContext& target, const DiscreteMeasure& src, const SolveSettings& s) {
  const Eigen::VectorXd b = source_potential(target, src);
  nlohmann::json d = {{"kind", src.cloud == target.cloud ? "measure_on_target" : "node_measure"},
                      {"count", src.masses.size()},
                      {"total_mass", src.total_mass()}};
  return sweep(target, b, src.total_mass(), d, s);
}

BalayageResult harmonic_measure(const Vec& z, const KernelContext& target, const SolveSettings& s) {
  PointSource src{Eigen::MatrixXd(z), Eigen::VectorXd::Ones(1)};
  return balayage(target, src, s);
}

Eigen::VectorXd measure_potential(const KernelContext& ctx, const Eigen::VectorXd& masses,
                                  const Eigen::MatrixXd& points) {
  return potential_at(ctx, DiscreteMeasure(ctx.cloud, masses), points);
}

Eigen::MatrixXd probe_points(const Vec& center, double radius, int count) {
  const auto n = static_cast<int>(center.size());
  static constexpr unsigned primes[] = {2, 3, 5, 7};
  Eigen::MatrixXd out(n, count);
  int filled = 0;
  for (unsigned long long i = 1; filled < count; ++i) {
    Vec u(n);
    for (int k = 0; k < n; ++k) u[k] = 2.0 * radical_inverse(i, primes[k]) - 1.0;
    if (u.squaredNorm() > 1.0) continue;
    out.col(filled++) = center + radius * u;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Threshold H_z
// ---------------------------------------------------------------------------

double extrapolate_mass(const std::vector<double>& radii, const std::vector<double>& masses, bool* clamped) {
  if (radii.empty() || radii.size() != masses.size()) throw std::invalid_argument("extrapolate_mass: bad ladder");
  if (clamped) *clamped = false;
  const std::size_t k = radii.size() - 1;
  if (k == 0) return masses[0];
  // mass(R) ~ m_inf + a / R through the last two rungs.
  const double R1 = radii[k - 1];
  const double R2 = radii[k];
  const double m = (R2 * masses[k] - R1 * masses[k - 1]) / (R2 - R1);
  const double lo = masses[k];
  if (m < lo || m > 1.0) {
    if (clamped) *clamped = true;
    return std::clamp(m, lo, std::max(lo, 1.0));
  }
  return m;
}

SetDescriptor truncate_for_rung(const SetDescriptor& desc, double radius) {
  Vec origin = Vec::Zero(dimension(desc));
  if (extent_from(desc, origin) <= radius) return desc;
  return make_truncate(desc, radius);
}

HValueReport h_value(const Vec& z, const SetDescriptor& desc, double alpha, const std::vector<double>& ladder,
                     int resolution, const SolveSettings& s, double cross_check_tol) {
  if (ladder.empty()) throw std::invalid_argument("h_value: empty truncation ladder");
  for (std::size_t k = 1; k < ladder.size(); ++k)
    if (!(ladder[k] > ladder[k - 1])) throw std::invalid_argument("h_value: ladder radii must increase");
  if (z.size() != dimension(desc)) throw std::invalid_argument("h_value: z dimension mismatch");
  if (contains(desc, z)) throw std::invalid_argument("h_value: z lies in the set");
  HValueReport rep;
  for (double R : ladder) {
    auto cloud = std::make_shared<const PointCloud>(discretize(truncate_for_rung(desc, R), resolution, s.discretize));
    const KernelContext ctx = assemble_kernel(cloud, alpha, s.kernel);
    HValueRung rung;
    rung.radius = R;
    rung.nodes = cloud->size();
    const BalayageResult hm = harmonic_measure(z, ctx, s);
    rung.harmonic_mass = hm.swept.total_mass();
    const EquilibriumResult eq = equilibrium_measure(ctx, s);
    rung.capacity = eq.capacity;
    rung.equilibrium_potential_at_z =
        cloud->empty() ? 0.0 : point_potential(alpha, cloud->nodes, eq.gamma.masses, Eigen::MatrixXd(z))[0];
    rung.converged = hm.converged && eq.converged;
    rep.rungs.push_back(rung);
  }
  const auto& last = rep.rungs.back();
  std::vector<double> radii, masses;
  for (const auto& g : rep.rungs) {
    radii.push_back(g.radius);
    masses.push_back(g.harmonic_mass);
  }
  rep.extrapolated_mass = extrapolate_mass(radii, masses, &rep.clamped);
  if (rep.rungs.size() < 2) {
    rep.inconclusive = true;
    rep.extrapolation = "none (single rung)";
  } else {
    rep.extrapolation = "richardson_1_over_R";
  }
  if (!(rep.extrapolated_mass > 0.0)) {
    rep.inconclusive = true;
    rep.value = std::numeric_limits<double>::infinity();
  } else {
    rep.value = 1.0 / rep.extrapolated_mass;
  }
  rep.via_potential = last.equilibrium_potential_at_z > 0.0 ? 1.0 / last.equilibrium_potential_at_z
                                                            : std::numeric_limits<double>::infinity();
  rep.relative_gap = std::abs(rep.value - rep.via_potential) / std::max(std::abs(rep.value), 1e-300);
  rep.routes_agree = rep.relative_gap <= cross_check_tol;
  return rep;
}

// ---------------------------------------------------------------------------
// Wiener-type series
// ---------------------------------------------------------------------------

std::string to_string(WienerMode m) {
  switch (m) {
    case WienerMode::irregular_test:
      return "irregular_test";
    case WienerMode::thin_at_infinity_test:
      return "thin_at_infinity_test";
    case WienerMode::ultra_test:
      return "ultra_test";
  }
  return "?";
}

WienerMode wiener_mode_from_string(const std::string& s) {
  if (s == "irregular_test") return WienerMode::irregular_test;
  if (s == "thin_at_infinity_test") return WienerMode::thin_at_infinity_test;
  if (s == "ultra_test") return WienerMode::ultra_test;
  throw std::invalid_argument("unknown wiener mode '" + s + "'");
}

std::string to_string(SeriesVerdict v) {
  switch (v) {
    case SeriesVerdict::series_converging:
      return "series_converging";
    case SeriesVerdict::series_diverging:
      return "series_diverging";
    case SeriesVerdict::inconclusive:
      return "inconclusive";
  }
  return "?";
}

std::string to_string(CapacityMethod m) {
  switch (m) {
    case CapacityMethod::qp:
      return "qp";
    case CapacityMethod::analytic_surrogate:
      return "analytic_surrogate";
    case CapacityMethod::empty:
      return "empty";
  }
  return "?";
}

double thin_body_capacity(double length, double log_radius_max) {
  if (!(length > 0.0)) return 0.0;
  const double denom = 2.0 * (std::log(length) - log_radius_max);
  if (!(denom > 0.0)) throw std::invalid_argument("thin_body_capacity: body is not slender");
  return length / denom;
}

SeriesVerdict series_verdict(const std::vector<double>& terms, double delta, std::vector<double>* tail_ratios,
                             std::string* reason) {
  auto say = [reason](const std::string& s) {
    if (reason) *reason = s;
  };
  if (tail_ratios) tail_ratios->clear();
  const bool all_zero = std::all_of(terms.begin(), terms.end(), [](double t) { return t == 0.0; });
  if (all_zero) {
    say("all terms vanish");
    return SeriesVerdict::series_converging;
  }
  if (terms.size() < 3) {
    say("fewer than three terms");
    return SeriesVerdict::inconclusive;
  }
  // Consecutive ratios; the tail is the last half of the range.
  const std::size_t m = terms.size() - 1;
  const std::size_t tail = (m + 1) / 2;
  std::vector<double> ratios;
  for (std::size_t k = m - tail; k < m; ++k) {
    const double a = terms[k];
    const double b = terms[k + 1];
    if (a == 0.0) {
      ratios.push_back(b == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
    } else {
      ratios.push_back(b / a);
    }
  }
  if (tail_ratios) *tail_ratios = ratios;
  const bool tail_zero =
      std::all_of(terms.begin() + static_cast<long>(m - tail + 1), terms.end(), [](double t) { return t == 0.0; });
  if (tail_zero) {
    say("terms vanish on the tail");
    return SeriesVerdict::series_converging;
  }
  if (std::all_of(ratios.begin(), ratios.end(), [delta](double r) { return r <= 1.0 - delta; })) {
    say("tail ratios all <= 1 - delta");
    return SeriesVerdict::series_converging;
  }
  if (std::all_of(ratios.begin(), ratios.end(), [delta](double r) { return r >= 1.0 + delta; })) {
    say("tail ratios all >= 1 + delta");
    return SeriesVerdict::series_diverging;
  }
  const double first = terms[m - tail];
  const double last = terms[m];
  if (std::all_of(ratios.begin(), ratios.end(), [delta](double r) { return r >= 1.0 - delta; }) && first > 0.0 &&
      last / first >= 1.0 - delta) {
    say("terms do not decay on the tail (ratios >= 1 - delta, last/first >= 1 - delta)");
    return SeriesVerdict::series_diverging;
  }
  say("tail ratios straddle the decision band");
  return SeriesVerdict::inconclusive;
}

namespace {

// Rotation-body profile reachable through truncations, or nullptr.
const Profile* find_profile(const SetDescriptor& d, double* clip_radius) {
  if (const auto* rb = d.as<RotationBody>()) return &rb->profile;
  if (const auto* t = d.as<Truncate>()) {
    *clip_radius = std::min(*clip_radius, t->radius);
    return find_profile(*t->inner, clip_radius);
  }
  return nullptr;
}

struct AxialPiece {
  double a, b;
};

// Axial intervals of a slender rotation body that fall in {lo < |x - y| <= hi}, y on the axis.
std::vector<AxialPiece> slice_pieces(const Profile& p, double y1, double lo, double hi, double clip) {
  std::vector<AxialPiece> out;
  const double a0 = std::max(p.x1_min, -clip);
  const double b0 = std::min(p.x1_max, clip);
  auto add = [&](double a, double b) {
    a = std::max(a, a0);
    b = std::min(b, b0);
    if (b > a) out.push_back({a, b});
  };
  add(y1 + lo, y1 + hi);
  add(y1 - hi, y1 - lo);
  return out;
}

}  // namespace

WienerReport wiener_classify(const SetDescriptor& desc, const Vec& y, double ratio, int j_lo, int j_hi,
                             WienerMode mode, double alpha, int resolution, const SolveSettings& s,
                             double delta) {
  validate(desc);
  const int n = dimension(desc);
  check_alpha(alpha, n);
  if (y.size() != n) throw std::invalid_argument("wiener: y dimension mismatch");
  if (ratio == 1.0) throw std::invalid_argument("ratio must differ from 1");
  if (!(ratio > 0.0) || !std::isfinite(ratio)) throw std::invalid_argument("wiener: ratio must be positive");
  if (mode == WienerMode::thin_at_infinity_test && !(ratio > 1.0))
    throw std::invalid_argument("wiener: thin_at_infinity_test needs ratio > 1");
  if (mode != WienerMode::thin_at_infinity_test && !(ratio < 1.0))
    throw std::invalid_argument("wiener: irregular_test and ultra_test need ratio in (0, 1)");
  if (j_hi < j_lo) throw std::invalid_argument("wiener: empty j range");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("wiener: delta must lie in (0, 1)");

  const AnnulusMode amode = ratio < 1.0 ? AnnulusMode::shrinking : AnnulusMode::expanding;
  double clip = std::numeric_limits<double>::infinity();
  const Profile* profile = n == 3 ? find_profile(desc, &clip) : nullptr;
  const bool on_axis = profile && y.tail(2).norm() <= 1e-14 * std::max(1.0, y.norm());

  WienerReport rep;
  rep.mode = mode;
  rep.ratio = ratio;
  rep.y = y;
  rep.alpha = alpha;
  rep.delta = delta;
  const double dim_gap = n - alpha;
  const double power = mode == WienerMode::ultra_test ? 2.0 : 1.0;
  double sum = 0.0;
  std::vector<double> terms;

  for (int j = j_lo; j <= j_hi; ++j) {
    WienerSlice sl;
    sl.j = j;
    std::tie(sl.r_lo, sl.r_hi) = annulus_radii(ratio, j, amode);
    bool surrogate = false;
    std::vector<AxialPiece> pieces;
    if (on_axis) {
      pieces = slice_pieces(*profile, y[0], sl.r_lo, sl.r_hi, clip);
      for (const auto& pc : pieces)
        if (profile->log_min_on(pc.a, pc.b) < s.discretize.log_radius_floor) surrogate = true;
    }
    if (surrogate) {
      if (!(alpha == 2.0 && n == 3))
        throw std::invalid_argument("wiener: slice " + std::to_string(j) +
                                    " is below the representable radius and the thin-body surrogate "
                                    "only covers alpha = 2, n = 3");
      sl.method = CapacityMethod::analytic_surrogate;
      sl.log_radius_max = -std::numeric_limits<double>::infinity();
      for (const auto& pc : pieces) {
        const double lr = profile->log_max_on(pc.a, pc.b);
        sl.capacity += thin_body_capacity(pc.b - pc.a, lr);
        sl.length += pc.b - pc.a;
        sl.log_radius_max = std::max(sl.log_radius_max, lr);
      }
    } else {
      const SetDescriptor band = make_band(desc, y, sl.r_lo, sl.r_hi);
      auto cloud = std::make_shared<const PointCloud>(discretize(band, resolution, s.discretize));
      sl.nodes = cloud->size();
      if (cloud->empty()) {
        sl.method = CapacityMethod::empty;
      } else {
        const EquilibriumResult eq = equilibrium_measure(cloud, alpha, s);
        sl.capacity = eq.capacity;
        sl.kkt_residual = eq.kkt_residual;
        sl.converged = eq.converged;
      }
    }
    sl.term = sl.capacity / std::pow(ratio, power * j * dim_gap);
    sum += sl.term;
    rep.partial_sums.push_back(sum);
    terms.push_back(sl.term);
    rep.slices.push_back(sl);
  }
  rep.verdict = series_verdict(terms, delta, &rep.tail_ratios, &rep.reason);
  return rep;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

nlohmann::json trace_json(const std::vector<TraceRow>& trace) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& r : trace) a.push_back({r.iteration, num(r.objective), num(r.kkt_residual)});
  return a;
}

nlohmann::json to_json(const EquilibriumResult& r) {
  nlohmann::json j = {{"capacity", r.capacity},
                      {"mass", r.gamma.total_mass()},
                      {"energy", r.energy},
                      {"kkt_residual", r.kkt_residual},
                      {"converged", r.converged},
                      {"iterations", r.iterations},
                      {"masses", as_std(r.gamma.masses)},
                      {"potential_on_nodes", as_std(r.potential_on_nodes)}};
  if (!r.trace.empty()) j["trace"] = trace_json(r.trace);
  return j;
}

nlohmann::json to_json(const BalayageResult& r) {
  nlohmann::json j = {{"source", r.source},
                      {"source_mass", r.source_mass},
                      {"swept_mass", r.swept.total_mass()},
                      {"mass_ratio", r.mass_ratio},
                      {"potential_match_residual", r.potential_match_residual},
                      {"support_match_residual", r.support_match_residual},
                      {"kkt_residual", r.kkt_residual},
                      {"converged", r.converged},
                      {"iterations", r.iterations},
                      {"masses", as_std(r.swept.masses)}};
  if (!r.trace.empty()) j["trace"] = trace_json(r.trace);
  return j;
}

nlohmann::json to_json(const HValueReport& r) {
  nlohmann::json rungs = nlohmann::json::array();
  for (const auto& g : r.rungs)
    rungs.push_back({{"radius", g.radius},
                     {"nodes", g.nodes},
                     {"harmonic_mass", g.harmonic_mass},
                     {"equilibrium_potential_at_z", g.equilibrium_potential_at_z},
                     {"capacity", g.capacity},
                     {"converged", g.converged}});
  return {{"value", num(r.value)},
          {"via_potential", num(r.via_potential)},
          {"extrapolated_mass", r.extrapolated_mass},
          {"extrapolation", r.extrapolation},
          {"clamped", r.clamped},
          {"inconclusive", r.inconclusive},
          {"routes_agree", r.routes_agree},
          {"relative_gap", num(r.relative_gap)},
          {"rungs", rungs}};
}

nlohmann::json to_json(const WienerReport& r) {
  nlohmann::json sl = nlohmann::json::array();
  for (const auto& s : r.slices) {
    nlohmann::json e = {{"j", s.j},
                        {"r_lo", s.r_lo},
                        {"r_hi", s.r_hi},
                        {"capacity", s.capacity},
                        {"term", s.term},
                        {"method", to_string(s.method)},
                        {"nodes", s.nodes}};
    if (s.method == CapacityMethod::qp) {
      e["kkt_residual"] = s.kkt_residual;
      e["converged"] = s.converged;
    }
    if (s.method == CapacityMethod::analytic_surrogate) {
      e["length"] = s.length;
      e["log_radius_max"] = s.log_radius_max;
    }
    sl.push_back(e);
  }
  return {{"mode", to_string(r.mode)},
          {"ratio", r.ratio},
          {"y", as_std(r.y)},
          {"alpha", r.alpha},
          {"delta", r.delta},
          {"slices", sl},
          {"partial_sums", r.partial_sums},
          {"tail_ratios", r.tail_ratios},
          {"verdict", to_string(r.verdict)},
          {"reason", r.reason}};
}

}  // namespace rieszwb
