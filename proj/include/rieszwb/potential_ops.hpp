#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "json.hpp"
#include "rieszwb/geometry.hpp"
#include "rieszwb/kernel.hpp"
#include "rieszwb/solvers.hpp"

namespace rieszwb {

struct SolveSettings {
  double tol = 1e-8;
  long max_iter = 200000;
  bool record_trace = false;
  double mass_floor = 1e-12;
  KernelOptions kernel;
  DiscretizeOptions discretize;
};

nlohmann::json settings_json(const SolveSettings& s);

// Point charges: one column of `points` per charge.
struct PointSource {
  Eigen::MatrixXd points;
  Eigen::VectorXd masses;
};

struct EquilibriumResult {
  DiscreteMeasure gamma;
  double capacity = 0.0;
  double energy = 0.0;
  Eigen::VectorXd potential_on_nodes;
  double kkt_residual = 0.0;
  bool converged = true;
  long iterations = 0;
  std::vector<TraceRow> trace;
};

EquilibriumResult equilibrium_measure(const KernelContext& ctx, const SolveSettings& s = {});
EquilibriumResult equilibrium_measure(CloudPtr cloud, double alpha, const SolveSettings& s = {});
double capacity(CloudPtr cloud, double alpha, const SolveSettings& s = {});

struct BalayageResult {
  DiscreteMeasure swept;
  nlohmann::json source;
  double source_mass = 0.0;
  double mass_ratio = 0.0;
  // max over target nodes of |U^swept - U^source|
  double potential_match_residual = 0.0;
  // same maximum restricted to the support of the swept measure
  double support_match_residual = 0.0;
  double kkt_residual = 0.0;
  bool converged = true;
  long iterations = 0;
  std::vector<TraceRow> trace;
};

// Potential of the source at the target nodes.
Eigen::VectorXd source_potential(const KernelContext& target, const PointSource& src);
Eigen::VectorXd source_potential(const KernelContext& target, const DiscreteMeasure& src);

BalayageResult balayage(const KernelContext& target, const PointSource& src, const SolveSettings& s = {});
BalayageResult balayage(const KernelContext& target, const DiscreteMeasure& src, const SolveSettings& s = {});
BalayageResult harmonic_measure(const Vec& z, const KernelContext& target, const SolveSettings& s = {});

// Potential of a node measure at arbitrary points (points may not coincide with nodes
// that carry mass).
Eigen::VectorXd measure_potential(const KernelContext& ctx, const Eigen::VectorXd& masses,
                                  const Eigen::MatrixXd& points);

// Deterministic Halton points in the ball of radius `radius` about `center`.
Eigen::MatrixXd probe_points(const Vec& center, double radius, int count);

struct HValueRung {
  double radius = 0.0;
  Eigen::Index nodes = 0;
  double harmonic_mass = 0.0;
  double equilibrium_potential_at_z = 0.0;
  double capacity = 0.0;
  bool converged = true;
};

struct HValueReport {
  std::vector<HValueRung> rungs;
  double value = 0.0;             // route (i): 1 / extrapolated harmonic mass
  double via_potential = 0.0;     // route (ii): 1 / U^gamma(z) on the largest rung
  double extrapolated_mass = 0.0;
  bool clamped = false;
  bool inconclusive = false;
  bool routes_agree = false;
  double relative_gap = 0.0;
  std::string extrapolation;
};

// H_z = 1 / mass of the harmonic measure, computed over truncations A ∩ B(0, R).
HValueReport h_value(const Vec& z, const SetDescriptor& desc, double alpha, const std::vector<double>& ladder,
                     int resolution, const SolveSettings& s = {}, double cross_check_tol = 0.02);

// Limit of harmonic masses over a truncation ladder: Richardson extrapolation on 1/R
// through the last two rungs, clamped to [last mass, 1]; a single rung is returned as is.
double extrapolate_mass(const std::vector<double>& radii, const std::vector<double>& masses, bool* clamped);

// Truncation used on a ladder rung; bounded sets inside B(0, R) are returned unchanged.
SetDescriptor truncate_for_rung(const SetDescriptor& desc, double radius);

enum class WienerMode { irregular_test, thin_at_infinity_test, ultra_test };
enum class SeriesVerdict { series_converging, series_diverging, inconclusive };
enum class CapacityMethod { qp, analytic_surrogate, empty };

std::string to_string(WienerMode m);
WienerMode wiener_mode_from_string(const std::string& s);
std::string to_string(SeriesVerdict v);
std::string to_string(CapacityMethod m);

struct WienerSlice {
  int j = 0;
  double r_lo = 0.0;
  double r_hi = 0.0;
  double capacity = 0.0;
  double term = 0.0;
  CapacityMethod method = CapacityMethod::qp;
  Eigen::Index nodes = 0;
  double kkt_residual = 0.0;
  bool converged = true;
  // Filled for surrogate slices.
  double length = 0.0;
  double log_radius_max = 0.0;
};

struct WienerReport {
  WienerMode mode = WienerMode::irregular_test;
  double ratio = 0.5;
  Vec y;
  double alpha = 2.0;
  double delta = 0.05;
  std::vector<WienerSlice> slices;
  std::vector<double> partial_sums;
  std::vector<double> tail_ratios;
  SeriesVerdict verdict = SeriesVerdict::inconclusive;
  std::string reason;
};

// Newtonian capacity asymptotic of a thin body of length L and maximal radius rho:
// L / (2 (ln L - ln rho)), with the radius given by its logarithm.
double thin_body_capacity(double length, double log_radius_max);

// Tail ratio test on the series terms.
SeriesVerdict series_verdict(const std::vector<double>& terms, double delta, std::vector<double>* tail_ratios,
                             std::string* reason);

WienerReport wiener_classify(const SetDescriptor& desc, const Vec& y, double ratio, int j_lo, int j_hi,
                             WienerMode mode, double alpha, int resolution, const SolveSettings& s = {},
                             double delta = 0.05);

nlohmann::json to_json(const EquilibriumResult& r);
nlohmann::json to_json(const BalayageResult& r);
nlohmann::json to_json(const HValueReport& r);
nlohmann::json to_json(const WienerReport& r);
nlohmann::json trace_json(const std::vector<TraceRow>& trace);

}  // namespace rieszwb
