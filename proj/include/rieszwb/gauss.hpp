#pragma once

#include <Eigen/Dense>

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "rieszwb/potential_ops.hpp"

namespace rieszwb {

// External field f(y) = -q |z - y|^(alpha - n) generated by an attractive point mass q at z.
struct FieldSpec {
  Vec z;
  double q = 1.0;
  double alpha = 2.0;
};

struct WeightedSolveReport {
  DiscreteMeasure lambda;
  double q = 0.0;
  double value = 0.0;       // I(lambda) - 2 q U^lambda(z)
  double constant = 0.0;    // I(lambda) - q U^lambda(z), recomputed from lambda
  double multiplier = 0.0;  // solver multiplier
  double kkt_residual = 0.0;
  bool converged = true;
  long iterations = 0;
  std::vector<Eigen::Index> support_indices;
  double support_radius = 0.0;    // max |x_i| over the support
  double centroid_radius = 0.0;   // mass-weighted mean of |x_i|
  std::vector<TraceRow> trace;
};

void check_field(const FieldSpec& f, const PointCloud& cloud);

WeightedSolveReport solve_weighted(const KernelContext& ctx, const FieldSpec& field, const SolveSettings& s = {});

struct ConstantCheck {
  double measured = 0.0;
  std::optional<double> formula;  // (H - q) / (H cap) when q < H
  double relative_gap = 0.0;
  std::string note;
};

ConstantCheck weighted_constant(const WeightedSolveReport& report, double h_z, double capacity);

struct FormulaCheck {
  std::string branch;  // "q<H" or "q=H"
  double coefficient = 0.0;  // multiple of the equilibrium measure in the q < H branch
  double energy_residual = 0.0;     // ||lambda - rhs||_K
  double relative_energy_residual = 0.0;  // divided by ||lambda||_K
  double tv_residual = 0.0;          // sum |lambda_i - rhs_i|
  double h_z = 0.0;
  double capacity = 0.0;
};

// Compares lambda with q eps_z^A + c gamma_A (q < H) or H eps_z^A (q = H), where H and
// the constant c come from the harmonic and equilibrium measures on the same cloud.
// `h_tol` decides when q counts as equal to H (relative).
FormulaCheck check_solution_formula(const KernelContext& ctx, const FieldSpec& field,
                                    const WeightedSolveReport& report, const BalayageResult& harmonic,
                                    const EquilibriumResult& equilibrium, double h_tol = 1e-6);

enum class ExistenceVerdictKind { solvable, mass_escape, inconclusive };
std::string to_string(ExistenceVerdictKind v);

struct LadderRecord {
  double radius = 0.0;
  Eigen::Index nodes = 0;
  double value = 0.0;
  double constant = 0.0;
  double centroid_radius = 0.0;
  double support_radius = 0.0;
  double kkt_residual = 0.0;
  bool converged = true;
};

struct ExistenceVerdict {
  ExistenceVerdictKind verdict = ExistenceVerdictKind::inconclusive;
  double q = 0.0;
  double h_estimate = 0.0;
  std::vector<LadderRecord> ladder;
  double value_gap = 0.0;           // |w_last - w_prev| / max(1, |w_last|)
  double support_change = 0.0;      // |s_last - s_prev| / s_prev
  double centroid_slope = 0.0;
  double centroid_r2 = 0.0;
  bool values_decreasing = false;
  std::string reason;
};

struct ExistenceThresholds {
  double cauchy_band = 0.01;
  double support_band = 0.10;
  double min_r2 = 0.9;
};

ExistenceVerdict existence_probe(const SetDescriptor& desc, const FieldSpec& field, const std::vector<double>& ladder,
                                 int resolution, const SolveSettings& s = {}, const ExistenceThresholds& th = {});

struct SupportRow {
  double q = 0.0;
  std::vector<LadderRecord> ladder;
  double support_radius = 0.0;  // at the largest rung
  bool stable = false;          // last two rungs within the support band
  bool grows = false;           // strictly increasing across the ladder
  bool inconclusive = false;
};

struct SupportScan {
  std::vector<SupportRow> rows;
  double h_estimate = 0.0;
};

SupportScan support_scan(const SetDescriptor& desc, const Vec& z, double alpha, const std::vector<double>& q_grid,
                         const std::vector<double>& ladder, int resolution, const SolveSettings& s = {},
                         double support_band = 0.10);

// Upper bound on the bounded-Lipschitz distance of two node measures of equal total mass,
// from a greedy transport plan with cost min(|x - y|, 2).
double bl_distance(const PointCloud& cloud, const Eigen::VectorXd& a, const Eigen::VectorXd& b);

enum class ContinuityMode { q_equals_h, fixed_q };

struct ContinuityStep {
  Vec z;
  double q = 0.0;
  double step = 0.0;        // |z_k - z_{k-1}| (0 for the first point)
  double distance = 0.0;    // d_BL(lambda_k, lambda_{k-1})
  double value = 0.0;
  double constant = 0.0;
  double support_radius = 0.0;
  double kkt_residual = 0.0;
  bool converged = true;
  Eigen::VectorXd masses;
};

struct ContinuityScan {
  CloudPtr cloud;
  std::vector<ContinuityStep> steps;
};

// Solves along a path of exterior points on one discretization of `desc`; q is used in
// fixed_q mode only (0 < q <= 1), otherwise q = H_z at every point.
ContinuityScan continuity_scan(const SetDescriptor& desc, const std::vector<Vec>& path, ContinuityMode mode,
                               double q, double alpha, int resolution, const SolveSettings& s = {});

nlohmann::json to_json(const WeightedSolveReport& r, bool with_masses = true);
nlohmann::json to_json(const ConstantCheck& c);
nlohmann::json to_json(const FormulaCheck& c);
nlohmann::json to_json(const ExistenceVerdict& v);
nlohmann::json to_json(const SupportScan& s);
nlohmann::json to_json(const ContinuityScan& s);

// CSV columns: q, value, constant, support_radius, kkt_residual, converged (one row per q or step).
void write_support_csv(std::ostream& os, const SupportScan& s);
void write_continuity_csv(std::ostream& os, const ContinuityScan& s);
void write_existence_csv(std::ostream& os, const ExistenceVerdict& v);

}  // namespace rieszwb
