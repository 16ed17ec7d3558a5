#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

#include "json.hpp"
#include "rieszwb/geometry.hpp"

namespace rieszwb {

class KernelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DiagonalScheme {
  // Diagonal chosen so lattice sums reproduce the continuous potential
  // (finite part of the Epstein zeta function of the local lattice).
  lattice_consistent,
  // Diagonal equal to the mean self-interaction of a uniform cell.
  cell_mean,
};

std::string to_string(DiagonalScheme s);
DiagonalScheme diagonal_scheme_from_string(const std::string& s);

struct KernelOptions {
  DiagonalScheme scheme = DiagonalScheme::lattice_consistent;
  Eigen::Index node_cap = 20000;
  int threads = 1;
};

struct DiagonalRule {
  DiagonalScheme scheme = DiagonalScheme::lattice_consistent;
  nlohmann::json parameters;
};

struct KernelContext {
  double alpha = 2.0;
  int n = 3;
  CloudPtr cloud;
  Eigen::MatrixXd matrix;
  DiagonalRule diagonal_rule;
  int threads = 1;

  double exponent() const { return alpha - n; }
  Eigen::Index size() const { return matrix.rows(); }
};

// Riesz kernel |x - y|^(alpha - n) for distinct points.
double riesz(double alpha, int n, const Vec& x, const Vec& y);
// Throws KernelError unless 0 < alpha <= 2 and alpha < n.
void check_alpha(double alpha, int n);
// Diagonal entry for a single cell.
double self_term(const CellShape& cell, double alpha, int n, DiagonalScheme scheme);

// Parameters of the diagonal rule, echoed into reports.
nlohmann::json describe_diagonal_rule(DiagonalScheme scheme, double alpha, int n);

KernelContext assemble_kernel(CloudPtr cloud, double alpha, const KernelOptions& opt = {});

// U(p) = sum_i kappa(p, x_i) m_i; a point that coincides with node i uses K[i][i].
Eigen::VectorXd potential_at(const KernelContext& ctx, const DiscreteMeasure& mu,
                             const Eigen::MatrixXd& points);
// Potential of point charges (columns of `sources`) at evaluation points; the
// two sets must be disjoint.
Eigen::VectorXd point_potential(double alpha, const Eigen::MatrixXd& sources,
                                const Eigen::VectorXd& masses, const Eigen::MatrixXd& points);
// K * m for the context's matrix (deterministic for a fixed thread count).
Eigen::VectorXd apply(const KernelContext& ctx, const Eigen::VectorXd& m);

double energy(const KernelContext& ctx, const DiscreteMeasure& mu);
double mutual_energy(const KernelContext& ctx, const DiscreteMeasure& mu, const DiscreteMeasure& nu);
// Signed coefficient vectors on the context's nodes.
double energy(const KernelContext& ctx, const Eigen::VectorXd& m);
double mutual_energy(const KernelContext& ctx, const Eigen::VectorXd& a, const Eigen::VectorXd& b);

}  // namespace rieszwb
