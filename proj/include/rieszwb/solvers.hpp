#pragma once

#include <Eigen/Dense>

#include <ostream>
#include <stdexcept>
#include <vector>

#include "rieszwb/kernel.hpp"

namespace rieszwb {

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Constraint { cone, simplex };

// minimize m^T K m - 2 b^T m over m >= 0 (cone) or additionally sum m = 1 (simplex).
struct QpProblem {
  const KernelContext* ctx = nullptr;
  Eigen::VectorXd b;
  Constraint constraint = Constraint::cone;
  double tol = 1e-8;
  long max_iter = 200000;
  bool record_trace = false;
  // Support detection threshold relative to total mass.
  double mass_floor = 1e-12;
};

struct TraceRow {
  long iteration;
  double objective;
  double kkt_residual;
};

struct QpSolution {
  DiscreteMeasure masses;
  double objective = 0.0;
  double kkt_residual = 0.0;
  double multiplier = 0.0;
  long iterations = 0;
  bool converged = false;
  std::vector<Eigen::Index> support;
  std::vector<TraceRow> trace;
};

// KKT residual of m for the given problem data:
//   cone:    max( max_i (b - Km)_i^+ , max_{m_i > floor} |(Km - b)_i| )
//   simplex: the same with Km - b shifted by the multiplier, plus |sum m - 1|.
double kkt_residual(const Eigen::MatrixXd& K, const Eigen::VectorXd& b, const Eigen::VectorXd& m,
                    Constraint constraint, double multiplier, double mass_floor);
std::vector<Eigen::Index> support_of(const Eigen::VectorXd& m, double mass_floor);

QpSolution minimize_cone(const QpProblem& problem);
QpSolution minimize_simplex(const QpProblem& problem);
QpSolution solve(const QpProblem& problem);

void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& trace);

// Euclidean projection onto the probability simplex.
Eigen::VectorXd project_simplex(const Eigen::VectorXd& v);

}  // namespace rieszwb
