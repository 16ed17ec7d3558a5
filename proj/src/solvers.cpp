#include "rieszwb/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace rieszwb {

Eigen::VectorXd project_simplex(const Eigen::VectorXd& v) {
  const Eigen::Index n = v.size();
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<>());
  double cum = 0.0;
  double theta = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    cum += u[static_cast<std::size_t>(k)];
    const double t = (cum - 1.0) / static_cast<double>(k + 1);
    if (u[static_cast<std::size_t>(k)] - t > 0.0) theta = t;
  }
  return (v.array() - theta).cwiseMax(0.0);
}

std::vector<Eigen::Index> support_of(const Eigen::VectorXd& m, double mass_floor) {
  const double thr = mass_floor * m.sum();
  std::vector<Eigen::Index> s;
  for (Eigen::Index i = 0; i < m.size(); ++i)
    if (m[i] > thr) s.push_back(i);
  return s;
}

namespace {

double kkt_from_gradient(const Eigen::VectorXd& g, const Eigen::VectorXd& m, Constraint c, double nu,
                         double mass_floor) {
  const double thr = mass_floor * m.sum();
  double r = 0.0;
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    const double gi = g[i] - nu;
    r = std::max(r, -gi);
    if (m[i] > thr) r = std::max(r, std::abs(gi));
  }
  if (c == Constraint::simplex) r = std::max(r, std::abs(m.sum() - 1.0));
  return r;
}

// Multiplier estimate for a simplex iterate: mass-weighted mean of the gradient on the support.
double simplex_multiplier(const Eigen::VectorXd& g, const Eigen::VectorXd& m) {
  const double s = m.sum();
  return s > 0.0 ? g.dot(m) / s : g.minCoeff();
}

struct PolishResult {
  bool ok = false;
  Eigen::VectorXd m;
  double nu = 0.0;
};

// Block principal pivoting on the free set, with the usual fallback to single
// exchanges when the infeasibility count stops decreasing.
PolishResult polish(const Eigen::MatrixXd& K, const Eigen::VectorXd& b, Constraint c,
                    std::vector<char> free_set, double tol) {
  const Eigen::Index N = b.size();
  PolishResult res;
  Eigen::Index best_infeasible = N + 1;
  int backups = 0;
  const int max_rounds = 60;
  for (int round = 0; round < max_rounds; ++round) {
    std::vector<Eigen::Index> F;
    for (Eigen::Index i = 0; i < N; ++i)
      if (free_set[static_cast<std::size_t>(i)]) F.push_back(i);
    if (F.empty()) {
      if (c == Constraint::simplex) {
        // Start from the node with the smallest single-node objective.
        Eigen::Index best = 0;
        for (Eigen::Index i = 1; i < N; ++i)
          if (K(i, i) - 2.0 * b[i] < K(best, best) - 2.0 * b[best]) best = i;
        free_set[static_cast<std::size_t>(best)] = 1;
        continue;
      }
    }
    const auto nf = static_cast<Eigen::Index>(F.size());
    Eigen::MatrixXd KF(nf, nf);
    Eigen::VectorXd bF(nf);
    for (Eigen::Index a = 0; a < nf; ++a) {
      bF[a] = b[F[static_cast<std::size_t>(a)]];
      for (Eigen::Index q = 0; q < nf; ++q) KF(a, q) = K(F[static_cast<std::size_t>(a)], F[static_cast<std::size_t>(q)]);
    }
    Eigen::VectorXd xF;
    double nu = 0.0;
    if (nf > 0) {
      Eigen::LLT<Eigen::MatrixXd> llt(KF);
      if (llt.info() != Eigen::Success) return res;
      const Eigen::VectorXd y = llt.solve(bF);
      if (c == Constraint::simplex) {
        const Eigen::VectorXd w = llt.solve(Eigen::VectorXd::Ones(nf));
        nu = (1.0 - y.sum()) / w.sum();
        xF = y + nu * w;
      } else {
        xF = y;
      }
    }
    Eigen::VectorXd m = Eigen::VectorXd::Zero(N);
    for (Eigen::Index a = 0; a < nf; ++a) m[F[static_cast<std::size_t>(a)]] = xF[a];
    const Eigen::VectorXd g = K * m - b;
    std::vector<Eigen::Index> bad;
    const double scale = std::max(1.0, b.cwiseAbs().maxCoeff());
    const double slack = std::min(1e-13 * scale, 0.01 * tol);
    for (Eigen::Index i = 0; i < N; ++i) {
      if (free_set[static_cast<std::size_t>(i)]) {
        if (m[i] < 0.0) bad.push_back(i);
      } else if (g[i] - nu < -slack) {
        bad.push_back(i);
      }
    }
    if (bad.empty()) {
      res.ok = true;
      res.m = m.cwiseMax(0.0);
      res.nu = nu;
      return res;
    }
    const auto nb = static_cast<Eigen::Index>(bad.size());
    if (nb < best_infeasible) {
      best_infeasible = nb;
      backups = 0;
      for (auto i : bad) free_set[static_cast<std::size_t>(i)] ^= 1;
    } else if (backups < 3) {
      ++backups;
      for (auto i : bad) free_set[static_cast<std::size_t>(i)] ^= 1;
    } else {
      // Single exchange of the most violated index.
      Eigen::Index worst = bad.front();
      double wv = 0.0;
      for (auto i : bad) {
        const double v = free_set[static_cast<std::size_t>(i)] ? -m[i] : -(g[i] - nu);
        if (v > wv) {
          wv = v;
          worst = i;
        }
      }
      free_set[static_cast<std::size_t>(worst)] ^= 1;
    }
  }
  return res;
}

void check_problem(const QpProblem& p) {
  if (!p.ctx) throw SolverError("qp: missing kernel context");
  if (p.b.size() != p.ctx->size()) throw SolverError("qp: linear term length does not match node count");
  if (!p.b.allFinite()) throw SolverError("qp: linear term contains NaN or infinite values");
  if (!p.ctx->matrix.allFinite()) throw SolverError("qp: kernel matrix contains NaN or infinite values");
  if (!(p.tol > 0.0) || !std::isfinite(p.tol)) throw SolverError("qp: tol must be positive");
  if (p.max_iter < 1) throw SolverError("qp: max_iter must be positive");
}

QpSolution run(const QpProblem& p) {
  check_problem(p);
  const Eigen::MatrixXd& K = p.ctx->matrix;
  const Eigen::VectorXd& b = p.b;
  const Eigen::Index N = b.size();
  const Constraint c = p.constraint;
  QpSolution sol;
  if (N == 0) {
    if (c == Constraint::simplex) throw SolverError("qp: simplex problem on an empty node set");
    sol.masses = DiscreteMeasure(p.ctx->cloud, Eigen::VectorXd());
    sol.converged = true;
    return sol;
  }

  auto project = [c](const Eigen::VectorXd& v) -> Eigen::VectorXd {
    return c == Constraint::cone ? Eigen::VectorXd(v.cwiseMax(0.0)) : project_simplex(v);
  };
  auto objective = [&b](const Eigen::VectorXd& m, const Eigen::VectorXd& Km) { return m.dot(Km) - 2.0 * b.dot(m); };
  auto residual = [&](const Eigen::VectorXd& m, const Eigen::VectorXd& Km) {
    const Eigen::VectorXd g = Km - b;
    const double nu = c == Constraint::simplex ? simplex_multiplier(g, m) : 0.0;
    return kkt_from_gradient(g, m, c, nu, p.mass_floor);
  };

  // Gradient of the objective is 2(Km - b); its Lipschitz constant is bounded by
  // twice the largest absolute row sum of K.
  const double L = K.cwiseAbs().rowwise().sum().maxCoeff();
  const double step = 1.0 / L;

  Eigen::VectorXd x = c == Constraint::cone ? Eigen::VectorXd::Zero(N) : Eigen::VectorXd::Constant(N, 1.0 / N);
  if (c == Constraint::cone) {
    // Scaled diagonal guess is feasible and usually close in magnitude.
    x = (b.array() / K.diagonal().array()).cwiseMax(0.0) / std::max(1.0, static_cast<double>(N) / 50.0);
  }
  Eigen::VectorXd Kx = K * x;
  double fx = objective(x, Kx);
  Eigen::VectorXd x_prev = x, Kx_prev = Kx;
  Eigen::VectorXd y = x, Ky = Kx;
  double t = 1.0;
  long it = 0;
  const double scale = std::max(1.0, b.cwiseAbs().maxCoeff());
  long next_polish = 50;
  long polish_gap = 200;

  auto finish = [&](const Eigen::VectorXd& m, double nu_hint, bool from_polish) {
    const Eigen::VectorXd Km = K * m;
    const Eigen::VectorXd g = Km - b;
    double nu = 0.0;
    if (c == Constraint::simplex) nu = from_polish ? nu_hint : simplex_multiplier(g, m);
    sol.masses = DiscreteMeasure(p.ctx->cloud, m);
    sol.objective = objective(m, Km);
    sol.multiplier = nu;
    sol.kkt_residual = kkt_from_gradient(g, m, c, nu, p.mass_floor);
    sol.iterations = it;
    sol.converged = sol.kkt_residual <= p.tol;
    sol.support = support_of(m, p.mass_floor);
    if (p.record_trace) sol.trace.push_back({it, sol.objective, sol.kkt_residual});
  };

  if (p.record_trace) sol.trace.push_back({0, fx, residual(x, Kx)});

  while (it < p.max_iter) {
    ++it;
    const Eigen::VectorXd z = project(y - step * (Ky - b));
    const Eigen::VectorXd Kz = K * z;
    const double fz = objective(z, Kz);
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    x_prev = x;
    Kx_prev = Kx;
    if (fz <= fx) {
      x = z;
      Kx = Kz;
      fx = fz;
      y = x + ((t - 1.0) / t_next) * (x - x_prev);
      Ky = Kx + ((t - 1.0) / t_next) * (Kx - Kx_prev);
      t = t_next;
    } else {
      // Monotone step: keep x, restart momentum.
      y = x + (t / t_next) * (z - x);
      Ky = Kx + (t / t_next) * (Kz - Kx);
      t = 1.0;
    }
    const double r = residual(x, Kx);
    if (p.record_trace) sol.trace.push_back({it, fx, r});
    if (r <= p.tol) {
      finish(x, 0.0, false);
      return sol;
    }
    if (it >= next_polish || r < 1e-3 * scale) {
      const Eigen::VectorXd g = Kx - b;
      const double nu = c == Constraint::simplex ? simplex_multiplier(g, x) : 0.0;
      std::vector<char> fs(static_cast<std::size_t>(N), 0);
      const double thr = 1e-9 * std::max(x.sum(), 1e-300);
      for (Eigen::Index i = 0; i < N; ++i)
        fs[static_cast<std::size_t>(i)] = (x[i] > thr || g[i] - nu < 0.0) ? 1 : 0;
      PolishResult pr = polish(K, b, c, fs, p.tol);
      if (pr.ok) {
        const Eigen::VectorXd Km = K * pr.m;
        const double fm = objective(pr.m, Km);
        if (fm <= fx + 1e-12 * std::max(1.0, std::abs(fx))) {
          finish(pr.m, pr.nu, true);
          if (sol.converged) return sol;
        }
      }
      next_polish = it + polish_gap;
      polish_gap = std::min<long>(polish_gap * 2, 5000);
    }
  }
  finish(x, 0.0, false);
  return sol;
}

}  // namespace

double kkt_residual(const Eigen::MatrixXd& K, const Eigen::VectorXd& b, const Eigen::VectorXd& m, Constraint c,
                    double multiplier, double mass_floor) {
  const Eigen::VectorXd g = K * m - b;
  return kkt_from_gradient(g, m, c, c == Constraint::simplex ? multiplier : 0.0, mass_floor);
}

QpSolution minimize_cone(const QpProblem& problem) {
  if (problem.constraint != Constraint::cone) throw SolverError("minimize_cone: constraint must be cone");
  return run(problem);
}

QpSolution minimize_simplex(const QpProblem& problem) {
  if (problem.constraint != Constraint::simplex) throw SolverError("minimize_simplex: constraint must be simplex");
  return run(problem);
}

QpSolution solve(const QpProblem& problem) { return run(problem); }

void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& trace) {
  os << "iteration,objective,kkt_residual\n";
  os.precision(17);
  for (const auto& r : trace) os << r.iteration << ',' << r.objective << ',' << r.kkt_residual << '\n';
}

}  // namespace rieszwb
