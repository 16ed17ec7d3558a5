#include "rieszwb/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <thread>
#include <vector>

#include "rieszwb/self_interaction.hpp"

namespace rieszwb {

std::string to_string(DiagonalScheme s) {
  return s == DiagonalScheme::lattice_consistent ? "lattice_consistent" : "cell_mean";
}

DiagonalScheme diagonal_scheme_from_string(const std::string& s) {
  if (s == "lattice_consistent") return DiagonalScheme::lattice_consistent;
  if (s == "cell_mean") return DiagonalScheme::cell_mean;
  throw KernelError("unknown diagonal scheme '" + s + "'");
}

void check_alpha(double alpha, int n) {
  if (!(alpha > 0.0) || !(alpha <= 2.0) || !(alpha < n))
    throw KernelError("alpha must satisfy 0 < alpha <= 2 and alpha < n");
}

double riesz(double alpha, int n, const Vec& x, const Vec& y) {
  const double r = (x - y).norm();
  return std::pow(r, alpha - n);
}

namespace {

[[noreturn]] void polar(int d, double alpha) {
  throw KernelError("cells of dimension " + std::to_string(d) + " carry no measure of finite energy for alpha = " +
                    std::to_string(alpha) + " (the set has zero capacity)");
}

// Thin sheet seen as a slab when the sheet itself would have infinite energy.
double slab_self_term(const CellShape& c, double p) {
  if (c.dim == 2) return cylinder_mean_self_energy(std::sqrt(c.measure / std::acos(-1.0)), c.thickness, p);
  return rectangle_mean_self_energy(c.measure, c.thickness, p);
}

double pair_power(double r2, double p) {
  return p == -1.0 ? 1.0 / std::sqrt(r2) : std::pow(r2, 0.5 * p);
}

template <class F>
void parallel_columns(Eigen::Index N, int threads, F body) {
  const int T = std::max(1, std::min<int>(threads, static_cast<int>(std::max<Eigen::Index>(1, N / 64))));
  if (T == 1) {
    body(0, N);
    return;
  }
  std::vector<std::thread> pool;
  const Eigen::Index chunk = (N + T - 1) / T;
  for (int t = 0; t < T; ++t) {
    const Eigen::Index lo = t * chunk;
    const Eigen::Index hi = std::min(N, lo + chunk);
    if (lo < hi) pool.emplace_back([&body, lo, hi] { body(lo, hi); });
  }
  for (auto& th : pool) th.join();
}

}  // namespace

nlohmann::json describe_diagonal_rule(DiagonalScheme scheme, double alpha, int n) {
  const double p = alpha - n;
  nlohmann::json prm;
  prm["scheme"] = to_string(scheme);
  prm["kernel_exponent"] = p;
  if (scheme == DiagonalScheme::lattice_consistent) {
    prm["description"] =
        "K[i][i] = -Z_d(-p/2) * w^(p/d) for lattice and sheet cells of dimension d and measure w, "
        "Z_d the Epstein zeta function of the unit cubic lattice; tube cells use the mean "
        "self-interaction of a solid cylinder";
    nlohmann::json consts = nlohmann::json::object();
    for (int d = 1; d <= 3; ++d)
      if (p > -d && d <= n) consts["Z_" + std::to_string(d)] = epstein_zeta_cubic(d, -0.5 * p);
    prm["lattice_constants"] = consts;
  } else {
    prm["description"] =
        "K[i][i] = mean pairwise kernel over a uniform cell (ball of the cell's intrinsic "
        "dimension with the cell's equal-measure radius; solid cylinder for tube cells)";
  }
  prm["thin_sheet_fallback"] =
      "sheets whose own dimension carries no finite energy use the mean self-interaction of the "
      "slab they stand for";
  return prm;
}

double self_term(const CellShape& c, double alpha, int n, DiagonalScheme scheme) {
  const double p = alpha - n;
  switch (c.kind) {
    case CellKind::lattice:
      if (!(p > -c.dim)) polar(c.dim, alpha);
      if (scheme == DiagonalScheme::lattice_consistent) return lattice_self_term(c.dim, p, c.measure);
      return ball_mean_self_energy(c.dim, c.dim == 1 ? 0.5 * c.measure
                                                     : (c.dim == 2 ? std::sqrt(c.measure / std::acos(-1.0))
                                                                   : std::cbrt(3.0 * c.measure / (4.0 * std::acos(-1.0)))),
                                   p);
    case CellKind::skin:
      if (!(p > -c.dim)) return slab_self_term(c, p);
      if (scheme == DiagonalScheme::lattice_consistent) return lattice_self_term(c.dim, p, c.measure);
      return ball_mean_self_energy(c.dim, c.dim == 1 ? 0.5 * c.measure : std::sqrt(c.measure / std::acos(-1.0)), p);
    case CellKind::tube:
      if (n != 3) throw KernelError("tube cells require n = 3");
      return cylinder_mean_self_energy(c.radius, c.thickness, p);
  }
  throw KernelError("unknown cell kind");
}

KernelContext assemble_kernel(CloudPtr cloud, double alpha, const KernelOptions& opt) {
  if (!cloud) throw KernelError("assemble_kernel: missing cloud");
  const int n = cloud->n;
  check_alpha(alpha, n);
  const Eigen::Index N = cloud->size();
  if (N > opt.node_cap)
    throw KernelError("assemble_kernel: " + std::to_string(N) + " nodes exceed the dense-matrix cap of " +
                      std::to_string(opt.node_cap));
  KernelContext ctx;
  ctx.alpha = alpha;
  ctx.n = n;
  ctx.cloud = cloud;
  ctx.threads = std::max(1, opt.threads);
  ctx.matrix.resize(N, N);
  const double p = alpha - n;
  const Eigen::MatrixXd& X = cloud->nodes;

  // Upper triangle by columns, then mirrored, so K is exactly symmetric.
  parallel_columns(N, ctx.threads, [&](Eigen::Index lo, Eigen::Index hi) {
    for (Eigen::Index j = lo; j < hi; ++j) {
      for (Eigen::Index i = 0; i < j; ++i) {
        const double r2 = (X.col(i) - X.col(j)).squaredNorm();
        ctx.matrix(i, j) = pair_power(r2, p);
      }
    }
  });
  for (Eigen::Index j = 0; j < N; ++j)
    for (Eigen::Index i = j + 1; i < N; ++i) ctx.matrix(i, j) = ctx.matrix(j, i);

  std::vector<double> diag(static_cast<std::size_t>(N));
  for (Eigen::Index i = 0; i < N; ++i) {
    diag[static_cast<std::size_t>(i)] = self_term(cloud->cells[static_cast<std::size_t>(i)], alpha, n, opt.scheme);
    ctx.matrix(i, i) = diag[static_cast<std::size_t>(i)];
  }

  ctx.diagonal_rule.scheme = opt.scheme;
  nlohmann::json prm = describe_diagonal_rule(opt.scheme, alpha, n);
  if (N > 0) {
    const auto [mn, mx] = std::minmax_element(diag.begin(), diag.end());
    prm["diagonal_min"] = *mn;
    prm["diagonal_max"] = *mx;
  }
  ctx.diagonal_rule.parameters = prm;
  return ctx;
}

Eigen::VectorXd potential_at(const KernelContext& ctx, const DiscreteMeasure& mu, const Eigen::MatrixXd& points) {
  if (mu.cloud != ctx.cloud) throw KernelError("potential_at: measure lives on a different cloud");
  if (points.rows() != ctx.n) throw KernelError("potential_at: evaluation point dimension mismatch");
  const Eigen::MatrixXd& X = ctx.cloud->nodes;
  const double p = ctx.exponent();
  Eigen::VectorXd out(points.cols());
  for (Eigen::Index k = 0; k < points.cols(); ++k) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < X.cols(); ++i) {
      if (mu.masses[i] == 0.0) continue;
      const double r2 = (X.col(i) - points.col(k)).squaredNorm();
      s += mu.masses[i] * (r2 == 0.0 ? ctx.matrix(i, i) : pair_power(r2, p));
    }
    out[k] = s;
  }
  return out;
}

Eigen::VectorXd point_potential(double alpha, const Eigen::MatrixXd& sources, const Eigen::VectorXd& masses,
                                const Eigen::MatrixXd& points) {
  const auto n = static_cast<int>(sources.rows());
  if (points.rows() != n) throw KernelError("point_potential: dimension mismatch");
  if (masses.size() != sources.cols()) throw KernelError("point_potential: mass count mismatch");
  const double p = alpha - n;
  Eigen::VectorXd out(points.cols());
  for (Eigen::Index k = 0; k < points.cols(); ++k) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < sources.cols(); ++i) {
      const double r2 = (sources.col(i) - points.col(k)).squaredNorm();
      if (r2 == 0.0) throw KernelError("point_potential: evaluation point coincides with a point charge");
      s += masses[i] * pair_power(r2, p);
    }
    out[k] = s;
  }
  return out;
}

Eigen::VectorXd apply(const KernelContext& ctx, const Eigen::VectorXd& m) {
  if (m.size() != ctx.size()) throw KernelError("apply: vector length mismatch");
  return ctx.matrix * m;
}

double energy(const KernelContext& ctx, const Eigen::VectorXd& m) { return m.dot(apply(ctx, m)); }

double mutual_energy(const KernelContext& ctx, const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return a.dot(apply(ctx, b));
}

double energy(const KernelContext& ctx, const DiscreteMeasure& mu) {
  if (mu.cloud != ctx.cloud) throw KernelError("energy: measure lives on a different cloud");
  return energy(ctx, mu.masses);
}

double mutual_energy(const KernelContext& ctx, const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  if (mu.cloud != ctx.cloud || nu.cloud != ctx.cloud)
    throw KernelError("mutual_energy: measures live on different clouds");
  // Evaluate in a fixed order so I(mu, nu) and I(nu, mu) agree bit for bit.
  const Eigen::VectorXd Km = apply(ctx, mu.masses);
  const Eigen::VectorXd Kn = apply(ctx, nu.masses);
  const double a = nu.masses.dot(Km);
  const double b = mu.masses.dot(Kn);
  return 0.5 * (a + b);
}

}  // namespace rieszwb
