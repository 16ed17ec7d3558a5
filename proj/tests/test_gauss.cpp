#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "rieszwb/gauss.hpp"
#include "rieszwb/geometry.hpp"
#include "rieszwb/kernel.hpp"
#include "rieszwb/potential_ops.hpp"
#include "rieszwb/solvers.hpp"
#include "support.hpp"

using namespace rieszwb;
using namespace test_support;

namespace {

const Vec O3 = Eigen::Vector3d::Zero();

Vec v3(double a, double b, double c) { return Eigen::Vector3d(a, b, c); }

SolveSettings tight(double tol = 1e-10) {
  SolveSettings s;
  s.tol = tol;
  return s;
}

Eigen::VectorXd field_vector(const KernelContext& ctx, const FieldSpec& f) {
  Eigen::VectorXd b(ctx.size());
  for (Eigen::Index i = 0; i < ctx.size(); ++i)
    b[i] = f.q * std::pow((ctx.cloud->node(i) - f.z).norm(), ctx.exponent());
  return b;
}

double max_relative_spread(const Eigen::VectorXd& v) {
  const double mean = v.mean();
  return (v.array() - mean).abs().maxCoeff() / mean;
}

struct BallFixture {
  CloudPtr cloud;
  KernelContext ctx;
  BalayageResult harmonic;
  EquilibriumResult equilibrium;
  double h = 0.0;
  explicit BallFixture(int res, const Vec& z = v3(2, 0, 0)) {
    cloud = shared(discretize(Ball{O3, 1.0}, res));
    ctx = assemble_kernel(cloud, 2.0);
    harmonic = harmonic_measure(z, ctx, tight());
    equilibrium = equilibrium_measure(ctx, tight());
    h = 1.0 / harmonic.swept.total_mass();
  }
};

// Exact transport cost on a line (all gaps below the cap of 2), equal total masses.
double line_transport(const std::vector<double>& x, const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  std::vector<std::size_t> order(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return x[i] < x[j]; });
  double cdf = 0.0, cost = 0.0;
  for (std::size_t k = 0; k + 1 < order.size(); ++k) {
    cdf += a[static_cast<Eigen::Index>(order[k])] - b[static_cast<Eigen::Index>(order[k])];
    cost += std::abs(cdf) * (x[order[k + 1]] - x[order[k]]);
  }
  return cost;
}

}  // namespace

TEST_CASE("sphere with the charge at its center: value 1 - 2q and constant 1 - q") {
  const auto cloud = shared(discretize(Sphere{O3, 1.0}, 16));
  const auto ctx = assemble_kernel(cloud, 2.0);
  for (double q : {0.5, 1.0, 2.0}) {
    CAPTURE(q);
    const auto r = solve_weighted(ctx, FieldSpec{O3, q, 2.0}, tight());
    CHECK(r.converged);
    CHECK(std::abs(r.value - (1.0 - 2.0 * q)) <= 0.01 * std::max(1.0, std::abs(1.0 - 2.0 * q)));
    CHECK(std::abs(r.constant - (1.0 - q)) <= 0.02 * std::max(1.0, std::abs(1.0 - q)));
    CHECK(r.lambda.total_mass() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(max_relative_spread(r.lambda.masses.cwiseQuotient(cloud->weights)) <= 0.02);
    CHECK(r.constant == doctest::Approx(r.multiplier).epsilon(1e-8));
  }
}

TEST_CASE("vanishing charge gives the normalized equilibrium measure") {
  BallFixture f(8);
  const auto r = solve_weighted(f.ctx, FieldSpec{v3(2, 0, 0), 1e-6, 2.0}, tight(1e-12));
  const Eigen::VectorXd normalized = f.equilibrium.gamma.masses / f.equilibrium.capacity;
  CHECK((r.lambda.masses - normalized).cwiseAbs().maxCoeff() <= 0.01 * normalized.maxCoeff());
}

TEST_CASE("sign of the constant on the ball around the threshold H = 2") {
  BallFixture f(10);
  CHECK(f.h == doctest::Approx(2.0).epsilon(0.01));
  const auto c1 = solve_weighted(f.ctx, FieldSpec{v3(2, 0, 0), 1.0, 2.0}, tight()).constant;
  const auto c2 = solve_weighted(f.ctx, FieldSpec{v3(2, 0, 0), 2.0, 2.0}, tight()).constant;
  const auto c3 = solve_weighted(f.ctx, FieldSpec{v3(2, 0, 0), 3.0, 2.0}, tight()).constant;
  CHECK(c1 > 0.0);
  CHECK(std::abs(c2) <= 1e-3);
  CHECK(c3 < 0.0);
}

TEST_CASE("measured constant against the closed form (H - q) / (H cap)") {
  BallFixture f(10);
  for (auto [q, expected] : {std::pair{1.0, 0.5}, std::pair{0.01, 0.995}}) {
    CAPTURE(q);
    const auto r = solve_weighted(f.ctx, FieldSpec{v3(2, 0, 0), q, 2.0}, tight());
    const auto c = weighted_constant(r, 2.0, 1.0);
    REQUIRE(c.formula.has_value());
    CHECK(*c.formula == doctest::Approx(expected).epsilon(1e-14));
    CHECK(c.measured == doctest::Approx(expected).epsilon(0.02));
    CHECK(c.relative_gap <= 0.02);
    // Same check with H and the capacity measured on the cloud.
    const auto cm = weighted_constant(r, f.h, f.equilibrium.capacity);
    CHECK(cm.relative_gap <= 0.02);
  }
  const auto r2 = solve_weighted(f.ctx, FieldSpec{v3(2, 0, 0), 2.0, 2.0}, tight());
  const auto c2 = weighted_constant(r2, 2.0, 1.0);
  CHECK_FALSE(c2.formula.has_value());
  CHECK(std::abs(c2.measured) <= 1e-3);
  CHECK_FALSE(weighted_constant(r2, 2.0, INFINITY).formula.has_value());
}

TEST_CASE("solution formula residuals on the ball") {
  BallFixture f(10);
  const auto r1 = solve_weighted(f.ctx, FieldSpec{v3(2, 0, 0), 1.0, 2.0}, tight());
  const auto fc1 = check_solution_formula(f.ctx, FieldSpec{v3(2, 0, 0), 1.0, 2.0}, r1, f.harmonic, f.equilibrium);
  CHECK(fc1.branch == "q<H");
  CHECK(fc1.coefficient == doctest::Approx(0.5).epsilon(0.02));
  CHECK(fc1.relative_energy_residual <= 0.02);

  const FieldSpec at_h{v3(2, 0, 0), 2.0, 2.0};
  const auto r2 = solve_weighted(f.ctx, at_h, tight());
  const auto fc2 = check_solution_formula(f.ctx, at_h, r2, f.harmonic, f.equilibrium, 1e-3);
  CHECK(fc2.branch == "q=H");
  CHECK(fc2.relative_energy_residual <= 0.02);

  const FieldSpec above{v3(2, 0, 0), 3.0, 2.0};
  CHECK_THROWS(check_solution_formula(f.ctx, above, solve_weighted(f.ctx, above, tight()), f.harmonic, f.equilibrium));
}

TEST_CASE("at q = H the solution is H times the harmonic measure") {
  for (const Vec& z : {v3(2, 0, 0), v3(0, -1.5, 1.0), v3(4, 1, 0)}) {
    BallFixture f(8, z);
    const FieldSpec field{z, f.h, 2.0};
    const auto r = solve_weighted(f.ctx, field, tight());
    const auto fc = check_solution_formula(f.ctx, field, r, f.harmonic, f.equilibrium);
    CHECK(fc.branch == "q=H");
    CHECK(fc.relative_energy_residual <= 0.02);
  }
  // Unit sphere seen from its center: H = 1 and the solution is uniform.
  const auto cloud = shared(discretize(Sphere{O3, 1.0}, 16));
  const auto ctx = assemble_kernel(cloud, 2.0);
  const auto h = harmonic_measure(O3, ctx, tight());
  CHECK(1.0 / h.swept.total_mass() == doctest::Approx(1.0).epsilon(0.005));
  const FieldSpec field{O3, 1.0 / h.swept.total_mass(), 2.0};
  const auto r = solve_weighted(ctx, field, tight());
  const auto fc = check_solution_formula(ctx, field, r, h, equilibrium_measure(ctx, tight()));
  CHECK(fc.relative_energy_residual <= 0.02);
  CHECK(max_relative_spread(r.lambda.masses.cwiseQuotient(cloud->weights)) <= 0.02);
}

TEST_CASE("formula residual does not grow under refinement") {
  BallFixture coarse(10), fine(14);
  REQUIRE(fine.cloud->size() >= 2 * coarse.cloud->size() * 9 / 10);
  const FieldSpec field{v3(2, 0, 0), 1.0, 2.0};
  const auto rc = check_solution_formula(coarse.ctx, field, solve_weighted(coarse.ctx, field, tight()), coarse.harmonic,
                                         coarse.equilibrium);
  const auto rf =
      check_solution_formula(fine.ctx, field, solve_weighted(fine.ctx, field, tight()), fine.harmonic, fine.equilibrium);
  CHECK(rf.relative_energy_residual <= 1.2 * rc.relative_energy_residual);
}

TEST_CASE("weighted KKT conditions and value dominance on random instances") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 24; ++trial) {
    CAPTURE(trial);
    const double alpha = trial % 3 == 0 ? 2.0 : 1.0 + u(rng);
    const SetDescriptor set = trial % 2 ? SetDescriptor(Ball{O3, 1.0}) : SetDescriptor(Shell{O3, 0.5, 1.0});
    const auto cloud = shared(discretize(set, 4 + trial % 3));
    const auto ctx = assemble_kernel(cloud, alpha);
    const Vec z = (1.2 + 2.0 * u(rng)) * v3(u(rng) - 0.5, u(rng) - 0.5, u(rng) - 0.5).normalized();
    const FieldSpec field{z, 0.2 + 5.0 * u(rng), alpha};
    const double tol = 1e-10;
    const auto r = solve_weighted(ctx, field, tight(tol));
    CHECK(r.converged);
    const Eigen::VectorXd b = field_vector(ctx, field);
    const Eigen::VectorXd Uf = ctx.matrix * r.lambda.masses - b;
    const double scale = std::max(1.0, b.cwiseAbs().maxCoeff());
    const double c = r.lambda.masses.dot(ctx.matrix * r.lambda.masses) - b.dot(r.lambda.masses);
    CHECK(c == doctest::Approx(r.constant).epsilon(1e-12));
    CHECK(Uf.minCoeff() >= c - 1e-8 * scale);
    for (auto i : r.support_indices) CHECK(std::abs(Uf[i] - c) <= 1e-8 * scale);
    // The cone optimum lower-bounds the simplex optimum.
    QpProblem cone;
    cone.ctx = &ctx;
    cone.b = b;
    cone.tol = 1e-12;
    const auto cs = minimize_cone(cone);
    CHECK(r.value >= cs.objective - 1e-10 * scale);
    CHECK(r.value == doctest::Approx(r.lambda.masses.dot(ctx.matrix * r.lambda.masses) - 2.0 * b.dot(r.lambda.masses)));
  }
}

TEST_CASE("constant decreases in q and changes sign at H") {
  BallFixture f(8, v3(0, 2.5, 0));
  std::vector<double> grid, consts;
  for (double q = 0.25; q <= 4.0; q += 0.25) {
    grid.push_back(q);
    consts.push_back(solve_weighted(f.ctx, FieldSpec{v3(0, 2.5, 0), q, 2.0}, tight()).constant);
  }
  for (std::size_t k = 1; k < consts.size(); ++k) CHECK(consts[k] < consts[k - 1]);
  for (std::size_t k = 1; k < consts.size(); ++k)
    if (consts[k - 1] > 0.0 && consts[k] <= 0.0) {
      CHECK(f.h >= grid[k - 1]);
      CHECK(f.h <= grid[k] + 1e-9);
    }
  CHECK(f.h == doctest::Approx(2.5).epsilon(0.01));
}

TEST_CASE("field validation") {
  const auto cloud = shared(discretize(Ball{O3, 1.0}, 4));
  const auto ctx = assemble_kernel(cloud, 2.0);
  CHECK_THROWS(solve_weighted(ctx, FieldSpec{v3(2, 0, 0), 0.0, 2.0}));
  CHECK_THROWS(solve_weighted(ctx, FieldSpec{v3(2, 0, 0), -1.0, 2.0}));
  CHECK_THROWS(solve_weighted(ctx, FieldSpec{v3(2, 0, 0), NAN, 2.0}));
  CHECK_THROWS(solve_weighted(ctx, FieldSpec{cloud->node(3), 1.0, 2.0}));
  CHECK_THROWS(solve_weighted(ctx, FieldSpec{v3(2, 0, 0), 1.0, 1.5}));
  CHECK_THROWS(solve_weighted(ctx, FieldSpec{Eigen::Vector2d(2, 0), 1.0, 2.0}));
}

TEST_CASE("existence on a finite-capacity ball holds for every q") {
  for (double q : {0.1, 1.0, 10.0}) {
    CAPTURE(q);
    const auto v = existence_probe(Ball{O3, 1.0}, FieldSpec{v3(2, 0, 0), q, 2.0}, {2.0, 4.0}, 6);
    CHECK(v.verdict == ExistenceVerdictKind::solvable);
    CHECK(v.ladder.size() == 2);
    CHECK(v.ladder[0].value == v.ladder[1].value);
  }
}

TEST_CASE("existence dichotomy on a constant-radius half-cylinder") {
  HalfCylinder hc{Eigen::Vector3d::UnitX(), 1.0, 1.0, INFINITY};
  const std::vector<double> ladder{10.0, 20.0, 40.0, 80.0};
  const auto low = existence_probe(hc, FieldSpec{v3(0.5, 0, 0), 0.5, 2.0}, ladder, 8);
  CAPTURE(low.reason);
  CHECK(low.verdict == ExistenceVerdictKind::mass_escape);
  CHECK(low.values_decreasing);
  const auto high = existence_probe(hc, FieldSpec{v3(0.5, 0, 0), 1.5, 2.0}, ladder, 8);
  CAPTURE(high.reason);
  CHECK(high.verdict == ExistenceVerdictKind::solvable);
  CHECK(high.support_change <= 0.10);
  for (std::size_t k = 1; k < ladder.size(); ++k) CHECK(high.ladder[k].radius > high.ladder[k - 1].radius);
  CHECK_THROWS(existence_probe(hc, FieldSpec{v3(2, 0, 0), 1.0, 2.0}, ladder, 8));
  CHECK_THROWS(existence_probe(hc, FieldSpec{v3(0.5, 0, 0), 1.0, 2.0}, {20.0, 10.0}, 8));
}

TEST_CASE("support on a ball lies on the boundary layer for q up to H") {
  const int res = 10;
  BallFixture f(res);
  for (double q : {0.5, 1.0, 2.0}) {
    CAPTURE(q);
    const auto r = solve_weighted(f.ctx, FieldSpec{v3(2, 0, 0), q, 2.0}, tight());
    double near = 0.0;
    for (Eigen::Index i = 0; i < f.cloud->size(); ++i)
      if (1.0 - f.cloud->node(i).norm() <= 2.0 / res) near += r.lambda.masses[i];
    CHECK(near >= 0.99);
  }
}

TEST_CASE("large charges pull the support toward the near pole") {
  const auto cloud = shared(discretize(Ball{O3, 1.0}, 4));
  REQUIRE(cloud->size() <= 60);
  const auto ctx = assemble_kernel(cloud, 2.0);
  const Vec z = v3(2, 0, 0);
  Eigen::Index nearest = 0;
  for (Eigen::Index i = 1; i < cloud->size(); ++i)
    if ((cloud->node(i) - z).norm() < (cloud->node(nearest) - z).norm()) nearest = i;
  double prev = INFINITY;
  std::size_t prev_support = cloud->size();
  for (double q : {2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0}) {
    CAPTURE(q);
    const auto r = solve_weighted(ctx, FieldSpec{z, q, 2.0}, tight(1e-12));
    // Distance seen through the potential at z; its reciprocal is nondecreasing in q
    // because the optimal value is concave in q with slope -2 U^lambda(z).
    double u = 0.0;
    for (auto i : r.support_indices) u += r.lambda.masses[i] / (cloud->node(i) - z).norm();
    const double d = 1.0 / u;
    if (prev_support > 1) CHECK(d < prev);
    else CHECK(d <= prev + 1e-12);
    CHECK(r.support_indices.size() <= prev_support);
    prev = d;
    prev_support = r.support_indices.size();
  }
  REQUIRE(prev_support == 1);
  CHECK(prev == doctest::Approx((cloud->node(nearest) - z).norm()));
}

TEST_CASE("support scan on a thin-at-infinity body of infinite capacity") {
  RotationBody body{Profile{ProfileKind::exp_s, 0.5, 1.0, INFINITY}};
  const Vec z = v3(0.5, 0, 0);
  const std::vector<double> ladder{10.0, 20.0, 40.0, 80.0};
  const auto h = h_value(z, body, 2.0, ladder, 8);
  const auto scan = support_scan(body, z, 2.0, {h.value, h.value + 0.25}, ladder, 8);
  REQUIRE(scan.rows.size() == 2);
  CHECK(scan.h_estimate == doctest::Approx(h.value).epsilon(1e-12));
  CHECK(scan.rows[0].grows);
  CHECK_FALSE(scan.rows[0].inconclusive);
  CHECK(scan.rows[1].stable);
  CHECK(scan.rows[1].support_radius < scan.rows[0].support_radius);
  CHECK_THROWS(support_scan(body, z, 2.0, {2.0, 1.0}, ladder, 8));
}

TEST_CASE("bounded-Lipschitz estimate") {
  Eigen::MatrixXd X(3, 4);
  X << 0, 0.3, 0.7, 1.5, 0, 0, 0, 0, 0, 0, 0, 0;
  const auto cloud = point_cloud(X);
  Eigen::VectorXd a(4), b(4);
  a << 1, 0, 0, 0;
  b << 0, 1, 0, 0;
  CHECK(bl_distance(*cloud, a, a) == 0.0);
  CHECK(bl_distance(*cloud, a, b) == doctest::Approx(0.3));
  CHECK(bl_distance(*cloud, a, b) == bl_distance(*cloud, b, a));
  b << 0, 0, 0, 0;
  CHECK(bl_distance(*cloud, a, b) == doctest::Approx(1.0));
  CHECK_THROWS(bl_distance(*cloud, a, Eigen::VectorXd::Zero(3)));

  // Far apart points cost at most 2 per unit mass.
  Eigen::MatrixXd Y(3, 2);
  Y << 0, 10, 0, 0, 0, 0;
  Eigen::VectorXd p(2), r(2);
  p << 1, 0;
  r << 0, 1;
  CHECK(bl_distance(*point_cloud(Y), p, r) == doctest::Approx(2.0));

  // Upper bound on the exact transport cost on a line; equality for nested moves.
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + trial % 7;
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(3, n);
    std::vector<double> x(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) P(0, i) = x[static_cast<std::size_t>(i)] = 1.5 * u(rng) + 1e-3 * i;
    Eigen::VectorXd m1(n), m2(n);
    for (int i = 0; i < n; ++i) {
      m1[i] = u(rng);
      m2[i] = u(rng);
    }
    m2 *= m1.sum() / m2.sum();
    const auto c = point_cloud(P);
    const double exact = line_transport(x, m1, m2);
    const double est = bl_distance(*c, m1, m2);
    CHECK(est >= exact - 1e-12);
    CHECK(est <= (m1 - m2).cwiseAbs().sum() * 1.5 + 1e-12);
  }
}

TEST_CASE("continuity along a path toward the ball") {
  const SetDescriptor ball = Ball{O3, 1.0};
  auto path = [](double from, double to, int steps) {
    std::vector<Vec> p;
    for (int k = 0; k <= steps; ++k) p.push_back(v3(from + (to - from) * k / steps, 0, 0));
    return p;
  };
  for (int steps : {5, 10}) {
    CAPTURE(steps);
    const auto scan = continuity_scan(ball, path(3.0, 2.0, steps), ContinuityMode::q_equals_h, 0.0, 2.0, 8, tight());
    for (std::size_t k = 1; k < scan.steps.size(); ++k) {
      const double ratio = scan.steps[k].distance / scan.steps[k].step;
      CHECK(ratio >= 0.1);
      CHECK(ratio <= 10.0);
    }
  }
  const auto fixed = continuity_scan(ball, path(3.0, 2.0, 4), ContinuityMode::fixed_q, 0.5, 2.0, 6, tight());
  for (std::size_t k = 1; k < fixed.steps.size(); ++k) CHECK(fixed.steps[k].distance > 0.0);

  // Approaching the boundary point (1, 0, 0) concentrates the mass next to it.
  const auto near = continuity_scan(ball, path(3.0, 1.05, 6), ContinuityMode::q_equals_h, 0.0, 2.0, 12, tight());
  const auto& last = near.steps.back();
  double cap_mass = 0.0;
  for (Eigen::Index i = 0; i < near.cloud->size(); ++i) {
    const Vec x = near.cloud->node(i);
    if (std::acos(std::clamp(x[0] / x.norm(), -1.0, 1.0)) <= 0.3) cap_mass += last.masses[i];
  }
  CHECK(cap_mass > 0.5);

  const auto still = continuity_scan(ball, {v3(2, 0, 0), v3(2, 0, 0), v3(2, 0, 0)}, ContinuityMode::q_equals_h, 0.0, 2.0, 6);
  for (std::size_t k = 1; k < still.steps.size(); ++k) CHECK(still.steps[k].distance == 0.0);

  CHECK_THROWS(continuity_scan(ball, {v3(0.5, 0, 0)}, ContinuityMode::q_equals_h, 0.0, 2.0, 6));
  CHECK_THROWS(continuity_scan(ball, {v3(2, 0, 0)}, ContinuityMode::fixed_q, 1.5, 2.0, 6));
}
