#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <random>

#include "doctest.h"
#include "rieszwb/geometry.hpp"
#include "rieszwb/kernel.hpp"

using namespace rieszwb;

namespace {

const Vec O3 = Eigen::Vector3d::Zero();
constexpr double kPi = 3.14159265358979323846;

Vec v3(double a, double b, double c) { return Eigen::Vector3d(a, b, c); }

Vec random_unit(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> g;
  Vec x(n);
  for (int k = 0; k < n; ++k) x[k] = g(rng);
  return x / x.norm();
}

bool all_nodes_in(const PointCloud& c, const SetDescriptor& d) {
  for (Eigen::Index i = 0; i < c.size(); ++i)
    if (!contains(d, c.node(i))) return false;
  return true;
}

SetDescriptor cusp(double beta, double lo, double hi) {
  return RotationBody{Profile{ProfileKind::cusp, beta, lo, hi}};
}

}  // namespace

TEST_CASE("sphere total weight matches surface area") {
  for (int r : {4, 12, 26}) {
    const auto c = discretize(Sphere{O3, 1.0}, r);
    CHECK(c.total_weight() == doctest::Approx(4.0 * kPi).epsilon(0.01));
  }
  const auto big = discretize(Sphere{O3, 1.0}, 26);
  CHECK(big.size() >= 2000);
}

TEST_CASE("ball, shell and circle weights match analytic measures") {
  for (double r : {0.5, 1.0, 3.0}) {
    const auto b = discretize(Ball{v3(1, -2, 0.5), r}, 10);
    CHECK(b.total_weight() == doctest::Approx(4.0 / 3.0 * kPi * r * r * r).epsilon(0.01));
  }
  const auto sh = discretize(Shell{O3, 0.5, 1.0}, 10);
  CHECK(sh.total_weight() == doctest::Approx(4.0 / 3.0 * kPi * (1.0 - 0.125)).epsilon(0.01));
  const auto circ = discretize(Sphere{Eigen::Vector2d::Zero(), 2.0}, 12);
  CHECK(circ.n == 2);
  CHECK(circ.total_weight() == doctest::Approx(4.0 * kPi).epsilon(0.01));
  const auto disk = discretize(Ball{Eigen::Vector2d::Zero(), 1.0}, 12);
  CHECK(disk.total_weight() == doctest::Approx(kPi).epsilon(0.01));
}

TEST_CASE("rotation body volume matches quadrature of the profile") {
  const Profile p{ProfileKind::cusp, 2.0, 0.05, 1.0};
  const double vol = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      [&](double x) { return kPi * std::exp(2.0 * p.log_radius(x)); }, p.x1_min, p.x1_max, 8, 1e-12);
  const auto c = discretize(RotationBody{p}, 12);
  CHECK(c.total_weight() == doctest::Approx(vol).epsilon(0.01));

  const Profile e{ProfileKind::exp_s, 0.5, 1.0, 6.0};
  const double vol_e = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      [&](double x) { return kPi * std::exp(2.0 * e.log_radius(x)); }, e.x1_min, e.x1_max, 8, 1e-12);
  CHECK(discretize(RotationBody{e}, 10).total_weight() == doctest::Approx(vol_e).epsilon(0.01));

  const HalfCylinder h{v3(1, 0, 0), 1.0, 1.0, 5.0};
  CHECK(discretize(h, 8).total_weight() == doctest::Approx(4.0 * kPi).epsilon(0.01));
}

TEST_CASE("profiles follow their closed forms") {
  const Profile pw{ProfileKind::power, 2.0, 1.0, 10.0};
  CHECK(pw.radius(2.0) == doctest::Approx(0.25));
  const Profile ex{ProfileKind::exp_s, 0.5, 1.0, 10.0};
  CHECK(ex.radius(4.0) == doctest::Approx(std::exp(-2.0)));
  const Profile cu{ProfileKind::cusp, 2.0, 0.0, 1.0};
  CHECK(cu.log_radius(0.01) == doctest::Approx(-1e4));
  CHECK(cu.increasing());
  CHECK_FALSE(pw.increasing());
  CHECK(cu.log_max_on(0.1, 0.5) == doctest::Approx(cu.log_radius(0.5)));
  CHECK(ex.log_min_on(2.0, 3.0) == doctest::Approx(ex.log_radius(3.0)));
}

TEST_CASE("truncation keeps nodes inside the bounding ball") {
  const auto t = discretize(make_truncate(Ball{O3, 1.0}, 0.5), 10);
  for (Eigen::Index i = 0; i < t.size(); ++i) CHECK(t.node(i).norm() <= 0.5 + 1e-12);
  CHECK(t.total_weight() == doctest::Approx(4.0 / 3.0 * kPi * 0.125).epsilon(0.01));

  const SetDescriptor hc = HalfCylinder{v3(1, 0, 0), 1.0, 1.0, std::numeric_limits<double>::infinity()};
  for (double R : {5.0, 20.0}) {
    const auto c = discretize(make_truncate(hc, R), 6);
    double far = 0.0;
    for (Eigen::Index i = 0; i < c.size(); ++i) far = std::max(far, c.node(i).norm());
    CHECK(far <= R * (1.0 + 1e-12));
    CHECK(far >= 0.8 * R);
  }
}

TEST_CASE("cusp nodes satisfy the membership predicate") {
  const double eps = 0.05;
  const auto c = discretize(cusp(2.0, eps, 1.0), 12);
  REQUIRE(c.size() > 0);
  for (Eigen::Index i = 0; i < c.size(); ++i) {
    const Vec x = c.node(i);
    CHECK(x[0] >= eps - 1e-12);
    CHECK(x[0] <= 1.0 + 1e-12);
    const double r2 = x[1] * x[1] + x[2] * x[2];
    CHECK(r2 <= std::exp(-2.0 * std::pow(x[0], -2.0)) * (1.0 + 1e-9));
  }
}

TEST_CASE("node count is nondecreasing under refinement") {
  const std::vector<SetDescriptor> sets = {
      Sphere{O3, 1.0}, Ball{O3, 1.0}, Shell{O3, 0.5, 1.0}, cusp(0.5, 0.0, 1.0),
      HalfCylinder{v3(0, 0, 1), 0.5, -1.0, 2.0}, make_truncate(Ball{v3(0.5, 0, 0), 1.0}, 0.9)};
  for (const auto& d : sets) {
    Eigen::Index prev = 0;
    for (int r : {2, 4, 8, 16}) {
      const auto c = discretize(d, r);
      CHECK(c.size() >= prev);
      CHECK(c.size() >= 1);
      prev = c.size();
    }
    CHECK(discretize(d, 16).size() > discretize(d, 2).size());
  }
}

TEST_CASE("degenerate descriptors are rejected") {
  CHECK_THROWS_AS(validate(Ball{O3, 0.0}), GeometryError);
  CHECK_THROWS_AS(validate(Sphere{O3, -1.0}), GeometryError);
  CHECK_THROWS_AS(validate(Shell{O3, 1.0, 1.0}), GeometryError);
  CHECK_THROWS_AS(validate(RotationBody{Profile{ProfileKind::power, 1.0, 2.0, 1.0}}), GeometryError);
  CHECK_THROWS_AS(validate(RotationBody{Profile{ProfileKind::exp_s, 0.0, 1.0, 2.0}}), GeometryError);
  CHECK_THROWS_AS(validate(HalfCylinder{v3(1, 0, 0), 0.0, 0.0, 1.0}), GeometryError);
  CHECK_THROWS_AS(validate(Union{}), GeometryError);
  CHECK_THROWS_AS(discretize(Ball{O3, 0.0}, 4), GeometryError);
  CHECK_THROWS_AS(discretize(Ball{O3, 1.0}, 0), GeometryError);
  CHECK_THROWS_AS(validate(make_truncate(Ball{O3, 1.0}, 0.0)), GeometryError);
}

TEST_CASE("unbounded sets must be truncated before discretization") {
  const SetDescriptor hc = HalfCylinder{v3(1, 0, 0), 1.0, 1.0, std::numeric_limits<double>::infinity()};
  CHECK_FALSE(is_bounded(hc));
  CHECK(std::isinf(extent_from(hc, O3)));
  CHECK_THROWS_AS(discretize(hc, 4), GeometryError);
  CHECK(is_bounded(make_truncate(hc, 10.0)));
}

TEST_CASE("membership and extent") {
  CHECK(contains(Ball{O3, 1.0}, v3(0.5, 0.5, 0.5)));
  CHECK_FALSE(contains(Ball{O3, 1.0}, v3(2, 0, 0)));
  CHECK(contains(Sphere{O3, 1.0}, v3(0, 1, 0)));
  CHECK_FALSE(contains(Sphere{O3, 1.0}, v3(0, 0.5, 0)));
  CHECK_FALSE(contains(Shell{O3, 0.5, 1.0}, v3(0.2, 0, 0)));
  CHECK(extent_from(Ball{O3, 1.0}, v3(2, 0, 0)) == doctest::Approx(3.0));
  CHECK(extent_from(make_truncate(Ball{O3, 2.0}, 1.0), O3) <= 1.0 + 1e-12);
  const SetDescriptor u = Union{{Ball{v3(-3, 0, 0), 1.0}, Ball{v3(3, 0, 0), 1.0}}};
  CHECK(contains(u, v3(3, 0, 0)));
  CHECK_FALSE(contains(u, O3));
  CHECK(dimension(u) == 3);
  CHECK(type_name(u) == "union");
}

TEST_CASE("descriptor JSON round trip") {
  const std::vector<SetDescriptor> sets = {
      Ball{O3, 1.0},
      Sphere{v3(1, 2, 3), 0.5},
      Shell{O3, 0.2, 0.7},
      RotationBody{Profile{ProfileKind::exp_s, 0.5, 1.0, std::numeric_limits<double>::infinity()}},
      cusp(2.0, 0.0, 1.0),
      HalfCylinder{v3(0, 1, 0), 1.0, 1.0, std::numeric_limits<double>::infinity()},
      Union{{Ball{O3, 1.0}, Sphere{v3(5, 0, 0), 1.0}}},
      make_truncate(RotationBody{Profile{ProfileKind::power, 1.0, 1.0, 1e9}}, 40.0),
      make_band(Ball{O3, 1.0}, O3, 0.25, 0.5)};
  for (const auto& d : sets) {
    nlohmann::json j = d;
    const SetDescriptor back = j.get<SetDescriptor>();
    CHECK(nlohmann::json(back) == j);
  }
  CHECK_THROWS_AS(nlohmann::json::parse(R"({"type":"torus"})").get<SetDescriptor>(), GeometryError);
  CHECK_THROWS_AS(nlohmann::json::parse(R"({"type":"ball","center":[0,0,0]})").get<SetDescriptor>(), GeometryError);
}

TEST_CASE("annulus radii and decomposition") {
  const auto slices = annulus_decompose(Ball{O3, 1.0}, O3, 0.5, 0, 2, AnnulusMode::shrinking);
  REQUIRE(slices.size() == 3);
  const double outer[] = {1.0, 0.5, 0.25};
  for (int j = 0; j < 3; ++j) {
    const Band* b = slices[static_cast<std::size_t>(j)].as<Band>();
    REQUIRE(b != nullptr);
    CHECK(b->r_hi == doctest::Approx(outer[j]));
    CHECK(b->r_lo == doctest::Approx(outer[j] / 2));
  }
  for (int j = 0; j <= 5; ++j) {
    const auto [lo, hi] = annulus_radii(2.0, j, AnnulusMode::expanding);
    CHECK(lo == doctest::Approx(std::pow(2.0, j)));
    CHECK(hi == doctest::Approx(std::pow(2.0, j + 1)));
  }
  const SetDescriptor hc = HalfCylinder{v3(1, 0, 0), 1.0, 1.0, std::numeric_limits<double>::infinity()};
  const auto exp_slices = annulus_decompose(hc, O3, 2.0, 0, 5, AnnulusMode::expanding);
  CHECK(exp_slices.size() == 6);
  CHECK_THROWS(annulus_decompose(Ball{O3, 1.0}, O3, 1.0, 0, 2, AnnulusMode::shrinking));
  CHECK_THROWS(annulus_decompose(Ball{O3, 1.0}, O3, 2.0, 0, 2, AnnulusMode::shrinking));
  CHECK_THROWS(annulus_decompose(Ball{O3, 1.0}, O3, 0.5, 0, 2, AnnulusMode::expanding));
}

TEST_CASE("annulus slices of one cloud partition the band") {
  const auto c = discretize(Ball{O3, 1.0}, 12);
  const auto groups = partition_by_annulus(c, O3, 0.5, 0, 3, AnnulusMode::shrinking);
  REQUIRE(groups.size() == 4);
  std::vector<int> seen(static_cast<std::size_t>(c.size()), 0);
  std::size_t total = 0;
  for (std::size_t j = 0; j < groups.size(); ++j) {
    const auto [lo, hi] = annulus_radii(0.5, static_cast<int>(j), AnnulusMode::shrinking);
    for (auto i : groups[j]) {
      ++seen[static_cast<std::size_t>(i)];
      const double r = c.node(i).norm();
      CHECK(r > lo);
      CHECK(r <= hi);
    }
    total += groups[j].size();
  }
  std::size_t in_band = 0;
  for (Eigen::Index i = 0; i < c.size(); ++i) {
    CHECK(seen[static_cast<std::size_t>(i)] <= 1);
    const double r = c.node(i).norm();
    if (r > 0.0625 && r <= 1.0) ++in_band;
  }
  CHECK(total == in_band);
}

TEST_CASE("cusp slices: |x| and x1 differ by at most the slice's profile maximum") {
  const SetDescriptor d = cusp(0.5, 0.0, 1.0);
  const Profile& p = d.as<RotationBody>()->profile;
  for (int j = 1; j <= 4; ++j) {
    const auto [lo, hi] = annulus_radii(0.5, j, AnnulusMode::shrinking);
    const auto c = discretize(make_band(d, O3, lo, hi), 8);
    REQUIRE(c.size() > 0);
    const double rho_max = p.radius(hi);
    for (Eigen::Index i = 0; i < c.size(); ++i) {
      const Vec x = c.node(i);
      CHECK(x.norm() > lo * (1 - 1e-12));
      CHECK(x.norm() <= hi * (1 + 1e-12));
      CHECK(x.norm() - x[0] <= rho_max + 1e-12);
    }
  }
}

TEST_CASE("Kelvin inversion of clouds") {
  PointCloud one = discretize(Ball{v3(2, 0, 0), 0.01}, 1);
  REQUIRE(one.size() >= 1);
  const auto img = kelvin_invert_cloud(one, O3);
  for (Eigen::Index i = 0; i < one.size(); ++i)
    CHECK(img.node(i).norm() == doctest::Approx(1.0 / one.node(i).norm()).epsilon(1e-14));

  const auto c = discretize(Shell{v3(0.3, 0, 0), 0.5, 1.0}, 8);
  const Vec center = v3(2, 1, 0);
  const auto twice = kelvin_invert_cloud(kelvin_invert_cloud(c, center), center);
  CHECK((twice.nodes - c.nodes).cwiseAbs().maxCoeff() <= 1e-12 * c.nodes.cwiseAbs().maxCoeff());
  CHECK((twice.weights - c.weights).cwiseAbs().maxCoeff() <= 1e-12 * c.weights.maxCoeff());

  // Weights of a d-dimensional cell scale by r^(-2d).
  const auto once = kelvin_invert_cloud(c, center);
  for (Eigen::Index i = 0; i < c.size(); ++i) {
    const double r = (c.node(i) - center).norm();
    const int d = c.cells[static_cast<std::size_t>(i)].intrinsic_dim();
    CHECK(once.weights[i] == doctest::Approx(c.weights[i] * std::pow(r, -2.0 * d)).epsilon(1e-12));
  }

  // The unit sphere is fixed as a set.
  const auto s = discretize(Sphere{O3, 1.0}, 10);
  const auto si = kelvin_invert_cloud(s, O3);
  CHECK((si.nodes - s.nodes).cwiseAbs().maxCoeff() <= 1e-12);

  CHECK_THROWS(kelvin_invert_cloud(discretize(Ball{O3, 1.0}, 1), discretize(Ball{O3, 1.0}, 1).node(0)));
}

TEST_CASE("Kelvin transform of measures") {
  // Unit mass at distance 1 from the center stays a unit mass.
  auto c = std::make_shared<const PointCloud>(discretize(Sphere{v3(1, 0, 0), 1.0}, 6));
  Eigen::Index idx = 0;
  for (Eigen::Index i = 0; i < c->size(); ++i)
    if (std::abs(c->node(i).norm() - 1.0) < std::abs(c->node(idx).norm() - 1.0)) idx = i;
  const double r = c->node(idx).norm();
  const auto t = kelvin_transform_measure(DiscreteMeasure::unit_at(c, idx), O3, 2.0);
  CHECK(t.masses[idx] == doctest::Approx(std::pow(r, -1.0)));

  // Uniform unit-sphere measure about its center: total mass U(0) = 1.
  auto s = std::make_shared<const PointCloud>(discretize(Sphere{O3, 1.0}, 12));
  const DiscreteMeasure gamma(s, Eigen::VectorXd::Constant(s->size(), 1.0 / static_cast<double>(s->size())));
  CHECK(kelvin_transform_measure(gamma, O3, 2.0).total_mass() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("property: Kelvin mass identity and involution on random measures") {
  std::mt19937_64 rng(20240611);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 25; ++trial) {
    const int n = trial % 5 == 0 ? 2 : 3;
    const bool surface = trial % 2 == 0;
    const double alpha = surface ? 1.05 + 0.9 * u(rng) : 0.3 + 1.6 * u(rng);
    Vec center = Vec::Zero(n);
    const double rad = 0.3 + u(rng);
    const Vec y = center + (rad + 0.5 + 2.0 * u(rng)) * random_unit(rng, n);
    SetDescriptor d = surface ? SetDescriptor(Sphere{center, rad}) : SetDescriptor(Ball{center, rad});
    auto c = std::make_shared<const PointCloud>(discretize(d, 5));
    Eigen::VectorXd m(c->size());
    for (Eigen::Index i = 0; i < m.size(); ++i) m[i] = u(rng);
    const DiscreteMeasure mu(c, m);
    const auto t = kelvin_transform_measure(mu, y, alpha);
    const KernelContext ctx = assemble_kernel(c, alpha);
    const double U = potential_at(ctx, mu, y)[0];
    CHECK(t.total_mass() == doctest::Approx(U).epsilon(1e-8));
    const auto back = kelvin_transform_measure(t, y, alpha);
    CHECK((back.masses - m).cwiseAbs().maxCoeff() <= 1e-10 * m.maxCoeff());
  }
}

TEST_CASE("property: random balls and shells discretize into valid clouds") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const Vec c = v3(4 * u(rng) - 2, 4 * u(rng) - 2, 4 * u(rng) - 2);
    const double r = 0.2 + 2 * u(rng);
    SetDescriptor d;
    double vol = 0.0;
    switch (trial % 3) {
      case 0:
        d = Ball{c, r};
        vol = 4.0 / 3.0 * kPi * r * r * r;
        break;
      case 1:
        d = Sphere{c, r};
        vol = 4.0 * kPi * r * r;
        break;
      default:
        d = Shell{c, 0.5 * r, r};
        vol = 4.0 / 3.0 * kPi * r * r * r * 0.875;
    }
    const int res = 3 + trial % 6;
    const auto cloud = discretize(d, res);
    CHECK_NOTHROW(cloud.check());
    CHECK(cloud.weights.minCoeff() > 0.0);
    CHECK(cloud.cell_radius.minCoeff() > 0.0);
    CHECK(cloud.total_weight() == doctest::Approx(vol).epsilon(0.01));
    CHECK(all_nodes_in(cloud, d));
    const double R = c.norm() + 0.5 * r;
    const auto tr = discretize(make_truncate(d, R), res);
    for (Eigen::Index i = 0; i < tr.size(); ++i) CHECK(tr.node(i).norm() <= R * (1 + 1e-12));
  }
}
