#include "rieszwb/self_interaction.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <functional>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <tuple>
#include <utility>

namespace rieszwb {

namespace {

constexpr double kPi = std::numbers::pi;

template <class Key, class F>
double cached(std::map<Key, double>& cache, std::mutex& mu, const Key& key, F compute) {
  {
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
  }
  const double v = compute();
  std::lock_guard<std::mutex> lock(mu);
  cache.emplace(key, v);
  return v;
}

// Density of the distance between two uniform points of the unit disk, on [0, 2].
double unit_disk_distance_density(double v) {
  if (v <= 0.0 || v >= 2.0) return 0.0;
  const double h = 0.5 * v;
  return 4.0 * v / kPi * (std::acos(h) - h * std::sqrt(1.0 - h * h));
}

double tanh_sinh_integral(const std::function<double(double)>& f, double a, double b, double tol = 1e-12) {
  static thread_local boost::math::quadrature::tanh_sinh<double> ts;
  return ts.integrate(f, a, b, tol);
}

}  // namespace

double epstein_zeta_cubic(int d, double s) {
  if (d < 1 || d > 3) throw std::invalid_argument("epstein_zeta_cubic: d must be 1, 2 or 3");
  if (!(s > 0.0) || !(s < 0.5 * d)) throw std::invalid_argument("epstein_zeta_cubic: need 0 < s < d/2");
  static std::map<std::pair<int, double>, double> cache;
  static std::mutex mu;
  return cached(cache, mu, std::make_pair(d, s), [d, s] {
    using boost::math::tgamma;
    const int M = 6;
    const double half_d = 0.5 * d;
    double sum = 1.0 / (s - half_d) - 1.0 / s;
    const int lo = -M;
    const int hi = M;
    const int ny = d >= 2 ? hi : 0;
    const int nz = d >= 3 ? hi : 0;
    for (int i = lo; i <= hi; ++i) {
      for (int j = d >= 2 ? lo : 0; j <= ny; ++j) {
        for (int k = d >= 3 ? lo : 0; k <= nz; ++k) {
          const int r2 = i * i + j * j + k * k;
          if (r2 == 0 || r2 > M * M) continue;
          const double y = kPi * r2;
          // The cubic lattice is self-dual, so direct and reciprocal terms share points.
          sum += std::pow(y, -s) * tgamma(s, y) + std::pow(y, s - half_d) * tgamma(half_d - s, y);
        }
      }
    }
    return sum * std::pow(kPi, s) / tgamma(s);
  });
}

double lattice_self_term(int d, double p, double measure) {
  if (!(p < 0.0) || !(p > -d)) throw std::invalid_argument("lattice_self_term: need -d < p < 0");
  return -epstein_zeta_cubic(d, -0.5 * p) * std::pow(measure, p / d);
}

double disk_distance_moment(double k) {
  if (!(k > -2.0)) throw std::invalid_argument("disk_distance_moment: need k > -2");
  static std::map<double, double> cache;
  static std::mutex mu;
  return cached(cache, mu, k, [k] {
    // density(v) = v g(v) with g bounded; v = 2 w^(1/(k+2)) turns v^(k+1) dv into a constant.
    const double e = k + 2.0;
    const double I = tanh_sinh_integral(
        [e](double w) {
          const double v = 2.0 * std::pow(w, 1.0 / e);
          return v > 0.0 && v < 2.0 ? unit_disk_distance_density(v) / v : 0.0;
        },
        0.0, 1.0);
    return std::pow(2.0, e) / e * I;
  });
}

double disk_distance_log_moment() {
  static const double v = tanh_sinh_integral(
      [](double x) { return unit_disk_distance_density(x) * std::log(x); }, 0.0, 2.0);
  return v;
}

double ball_mean_self_energy(int d, double radius, double p) {
  if (!(p > -d)) throw std::invalid_argument("ball_mean_self_energy: need p > -d");
  switch (d) {
    case 1: {
      const double L = 2.0 * radius;
      return 2.0 * std::pow(L, p) / ((p + 1.0) * (p + 2.0));
    }
    case 2:
      return std::pow(radius, p) * disk_distance_moment(p);
    case 3:
      return 3.0 * std::pow(2.0, p + 2.0) * std::pow(radius, p) *
             (2.0 / (p + 3.0) - 3.0 / (p + 4.0) + 1.0 / (p + 6.0));
    default:
      throw std::invalid_argument("ball_mean_self_energy: d must be 1, 2 or 3");
  }
}

namespace {

// Mean of (s^2 + u^2)^(p/2) over the axial separation u of two uniform points
// on a segment of length t: 2/t^2 (t A - B) with A = int_0^t (s^2+u^2)^(p/2) du
// and B = int_0^t u (s^2+u^2)^(p/2) du in closed form.
double axial_mean(double s, double t, double p) {
  const double V = std::asinh(t / s);
  double A = 0.0;
  if (std::abs(p + 1.0) < 1e-14) {
    A = V;
  } else if (p < -1.0) {
    // With y = tanh(v)^2 the integral is B_Y(1/2, b) / 2, b = -(p+1)/2, Y = t^2/(s^2+t^2);
    // written through the complementary tail for accuracy when Y is near 1.
    const double b = -0.5 * (p + 1.0);
    A = 0.5 * (boost::math::beta(0.5, b) - boost::math::beta(b, 0.5, s * s / (s * s + t * t)));
  } else {
    // u = s sinh(v): A = s^(p+1) int_0^V cosh(v)^(p+1) dv.
    A = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
        [p](double v) { return std::pow(std::cosh(v), p + 1.0); }, 0.0, V, 10, 1e-12);
  }
  A *= std::pow(s, p + 1.0);
  const double B = std::abs(p + 2.0) < 1e-14
                       ? 0.5 * std::log1p((t / s) * (t / s))
                       : (std::pow(s * s + t * t, 0.5 * p + 1.0) - std::pow(s, p + 2.0)) / (p + 2.0);
  return 2.0 / (t * t) * (t * A - B);
}


double cylinder_mean_uncached(double a, double t, double p) {
  const double ratio = a / t;
  if (ratio < 1e-3 && p <= -1.0) {
    // Slender-tube asymptotics: cross-section scale a is negligible against t.
    if (std::abs(p + 1.0) < 1e-12) {
      return 2.0 / t *
             (std::log(2.0 * t / a) - 1.0 - disk_distance_log_moment() + disk_distance_moment(1.0) * ratio);
    }
    const double J = 0.5 * std::sqrt(kPi) * std::tgamma(0.5 * (-p - 1.0)) / std::tgamma(-0.5 * p);
    double tail = 1.0 / (-p - 1.0);
    if (std::abs(p + 2.0) > 1e-12) tail += 1.0 / (p + 2.0);
    return 2.0 / t * (J * std::pow(a, p + 1.0) * disk_distance_moment(p + 1.0) - std::pow(t, p + 1.0) * tail);
  }
  // v = 2 w^(1/(p+3)) makes the integrand bounded at w = 0; the slice w < 1e-14
  // contributes below the quadrature tolerance.
  // The integrand bends where the transverse distance a v crosses t; both sides
  // are integrated separately.
  const double m = 1.0 / (p + 3.0);
  const double knee = std::pow(std::min(1.0, 0.5 * t / a), p + 3.0);
  auto g = [a, t, p, m](double w) {
        if (w < 1e-14) return 0.0;
        const double v = 2.0 * std::pow(w, m);
        const double f = unit_disk_distance_density(v);
        if (f == 0.0) return 0.0;
        const double dv = 2.0 * m * std::pow(w, m - 1.0);
        const double g = f * axial_mean(a * v, t, p) * dv;
        return std::isfinite(g) ? g : 0.0;
  };
  if (knee >= 1.0) return tanh_sinh_integral(g, 0.0, 1.0, 1e-10);
  return tanh_sinh_integral(g, 0.0, knee, 1e-10) + tanh_sinh_integral(g, knee, 1.0, 1e-10);
}

}  // namespace

double cylinder_mean_self_energy(double a, double t, double p) {
  if (!(a > 0.0) || !(t > 0.0)) throw std::invalid_argument("cylinder_mean_self_energy: need a, t > 0");
  if (!(p > -3.0) || !(p < 0.0)) throw std::invalid_argument("cylinder_mean_self_energy: need -3 < p < 0");
  static std::map<std::tuple<double, double, double>, double> cache;
  static std::mutex mu;
  return cached(cache, mu, std::make_tuple(a, t, p), [a, t, p] { return cylinder_mean_uncached(a, t, p); });
}

double rectangle_mean_self_energy(double length, double width, double p) {
  if (!(length > 0.0) || !(width > 0.0)) throw std::invalid_argument("rectangle_mean_self_energy: bad sides");
  if (!(p > -2.0) || !(p < 0.0)) throw std::invalid_argument("rectangle_mean_self_energy: need -2 < p < 0");
  // Separations (u, v) have density 4 (L - u)(W - v) / (L W)^2 on [0, L] x [0, W].
  // In polar form the radial integral of r^(p+1) times that polynomial is closed.
  const double L = length;
  const double W = width;
  auto radial = [L, W, p](double theta, double R) {
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    return L * W * std::pow(R, p + 2.0) / (p + 2.0) - (L * s + W * c) * std::pow(R, p + 3.0) / (p + 3.0) +
           c * s * std::pow(R, p + 4.0) / (p + 4.0);
  };
  const double corner = std::atan2(W, L);
  using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
  const double lower = GK::integrate([&](double th) { return radial(th, L / std::cos(th)); }, 0.0, corner, 12, 1e-13);
  const double upper =
      GK::integrate([&](double th) { return radial(th, W / std::sin(th)); }, corner, 0.5 * kPi, 12, 1e-13);
  return 4.0 / (L * L * W * W) * (lower + upper);
}

}  // namespace rieszwb
