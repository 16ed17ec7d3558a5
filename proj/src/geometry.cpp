#include "rieszwb/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>

namespace rieszwb {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPi = std::numbers::pi;
constexpr double kGolden = kPi * (3.0 - 2.2360679774997896964);  // golden angle
constexpr double kBoundaryTol = 1e-9;

[[noreturn]] void fail(const std::string& msg) { throw GeometryError(msg); }

bool finite(double x) { return std::isfinite(x); }

double ball_volume(int n, double r) {
  return n == 2 ? kPi * r * r : 4.0 / 3.0 * kPi * r * r * r;
}

double sphere_area(int n, double r) { return n == 2 ? 2.0 * kPi * r : 4.0 * kPi * r * r; }

}  // namespace

// ---------------------------------------------------------------------------
// Profile
// ---------------------------------------------------------------------------

double Profile::log_radius(double x1) const {
  switch (kind) {
    case ProfileKind::power:
      if (exponent == 0.0) return 0.0;
      return -exponent * std::log(x1);
    case ProfileKind::exp_s:
      return -std::pow(x1, exponent);
    case ProfileKind::cusp:
      if (x1 <= 0.0) return -kInf;
      return -std::pow(x1, -exponent);
  }
  return 0.0;
}

double Profile::radius(double x1) const { return std::exp(log_radius(x1)); }

double Profile::log_max_on(double a, double b) const {
  return increasing() ? log_radius(b) : log_radius(a);
}

double Profile::log_min_on(double a, double b) const {
  return increasing() ? log_radius(a) : log_radius(b);
}

// ---------------------------------------------------------------------------
// Descriptor helpers
// ---------------------------------------------------------------------------

SetDescriptor make_truncate(SetDescriptor inner, double radius) {
  return Truncate{std::make_shared<const SetDescriptor>(std::move(inner)), radius};
}

SetDescriptor make_band(SetDescriptor inner, Vec center, double r_lo, double r_hi) {
  return Band{std::make_shared<const SetDescriptor>(std::move(inner)), std::move(center), r_lo,
              r_hi};
}

int dimension(const SetDescriptor& d) {
  return std::visit(
      [](const auto& s) -> int {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Ball> || std::is_same_v<T, Sphere> ||
                      std::is_same_v<T, Shell>) {
          return static_cast<int>(s.center.size());
        } else if constexpr (std::is_same_v<T, RotationBody>) {
          return 3;
        } else if constexpr (std::is_same_v<T, HalfCylinder>) {
          return static_cast<int>(s.axis.size());
        } else if constexpr (std::is_same_v<T, Union>) {
          return s.parts.empty() ? 0 : dimension(s.parts.front());
        } else {
          return s.inner ? dimension(*s.inner) : 0;
        }
      },
      d.value);
}

std::string type_name(const SetDescriptor& d) {
  static const char* names[] = {"ball",          "sphere", "shell",    "rotation_body",
                                "half_cylinder", "union",  "truncate", "band"};
  return names[d.value.index()];
}

namespace {

void check_center(const Vec& c, const char* what) {
  if (c.size() != 2 && c.size() != 3) fail(std::string(what) + ": center must have 2 or 3 coordinates");
  if (!c.allFinite()) fail(std::string(what) + ": center must be finite");
}

void check_positive(double v, const std::string& what) {
  if (!(v > 0.0) || !finite(v)) fail(what + " must be a positive finite number");
}

}  // namespace

void validate(const SetDescriptor& d) {
  std::visit(
      [](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Ball> || std::is_same_v<T, Sphere>) {
          check_center(s.center, std::is_same_v<T, Ball> ? "ball" : "sphere");
          check_positive(s.radius, "radius");
        } else if constexpr (std::is_same_v<T, Shell>) {
          check_center(s.center, "shell");
          check_positive(s.r_in, "r_in");
          check_positive(s.r_out, "r_out");
          if (!(s.r_in < s.r_out)) fail("shell: r_in must be smaller than r_out");
        } else if constexpr (std::is_same_v<T, RotationBody>) {
          const Profile& p = s.profile;
          if (!finite(p.x1_min) || p.x1_min < 0.0) fail("rotation_body: x1_min must be finite and >= 0");
          if (!(p.x1_max > p.x1_min)) fail("rotation_body: empty domain (x1_max <= x1_min)");
          if (!finite(p.exponent)) fail("rotation_body: exponent must be finite");
          switch (p.kind) {
            case ProfileKind::power:
              if (p.exponent < 0.0) fail("rotation_body: power profile needs s >= 0");
              if (p.exponent > 0.0 && p.x1_min <= 0.0)
                fail("rotation_body: power profile with s > 0 needs x1_min > 0");
              break;
            case ProfileKind::exp_s:
              if (!(p.exponent > 0.0)) fail("rotation_body: exp_s profile needs s > 0");
              break;
            case ProfileKind::cusp:
              if (!(p.exponent > 0.0)) fail("rotation_body: cusp profile needs beta > 0");
              break;
          }
        } else if constexpr (std::is_same_v<T, HalfCylinder>) {
          if (s.axis.size() != 3) fail("half_cylinder: axis must have 3 coordinates");
          if (!s.axis.allFinite() || s.axis.norm() == 0.0) fail("half_cylinder: axis must be a nonzero vector");
          check_positive(s.radius, "half_cylinder radius");
          if (!finite(s.x1_min)) fail("half_cylinder: x1_min must be finite");
          if (!(s.x1_max > s.x1_min)) fail("half_cylinder: empty domain (x1_max <= x1_min)");
        } else if constexpr (std::is_same_v<T, Union>) {
          if (s.parts.empty()) fail("union: needs at least one part");
          const int n = dimension(s.parts.front());
          for (const auto& p : s.parts) {
            validate(p);
            if (dimension(p) != n) fail("union: parts have different dimensions");
          }
        } else if constexpr (std::is_same_v<T, Truncate>) {
          if (!s.inner) fail("truncate: missing inner descriptor");
          check_positive(s.radius, "truncate radius");
          validate(*s.inner);
        } else if constexpr (std::is_same_v<T, Band>) {
          if (!s.inner) fail("band: missing inner descriptor");
          validate(*s.inner);
          if (s.center.size() != dimension(*s.inner)) fail("band: center dimension mismatch");
          if (!(s.r_lo >= 0.0) || !(s.r_hi > s.r_lo) || !finite(s.r_hi))
            fail("band: radii must satisfy 0 <= r_lo < r_hi < inf");
        }
      },
      d.value);
}

bool contains(const SetDescriptor& d, const Vec& x) {
  return std::visit(
      [&x](const auto& s) -> bool {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Ball>) {
          return (x - s.center).norm() <= s.radius * (1.0 + kBoundaryTol);
        } else if constexpr (std::is_same_v<T, Sphere>) {
          return std::abs((x - s.center).norm() - s.radius) <= s.radius * kBoundaryTol;
        } else if constexpr (std::is_same_v<T, Shell>) {
          const double r = (x - s.center).norm();
          return r >= s.r_in * (1.0 - kBoundaryTol) && r <= s.r_out * (1.0 + kBoundaryTol);
        } else if constexpr (std::is_same_v<T, RotationBody>) {
          const Profile& p = s.profile;
          const double t = x[0];
          const double tol = kBoundaryTol * std::max(1.0, std::abs(t));
          if (t < p.x1_min - tol || t > p.x1_max + tol) return false;
          const double tc = std::clamp(t, p.x1_min, std::isfinite(p.x1_max) ? p.x1_max : t);
          const double rp = std::hypot(x[1], x[2]);
          if (rp == 0.0) return true;
          return std::log(rp) <= p.log_radius(tc) + kBoundaryTol;
        } else if constexpr (std::is_same_v<T, HalfCylinder>) {
          const Vec u = s.axis.normalized();
          const double t = u.dot(x);
          const double tol = kBoundaryTol * std::max(1.0, std::abs(t));
          if (t < s.x1_min - tol || t > s.x1_max + tol) return false;
          return (x - t * u).norm() <= s.radius * (1.0 + kBoundaryTol);
        } else if constexpr (std::is_same_v<T, Union>) {
          for (const auto& p : s.parts)
            if (contains(p, x)) return true;
          return false;
        } else if constexpr (std::is_same_v<T, Truncate>) {
          return x.norm() <= s.radius * (1.0 + kBoundaryTol) && contains(*s.inner, x);
        } else {
          const double r = (x - s.center).norm();
          return r > s.r_lo && r <= s.r_hi * (1.0 + 1e-12) && contains(*s.inner, x);
        }
      },
      d.value);
}

double extent_from(const SetDescriptor& d, const Vec& point) {
  return std::visit(
      [&point](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Ball> || std::is_same_v<T, Sphere>) {
          return (s.center - point).norm() + s.radius;
        } else if constexpr (std::is_same_v<T, Shell>) {
          return (s.center - point).norm() + s.r_out;
        } else if constexpr (std::is_same_v<T, RotationBody>) {
          const Profile& p = s.profile;
          if (!std::isfinite(p.x1_max)) return kInf;
          const double rho = std::exp(p.log_max_on(p.x1_min, p.x1_max));
          return point.norm() + std::hypot(std::max(std::abs(p.x1_min), std::abs(p.x1_max)), rho);
        } else if constexpr (std::is_same_v<T, HalfCylinder>) {
          if (!std::isfinite(s.x1_max)) return kInf;
          return point.norm() +
                 std::hypot(std::max(std::abs(s.x1_min), std::abs(s.x1_max)), s.radius);
        } else if constexpr (std::is_same_v<T, Union>) {
          double m = 0.0;
          for (const auto& p : s.parts) m = std::max(m, extent_from(p, point));
          return m;
        } else if constexpr (std::is_same_v<T, Truncate>) {
          return std::min(point.norm() + s.radius, extent_from(*s.inner, point));
        } else {
          return std::min((s.center - point).norm() + s.r_hi, extent_from(*s.inner, point));
        }
      },
      d.value);
}

bool is_bounded(const SetDescriptor& d) {
  return std::isfinite(extent_from(d, Vec::Zero(dimension(d))));
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

namespace {

const nlohmann::json& req(const nlohmann::json& j, const char* key, const std::string& ctx) {
  if (!j.is_object() || !j.contains(key)) fail(ctx + ": missing field '" + key + "'");
  return j.at(key);
}

double num(const nlohmann::json& j, const char* key, const std::string& ctx) {
  const auto& v = req(j, key, ctx);
  if (v.is_number()) return v.get<double>();
  if (v.is_null()) return kInf;
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "inf" || s == "+inf" || s == "infinity") return kInf;
    if (s == "-inf") return -kInf;
  }
  fail(ctx + ": field '" + key + "' must be a number");
}

Vec vec(const nlohmann::json& j, const char* key, const std::string& ctx) {
  const auto& v = req(j, key, ctx);
  if (!v.is_array()) fail(ctx + ": field '" + key + "' must be an array of numbers");
  Vec out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) fail(ctx + ": field '" + key + "' must be an array of numbers");
    out[static_cast<Eigen::Index>(i)] = v[i].get<double>();
  }
  return out;
}

nlohmann::json num_out(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  return x;
}

std::vector<double> as_std(const Vec& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

void to_json(nlohmann::json& j, const SetDescriptor& d) {
  j = nlohmann::json::object();
  j["type"] = type_name(d);
  std::visit(
      [&j](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Ball> || std::is_same_v<T, Sphere>) {
          j["center"] = as_std(s.center);
          j["radius"] = s.radius;
        } else if constexpr (std::is_same_v<T, Shell>) {
          j["center"] = as_std(s.center);
          j["r_in"] = s.r_in;
          j["r_out"] = s.r_out;
        } else if constexpr (std::is_same_v<T, RotationBody>) {
          const Profile& p = s.profile;
          static const char* kinds[] = {"power", "exp_s", "cusp"};
          j["profile"] = kinds[static_cast<int>(p.kind)];
          j[p.kind == ProfileKind::cusp ? "beta" : "s"] = p.exponent;
          j["x1_min"] = num_out(p.x1_min);
          j["x1_max"] = num_out(p.x1_max);
        } else if constexpr (std::is_same_v<T, HalfCylinder>) {
          j["axis"] = as_std(s.axis);
          j["radius"] = s.radius;
          j["x1_min"] = num_out(s.x1_min);
          j["x1_max"] = num_out(s.x1_max);
        } else if constexpr (std::is_same_v<T, Union>) {
          j["parts"] = nlohmann::json::array();
          for (const auto& p : s.parts) j["parts"].push_back(p);
        } else if constexpr (std::is_same_v<T, Truncate>) {
          j["inner"] = *s.inner;
          j["radius"] = s.radius;
        } else {
          j["inner"] = *s.inner;
          j["center"] = as_std(s.center);
          j["r_lo"] = s.r_lo;
          j["r_hi"] = s.r_hi;
        }
      },
      d.value);
}

void from_json(const nlohmann::json& j, SetDescriptor& d) {
  if (!j.is_object()) fail("set: expected an object");
  const auto& tj = req(j, "type", "set");
  if (!tj.is_string()) fail("set: field 'type' must be a string");
  const auto t = tj.get<std::string>();
  if (t == "ball" || t == "sphere") {
    const Vec c = vec(j, "center", t);
    const double r = num(j, "radius", t);
    d = t == "ball" ? SetDescriptor(Ball{c, r}) : SetDescriptor(Sphere{c, r});
  } else if (t == "shell") {
    d = Shell{vec(j, "center", t), num(j, "r_in", t), num(j, "r_out", t)};
  } else if (t == "rotation_body") {
    Profile p;
    const auto& pj = req(j, "profile", t);
    const std::string pk = pj.is_string() ? pj.get<std::string>() : "";
    if (pk == "power") {
      p.kind = ProfileKind::power;
    } else if (pk == "exp_s") {
      p.kind = ProfileKind::exp_s;
    } else if (pk == "cusp") {
      p.kind = ProfileKind::cusp;
    } else {
      fail("rotation_body: profile must be one of power, exp_s, cusp");
    }
    p.exponent = num(j, p.kind == ProfileKind::cusp ? "beta" : "s", t);
    p.x1_min = num(j, "x1_min", t);
    p.x1_max = num(j, "x1_max", t);
    d = RotationBody{p};
  } else if (t == "half_cylinder") {
    Vec axis = j.contains("axis") ? vec(j, "axis", t) : Vec::Unit(3, 0);
    if (axis.size() == 3 && axis.norm() > 0.0) axis.normalize();
    d = HalfCylinder{axis, num(j, "radius", t), num(j, "x1_min", t), num(j, "x1_max", t)};
  } else if (t == "union") {
    const auto& parts = req(j, "parts", t);
    if (!parts.is_array()) fail("union: field 'parts' must be an array");
    Union u;
    for (const auto& pj : parts) u.parts.push_back(pj.get<SetDescriptor>());
    d = u;
  } else if (t == "truncate") {
    d = make_truncate(req(j, "inner", t).get<SetDescriptor>(), num(j, "radius", t));
  } else if (t == "band") {
    d = make_band(req(j, "inner", t).get<SetDescriptor>(), vec(j, "center", t), num(j, "r_lo", t),
                  num(j, "r_hi", t));
  } else {
    fail("set: unknown type '" + t + "'");
  }
}

// ---------------------------------------------------------------------------
// Cells and clouds
// ---------------------------------------------------------------------------

int CellShape::intrinsic_dim() const {
  switch (kind) {
    case CellKind::lattice:
      return dim;
    case CellKind::skin:
      return dim + 1;
    case CellKind::tube:
      return 3;
  }
  return dim;
}

CellShape CellShape::inverted(double r) const {
  const double s = 1.0 / (r * r);
  CellShape c = *this;
  c.measure = measure * std::pow(s, dim);
  c.thickness = thickness * s;
  c.radius = radius * s;
  return c;
}

namespace {

double equal_measure_radius(const CellShape& c) {
  switch (c.kind) {
    case CellKind::lattice:
    case CellKind::skin:
      if (c.dim == 1) return 0.5 * c.measure;
      if (c.dim == 2) return std::sqrt(c.measure / kPi);
      return std::cbrt(3.0 * c.measure / (4.0 * kPi));
    case CellKind::tube:
      return 0.5 * c.thickness;
  }
  return 0.0;
}

}  // namespace

void PointCloud::check() const {
  const Eigen::Index N = size();
  if (n < 2) fail("cloud: dimension must be >= 2");
  if (nodes.rows() != n) fail("cloud: node coordinate count does not match dimension");
  if (weights.size() != N || cell_radius.size() != N || static_cast<Eigen::Index>(cells.size()) != N)
    fail("cloud: per-node arrays have inconsistent lengths");
  if (!nodes.allFinite()) fail("cloud: non-finite node coordinates");
  for (Eigen::Index i = 0; i < N; ++i) {
    if (!(weights[i] > 0.0) || !finite(weights[i])) fail("cloud: weights must be positive");
    if (!(cell_radius[i] > 0.0) || !finite(cell_radius[i])) fail("cloud: cell radii must be positive");
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(N));
  for (Eigen::Index i = 0; i < N; ++i) order[static_cast<std::size_t>(i)] = i;
  auto less = [this](Eigen::Index a, Eigen::Index b) {
    for (int k = 0; k < n; ++k) {
      if (nodes(k, a) != nodes(k, b)) return nodes(k, a) < nodes(k, b);
    }
    return false;
  };
  std::sort(order.begin(), order.end(), less);
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (!less(order[i - 1], order[i]) && !less(order[i], order[i - 1]))
      fail("cloud: nodes must be pairwise distinct");
  }
}

PointCloud PointCloud::subset(const std::vector<Eigen::Index>& idx) const {
  PointCloud out;
  out.n = n;
  const auto m = static_cast<Eigen::Index>(idx.size());
  out.nodes.resize(n, m);
  out.weights.resize(m);
  out.cell_radius.resize(m);
  out.cells.reserve(idx.size());
  for (Eigen::Index k = 0; k < m; ++k) {
    const Eigen::Index i = idx[static_cast<std::size_t>(k)];
    out.nodes.col(k) = nodes.col(i);
    out.weights[k] = weights[i];
    out.cell_radius[k] = cell_radius[i];
    out.cells.push_back(cells[static_cast<std::size_t>(i)]);
  }
  return out;
}

DiscreteMeasure::DiscreteMeasure(CloudPtr c, Eigen::VectorXd m) : cloud(std::move(c)), masses(std::move(m)) {
  if (!cloud) throw GeometryError("measure: missing cloud");
  if (masses.size() != cloud->size()) throw GeometryError("measure: mass count does not match node count");
  for (Eigen::Index i = 0; i < masses.size(); ++i) {
    if (!(masses[i] >= 0.0) || !finite(masses[i]))
      throw GeometryError("measure: masses must be finite and nonnegative");
  }
}

DiscreteMeasure DiscreteMeasure::zero(CloudPtr c) {
  const auto n = c->size();
  return {std::move(c), Eigen::VectorXd::Zero(n)};
}

DiscreteMeasure DiscreteMeasure::unit_at(CloudPtr c, Eigen::Index i) {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(c->size());
  m[i] = 1.0;
  return {std::move(c), std::move(m)};
}

// ---------------------------------------------------------------------------
// Discretization
// ---------------------------------------------------------------------------

namespace {

struct AnnulusClip {
  Vec center;
  double lo = 0.0;
  double hi = kInf;
};

// Region that discretized nodes must fall into (intersection of constraints).
struct Clip {
  double R = kInf;  // |x| <= R
  std::vector<AnnulusClip> annuli;

  bool admits(const Vec& x) const {
    if (x.norm() > R * (1.0 + kBoundaryTol)) return false;
    for (const auto& a : annuli) {
      const double r = (x - a.center).norm();
      if (!(r > a.lo && r <= a.hi * (1.0 + 1e-12))) return false;
    }
    return true;
  }
  bool trivial() const { return !std::isfinite(R) && annuli.empty(); }
  bool covers_ball(const Vec& c, double r) const {
    if (c.norm() + r > R) return false;
    for (const auto& a : annuli) {
      const double dc = (c - a.center).norm();
      if (dc + r > a.hi || dc - r <= a.lo) return false;
    }
    return true;
  }
  bool misses_ball(const Vec& c, double r) const {
    if (c.norm() - r > R) return true;
    for (const auto& a : annuli) {
      const double dc = (c - a.center).norm();
      if (dc - r > a.hi || dc + r <= a.lo) return true;
    }
    return false;
  }
};

class Builder {
 public:
  explicit Builder(int n, Eigen::Index cap) : n_(n), cap_(cap) {}

  void add(const Vec& x, double weight, const CellShape& cell) {
    if (static_cast<Eigen::Index>(weights_.size()) >= cap_)
      fail("discretize: node count exceeds the configured maximum");
    nodes_.push_back(x);
    weights_.push_back(weight);
    cells_.push_back(cell);
  }
  std::size_t count() const { return nodes_.size(); }
  const Vec& node(std::size_t i) const { return nodes_[i]; }

  void truncate_to(std::size_t m) {
    nodes_.resize(m);
    weights_.resize(m);
    cells_.resize(m);
  }
  void keep(const std::vector<bool>& mask, std::size_t from) {
    std::size_t w = from;
    for (std::size_t i = from; i < nodes_.size(); ++i) {
      if (!mask[i - from]) continue;
      nodes_[w] = nodes_[i];
      weights_[w] = weights_[i];
      cells_[w] = cells_[i];
      ++w;
    }
    truncate_to(w);
  }

  PointCloud finish() const {
    PointCloud c;
    c.n = n_;
    const auto N = static_cast<Eigen::Index>(nodes_.size());
    c.nodes.resize(n_, N);
    c.weights.resize(N);
    c.cell_radius.resize(N);
    c.cells = cells_;
    for (Eigen::Index i = 0; i < N; ++i) {
      const auto k = static_cast<std::size_t>(i);
      c.nodes.col(i) = nodes_[k];
      c.weights[i] = weights_[k];
      c.cell_radius[i] = equal_measure_radius(cells_[k]);
    }
    return c;
  }

 private:
  int n_;
  Eigen::Index cap_;
  std::vector<Vec> nodes_;
  std::vector<double> weights_;
  std::vector<CellShape> cells_;
};

CellShape lattice_cell(int dim, double measure) { return {CellKind::lattice, dim, measure, 0.0, 0.0}; }
CellShape skin_cell(int dim, double lateral, double thickness) {
  return {CellKind::skin, dim, lateral, thickness, 0.0};
}
CellShape tube_cell(double radius, double length) {
  return {CellKind::tube, 1, length, length, radius};
}

// Unit vectors on the sphere (n = 3) or circle (n = 2).
std::vector<Vec> sphere_directions(int n, Eigen::Index N, double phase = 0.0) {
  std::vector<Vec> out;
  out.reserve(static_cast<std::size_t>(N));
  for (Eigen::Index k = 0; k < N; ++k) {
    if (n == 2) {
      const double phi = 2.0 * kPi * (static_cast<double>(k) + 0.5 + phase) / static_cast<double>(N);
      Vec v(2);
      v << std::cos(phi), std::sin(phi);
      out.push_back(v);
    } else {
      const double z = 1.0 - (2.0 * static_cast<double>(k) + 1.0) / static_cast<double>(N);
      const double phi = static_cast<double>(k) * kGolden + 2.0 * kPi * phase;
      const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
      Vec v(3);
      v << s * std::cos(phi), s * std::sin(phi), z;
      out.push_back(v);
    }
  }
  return out;
}

// Share of the sphere taken by the Voronoi cell of each direction (equal shares on the circle).
std::vector<double> sphere_cell_shares(const std::vector<Vec>& dirs) {
  const std::size_t N = dirs.size();
  std::vector<double> share(N, N ? 1.0 / static_cast<double>(N) : 0.0);
  if (N < 4 || dirs[0].size() != 3) return share;
  std::vector<std::size_t> order(N);
  for (std::size_t i = 0; i < N; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dirs[a][2] < dirs[b][2]; });
  std::vector<double> zs(N);
  for (std::size_t k = 0; k < N; ++k) zs[k] = dirs[order[k]][2];
  using P2 = Eigen::Vector2d;
  double total = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    const Eigen::Vector3d p = dirs[i];
    Eigen::Vector3d e1 = std::abs(p[0]) < 0.9 ? Eigen::Vector3d::UnitX() : Eigen::Vector3d::UnitY();
    e1 = (e1 - e1.dot(p) * p).normalized();
    const Eigen::Vector3d e2 = p.cross(e1);
    // Gnomonic projection maps bisecting great circles to lines; clip a square by them.
    for (double reach = 4.0 * std::sqrt(4.0 * kPi / static_cast<double>(N));; reach *= 2.0) {
      const double half = std::min(reach, 2.0);
      std::vector<P2> poly{{-half, -half}, {half, -half}, {half, half}, {-half, half}};
      const auto lo = std::lower_bound(zs.begin(), zs.end(), p[2] - reach) - zs.begin();
      const auto hi = std::upper_bound(zs.begin(), zs.end(), p[2] + reach) - zs.begin();
      for (auto k = lo; k < hi && !poly.empty(); ++k) {
        const std::size_t j = order[static_cast<std::size_t>(k)];
        if (j == i) continue;
        const Eigen::Vector3d q = dirs[j];
        if ((q - p).norm() > reach) continue;
        const P2 nrm(q.dot(e1), q.dot(e2));
        const double rhs = 1.0 - q.dot(p);
        std::vector<P2> next;
        for (std::size_t a = 0; a < poly.size(); ++a) {
          const P2& u = poly[a];
          const P2& v = poly[(a + 1) % poly.size()];
          const double fu = nrm.dot(u) - rhs, fv = nrm.dot(v) - rhs;
          if (fu <= 0.0) next.push_back(u);
          if ((fu < 0.0) != (fv < 0.0) && fu != fv) next.push_back(u + (fu / (fu - fv)) * (v - u));
        }
        poly = std::move(next);
      }
      double far = 0.0, area = 0.0;
      std::vector<Eigen::Vector3d> vs;
      for (const auto& w : poly) vs.push_back((p + w[0] * e1 + w[1] * e2).normalized());
      for (const auto& v : vs) far = std::max(far, (v - p).norm());
      if (2.0 * far > reach && reach < 4.0) continue;
      for (std::size_t a = 0; a < vs.size(); ++a) {
        const Eigen::Vector3d& u = vs[a];
        const Eigen::Vector3d& v = vs[(a + 1) % vs.size()];
        area += 2.0 * std::atan2(std::abs(p.dot(u.cross(v))), 1.0 + p.dot(u) + p.dot(v) + u.dot(v));
      }
      share[i] = area;
      total += area;
      break;
    }
  }
  for (auto& a : share) a /= total;
  return share;
}

Eigen::Index count_on_sphere(int n, double r, double spacing) {
  const double a = sphere_area(n, r);
  const double c = n == 2 ? a / spacing : a / (spacing * spacing);
  return std::max<Eigen::Index>(n == 2 ? 3 : 4, static_cast<Eigen::Index>(std::lround(c)));
}

// Radial layers (lo, hi) covering [0, outer], thickness starting at `first`
// and growing geometrically; the last entry is the core (0, rc).
std::vector<std::pair<double, double>> radial_layers(double outer, double first, double growth,
                                                     double inner = 0.0) {
  std::vector<std::pair<double, double>> out;
  double hi = outer;
  double thk = first;
  while (hi - inner > 1.5 * thk) {
    out.emplace_back(hi - thk, hi);
    hi -= thk;
    thk *= growth;
  }
  if (hi > inner) out.emplace_back(inner, hi);
  return out;
}

void ball_structured(const Vec& c, double r, int res, const DiscretizeOptions& opt, Builder& b) {
  const int n = static_cast<int>(c.size());
  const Eigen::Index Ns =
      n == 2 ? std::max<Eigen::Index>(4, std::lround(kPi * res))
             : std::max<Eigen::Index>(4, std::lround(kPi * res * res));
  const double h = n == 2 ? sphere_area(2, r) / static_cast<double>(Ns)
                          : std::sqrt(sphere_area(3, r) / static_cast<double>(Ns));
  const double tau = opt.skin_fraction * h;
  const double rs = r - 0.5 * tau;
  const double skin_w = (ball_volume(n, r) - ball_volume(n, r - tau)) / static_cast<double>(Ns);
  const double lateral = sphere_area(n, rs) / static_cast<double>(Ns);
  const auto dirs = sphere_directions(n, Ns);
  const auto share = sphere_cell_shares(dirs);
  for (std::size_t k = 0; k < dirs.size(); ++k)
    b.add(c + rs * dirs[k], skin_w * Ns * share[k], skin_cell(n - 1, lateral * Ns * share[k], tau));

  const auto layers = radial_layers(r - tau, 2.0 * h, opt.layer_growth);
  int layer_index = 0;
  for (const auto& [lo, hi] : layers) {
    const double vol = ball_volume(n, hi) - ball_volume(n, lo);
    if (lo <= 0.0) {
      b.add(c, vol, lattice_cell(n, vol));
      continue;
    }
    const double rm = 0.5 * (lo + hi);
    const Eigen::Index N = count_on_sphere(n, rm, hi - lo);
    const double w = vol / static_cast<double>(N);
    for (const auto& u : sphere_directions(n, N, 0.5 * (++layer_index % 2)))
      b.add(c + rm * u, w, lattice_cell(n, w));
  }
}

void shell_structured(const Vec& c, double r_in, double r_out, int res, const DiscretizeOptions& opt,
                      Builder& b) {
  const int n = static_cast<int>(c.size());
  const Eigen::Index Ns =
      n == 2 ? std::max<Eigen::Index>(4, std::lround(kPi * res))
             : std::max<Eigen::Index>(4, std::lround(kPi * res * res));
  const double h = n == 2 ? sphere_area(2, r_out) / static_cast<double>(Ns)
                          : std::sqrt(sphere_area(3, r_out) / static_cast<double>(Ns));
  const double tau = std::min(opt.skin_fraction * h, 0.25 * (r_out - r_in));
  // Outer skin.
  {
    const double rs = r_out - 0.5 * tau;
    const double w = (ball_volume(n, r_out) - ball_volume(n, r_out - tau)) / static_cast<double>(Ns);
    const double lateral = sphere_area(n, rs) / static_cast<double>(Ns);
    const auto dirs = sphere_directions(n, Ns);
    const auto share = sphere_cell_shares(dirs);
    for (std::size_t k = 0; k < dirs.size(); ++k)
      b.add(c + rs * dirs[k], w * Ns * share[k], skin_cell(n - 1, lateral * Ns * share[k], tau));
  }
  // Inner skin.
  {
    const Eigen::Index Ni = count_on_sphere(n, r_in, h);
    const double rs = r_in + 0.5 * tau;
    const double w = (ball_volume(n, r_in + tau) - ball_volume(n, r_in)) / static_cast<double>(Ni);
    const double lateral = sphere_area(n, rs) / static_cast<double>(Ni);
    const auto dirs = sphere_directions(n, Ni, 0.25);
    const auto share = sphere_cell_shares(dirs);
    for (std::size_t k = 0; k < dirs.size(); ++k)
      b.add(c + rs * dirs[k], w * Ni * share[k], skin_cell(n - 1, lateral * Ni * share[k], tau));
  }
  const double lo_all = r_in + tau;
  const double hi_all = r_out - tau;
  if (hi_all <= lo_all) return;
  const auto layers = radial_layers(hi_all, std::min(2.0 * h, hi_all - lo_all), opt.layer_growth, lo_all);
  int layer_index = 0;
  for (const auto& [lo, hi] : layers) {
    const double rm = 0.5 * (lo + hi);
    const Eigen::Index N = count_on_sphere(n, rm, std::max(hi - lo, h));
    const double w = (ball_volume(n, hi) - ball_volume(n, lo)) / static_cast<double>(N);
    for (const auto& u : sphere_directions(n, N, 0.5 * (++layer_index % 2)))
      b.add(c + rm * u, w, lattice_cell(n, w));
  }
}

// Cell-centered cubic grid over a box, keeping cells whose centers satisfy `inside`.
template <class Pred>
void generic_volume(int n, Vec lo, Vec hi, int res, Pred inside, const DiscretizeOptions& opt,
                    Builder& b) {
  const Vec ext = hi - lo;
  if ((ext.array() <= 0.0).any()) return;
  double s = ext.maxCoeff() / std::max(1, res);
  for (int attempt = 0; attempt < 6; ++attempt) {
    Eigen::VectorXi cnt(n);
    double total = 1.0;
    for (int k = 0; k < n; ++k) {
      cnt[k] = std::max(1, static_cast<int>(std::ceil(ext[k] / s)));
      total *= cnt[k];
    }
    if (total > static_cast<double>(opt.max_nodes) * 8.0) fail("discretize: grid too large for node cap");
    const std::size_t start = b.count();
    const double w = std::pow(s, n);
    Vec x(n);
    Eigen::VectorXi idx = Eigen::VectorXi::Zero(n);
    const Vec origin = 0.5 * (lo + hi) - 0.5 * s * cnt.cast<double>();
    while (true) {
      for (int k = 0; k < n; ++k) x[k] = origin[k] + (idx[k] + 0.5) * s;
      if (inside(x)) b.add(x, w, lattice_cell(n, w));
      int k = 0;
      while (k < n && ++idx[k] == cnt[k]) idx[k++] = 0;
      if (k == n) break;
    }
    if (b.count() - start >= 64 || attempt == 5) return;
    b.truncate_to(start);
    s *= 0.5;
  }
}

// Fibonacci nodes on a sphere, kept where `inside` holds, with enough nodes in the kept part.
template <class Pred>
void generic_sphere(const Vec& c, double r, int res, Pred inside, const DiscretizeOptions& opt,
                    Builder& b) {
  const int n = static_cast<int>(c.size());
  const Eigen::Index probe_count = n == 2 ? 4096 : 20000;
  Eigen::Index hits = 0;
  for (const auto& u : sphere_directions(n, probe_count))
    if (inside(Vec(c + r * u))) ++hits;
  if (hits == 0) return;
  const double frac = static_cast<double>(hits) / static_cast<double>(probe_count);
  const double want = n == 2 ? kPi * res : kPi * res * res;
  const auto N = std::min<Eigen::Index>(opt.max_nodes * 4,
                                        std::max<Eigen::Index>(4, std::lround(want / frac)));
  const double w = sphere_area(n, r) / static_cast<double>(N);
  for (const auto& u : sphere_directions(n, N)) {
    const Vec x = c + r * u;
    if (inside(x)) b.add(x, w, lattice_cell(n - 1, w));
  }
}

// Solid of revolution about the line through the origin along `u`.
struct AxisBody {
  Vec u;
  std::function<double(double)> log_rho;
  double t0 = 0.0;
  double t1 = 0.0;
  bool increasing = false;
};

struct Interval {
  double a, b;
};

std::vector<Interval> subtract(const std::vector<Interval>& in, double a, double b) {
  std::vector<Interval> out;
  for (const auto& iv : in) {
    if (b <= iv.a || a >= iv.b) {
      out.push_back(iv);
      continue;
    }
    if (a > iv.a) out.push_back({iv.a, a});
    if (b < iv.b) out.push_back({b, iv.b});
  }
  return out;
}

std::vector<Interval> intersect(const std::vector<Interval>& in, double a, double b) {
  std::vector<Interval> out;
  for (const auto& iv : in) {
    const double lo = std::max(iv.a, a);
    const double hi = std::min(iv.b, b);
    if (hi > lo) out.push_back({lo, hi});
  }
  return out;
}

// Axial coordinate where the log-radius reaches `level` (monotone profile).
double solve_level(const AxisBody& body, double a, double b, double level) {
  for (int it = 0; it < 200; ++it) {
    const double m = 0.5 * (a + b);
    const bool above = body.log_rho(m) >= level;
    if (above == body.increasing) {
      b = m;
    } else {
      a = m;
    }
  }
  return 0.5 * (a + b);
}

void perpendicular_basis(const Vec& u, Vec& e2, Vec& e3) {
  Vec t = std::abs(u[0]) < 0.9 ? Vec::Unit(3, 0) : Vec::Unit(3, 1);
  e2 = (t - t.dot(u) * u).normalized();
  e3 = Vec(3);
  e3 << u[1] * e2[2] - u[2] * e2[1], u[2] * e2[0] - u[0] * e2[2], u[0] * e2[1] - u[1] * e2[0];
}

void axis_body(const AxisBody& body, int res, const Clip& clip, const DiscretizeOptions& opt,
               Builder& b) {
  std::vector<Interval> ivs{{body.t0, body.t1}};
  // Clip by the truncation ball and by annuli centered on the axis.
  ivs = intersect(ivs, -clip.R, clip.R);
  for (const auto& a : clip.annuli) {
    const double sy = body.u.dot(a.center);
    const bool on_axis = (a.center - sy * body.u).norm() <= 1e-12 * std::max(1.0, a.center.norm());
    ivs = intersect(ivs, sy - a.hi, sy + a.hi);
    if (on_axis && a.lo > 0.0) {
      double rho_max = 0.0;
      for (const auto& iv : ivs)
        rho_max = std::max(rho_max, std::exp(std::max(body.log_rho(iv.a), body.log_rho(iv.b))));
      const double cut = std::sqrt(std::max(0.0, a.lo * a.lo - rho_max * rho_max));
      ivs = subtract(ivs, sy - cut, sy + cut);
    }
  }
  // Drop the part of the profile below the representable floor.
  {
    std::vector<Interval> kept;
    for (const auto& iv : ivs) {
      if (!std::isfinite(iv.b) || !std::isfinite(iv.a))
        fail("discretize: unbounded set; wrap it in a truncate descriptor");
      const double la = body.log_rho(iv.a);
      const double lb = body.log_rho(iv.b);
      if (la >= opt.log_radius_floor && lb >= opt.log_radius_floor) {
        kept.push_back(iv);
      } else if (la < opt.log_radius_floor && lb < opt.log_radius_floor) {
        continue;
      } else {
        const double t = solve_level(body, iv.a, iv.b, opt.log_radius_floor);
        if (la < opt.log_radius_floor) {
          if (iv.b > t) kept.push_back({t, iv.b});
        } else if (t > iv.a) {
          kept.push_back({iv.a, t});
        }
      }
    }
    ivs = kept;
  }

  Vec e2, e3;
  perpendicular_basis(body.u, e2, e3);
  const double g = opt.axial_grading;

  for (const auto& iv : ivs) {
    const double len = iv.b - iv.a;
    if (!(len > 0.0)) continue;
    auto step = [&](double t) {
      const double scale = std::max(std::exp(body.log_rho(t)), g * std::abs(t));
      return std::min(len / opt.min_stations, 2.0 * scale / std::max(1, res));
    };
    // Ends of the body (or of its truncation) get a thin cap sheet.
    const bool cap_lo = iv.a == body.t0 || iv.a == -clip.R;
    const bool cap_hi = iv.b == body.t1 || iv.b == clip.R;

    std::vector<double> bounds{iv.a};
    {
      double t = iv.a;
      while (true) {
        const double h = step(t);
        if (t + h >= iv.b || iv.b - (t + h) < 0.5 * h) {
          bounds.push_back(iv.b);
          break;
        }
        t += h;
        bounds.push_back(t);
      }
    }
    const std::size_t S = bounds.size() - 1;

    auto add_cap = [&](double t_face, double dir, double h) {
      const double rho_face = std::exp(std::min(body.log_rho(t_face), body.log_rho(t_face + dir * h)));
      if (rho_face < opt.ring_ratio * h) return;
      const double tau = opt.skin_fraction * h;
      const double rc = rho_face - tau;
      const auto Nc = std::max<Eigen::Index>(1, std::lround(kPi * rc * rc / (h * h)));
      const double lateral = kPi * rc * rc / static_cast<double>(Nc);
      const double tc = t_face + dir * 0.5 * tau;
      for (Eigen::Index k = 0; k < Nc; ++k) {
        const double rr = Nc == 1 ? 0.0 : rc * std::sqrt((static_cast<double>(k) + 0.5) / static_cast<double>(Nc));
        const double phi = static_cast<double>(k) * kGolden;
        const Vec x = tc * body.u + rr * std::cos(phi) * e2 + rr * std::sin(phi) * e3;
        if (clip.admits(x)) b.add(x, lateral * tau, skin_cell(2, lateral, tau));
      }
    };
    if (cap_lo) add_cap(iv.a, 1.0, bounds[1] - bounds[0]);
    if (cap_hi) add_cap(iv.b, -1.0, bounds[S] - bounds[S - 1]);

    for (std::size_t k = 0; k < S; ++k) {
      double a = bounds[k];
      double bb = bounds[k + 1];
      const double h = bb - a;
      const double tau = opt.skin_fraction * h;
      if (k == 0 && cap_lo) a += tau;
      if (k + 1 == S && cap_hi) bb -= tau;
      const double m = 0.5 * (a + bb);
      const double hs = bb - a;
      const double log_mean = (body.log_rho(a) + 4.0 * body.log_rho(m) + body.log_rho(bb)) / 6.0;
      const double rho_mid = std::exp(body.log_rho(m));
      const double phase = 0.5 * static_cast<double>(k % 2);
      if (rho_mid >= opt.ring_ratio * h && rho_mid > 4.0 * tau) {
        const double rho = rho_mid;
        const auto Np = std::max<Eigen::Index>(3, std::lround(2.0 * kPi * rho / h));
        const double rs = rho - 0.5 * tau;
        const double lateral = 2.0 * kPi * rho * hs / static_cast<double>(Np);
        const double w = kPi * (rho * rho - (rho - tau) * (rho - tau)) * hs / static_cast<double>(Np);
        for (Eigen::Index i = 0; i < Np; ++i) {
          const double phi = 2.0 * kPi * (static_cast<double>(i) + phase) / static_cast<double>(Np);
          const Vec x = m * body.u + rs * (std::cos(phi) * e2 + std::sin(phi) * e3);
          if (clip.admits(x)) b.add(x, w, skin_cell(2, lateral, tau));
        }
        // Layers as thick as the axial step, so interior cells stay roughly cubic.
        const double inner = rho - tau;
        const double L = std::max(0.0, std::round(inner / h - 0.5));
        const double delta = inner / (L + 0.5);
        std::vector<std::pair<double, double>> layers{{0.0, 0.5 * delta}};
        for (int q = 0; q < static_cast<int>(L); ++q)
          layers.emplace_back(0.5 * delta + q * delta, q + 1 == static_cast<int>(L) ? inner : 0.5 * delta + (q + 1) * delta);
        int li = 0;
        for (const auto& [lo, hi] : layers) {
          const double vol = kPi * (hi * hi - lo * lo) * hs;
          if (lo <= 0.0) {
            const Vec x = m * body.u;
            if (clip.admits(x)) b.add(x, vol, lattice_cell(3, vol));
            continue;
          }
          const double rm = 0.5 * (lo + hi);
          const auto N = std::max<Eigen::Index>(3, std::lround(2.0 * kPi * rm / (hi - lo)));
          const double wl = vol / static_cast<double>(N);
          const double ph = 0.5 * static_cast<double>((k + static_cast<std::size_t>(++li)) % 2);
          for (Eigen::Index i = 0; i < N; ++i) {
            const double phi = 2.0 * kPi * (static_cast<double>(i) + ph) / static_cast<double>(N);
            const Vec x = m * body.u + rm * (std::cos(phi) * e2 + std::sin(phi) * e3);
            if (clip.admits(x)) b.add(x, wl, lattice_cell(3, wl));
          }
        }
      } else {
        const double rho = std::exp(log_mean);
        const Vec x = m * body.u;
        if (clip.admits(x)) b.add(x, kPi * rho * rho * hs, tube_cell(rho, hs));
      }
    }
  }
}

void discretize_rec(const SetDescriptor& d, int res, const Clip& clip, const DiscretizeOptions& opt,
                    Builder& b);

void discretize_ball_like(const Vec& c, double r_in, double r_out, bool solid, int res, const Clip& clip,
                          const DiscretizeOptions& opt, Builder& b) {
  if (clip.misses_ball(c, r_out)) return;
  const int n = static_cast<int>(c.size());
  const bool concentric = c.norm() <= 1e-14 && clip.annuli.empty();
  if (clip.covers_ball(c, r_out) || (concentric && (solid || clip.R > r_in))) {
    const double ro = std::min(r_out, clip.R);
    if (solid) {
      ball_structured(c, ro, res, opt, b);
    } else {
      shell_structured(c, r_in, ro, res, opt, b);
    }
    return;
  }
  Vec lo = c.array() - r_out;
  Vec hi = c.array() + r_out;
  if (std::isfinite(clip.R)) {
    lo = lo.cwiseMax(Vec::Constant(n, -clip.R));
    hi = hi.cwiseMin(Vec::Constant(n, clip.R));
  }
  for (const auto& a : clip.annuli) {
    lo = lo.cwiseMax(Vec(a.center.array() - a.hi));
    hi = hi.cwiseMin(Vec(a.center.array() + a.hi));
  }
  auto inside = [&](const Vec& x) {
    const double r = (x - c).norm();
    return r <= r_out && (solid || r >= r_in) && clip.admits(x);
  };
  generic_volume(n, lo, hi, res, inside, opt, b);
}

void discretize_rec(const SetDescriptor& d, int res, const Clip& clip, const DiscretizeOptions& opt,
                    Builder& b) {
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Ball>) {
          discretize_ball_like(s.center, 0.0, s.radius, true, res, clip, opt, b);
        } else if constexpr (std::is_same_v<T, Shell>) {
          discretize_ball_like(s.center, s.r_in, s.r_out, false, res, clip, opt, b);
        } else if constexpr (std::is_same_v<T, Sphere>) {
          if (clip.misses_ball(s.center, s.radius)) return;
          const int n = static_cast<int>(s.center.size());
          if (clip.covers_ball(s.center, s.radius)) {
            const Eigen::Index N = n == 2 ? std::max<Eigen::Index>(3, std::lround(kPi * res))
                                          : std::max<Eigen::Index>(3, std::lround(kPi * res * res));
            const double w = sphere_area(n, s.radius) / static_cast<double>(N);
            const auto dirs = sphere_directions(n, N);
            const auto share = sphere_cell_shares(dirs);
            for (std::size_t k = 0; k < dirs.size(); ++k)
              b.add(s.center + s.radius * dirs[k], w * N * share[k], lattice_cell(n - 1, w * N * share[k]));
            return;
          }
          generic_sphere(s.center, s.radius, res, [&](const Vec& x) { return clip.admits(x); }, opt, b);
        } else if constexpr (std::is_same_v<T, RotationBody>) {
          const Profile p = s.profile;
          AxisBody body{Vec::Unit(3, 0), [p](double t) { return p.log_radius(t); }, p.x1_min, p.x1_max,
                        p.increasing()};
          axis_body(body, res, clip, opt, b);
        } else if constexpr (std::is_same_v<T, HalfCylinder>) {
          const double lr = std::log(s.radius);
          AxisBody body{s.axis.normalized(), [lr](double) { return lr; }, s.x1_min, s.x1_max, false};
          axis_body(body, res, clip, opt, b);
        } else if constexpr (std::is_same_v<T, Union>) {
          for (std::size_t k = 0; k < s.parts.size(); ++k) {
            const std::size_t start = b.count();
            discretize_rec(s.parts[k], res, clip, opt, b);
            std::vector<bool> mask(b.count() - start, true);
            for (std::size_t i = start; i < b.count(); ++i) {
              for (std::size_t m = 0; m < k; ++m) {
                if (contains(s.parts[m], b.node(i))) {
                  mask[i - start] = false;
                  break;
                }
              }
            }
            b.keep(mask, start);
          }
        } else if constexpr (std::is_same_v<T, Truncate>) {
          Clip c2 = clip;
          c2.R = std::min(c2.R, s.radius);
          discretize_rec(*s.inner, res, c2, opt, b);
        } else {
          Clip c2 = clip;
          c2.annuli.push_back({s.center, s.r_lo, s.r_hi});
          discretize_rec(*s.inner, res, c2, opt, b);
        }
      },
      d.value);
}

}  // namespace

PointCloud discretize(const SetDescriptor& d, int resolution, const DiscretizeOptions& opt) {
  validate(d);
  if (resolution < 1) fail("discretize: resolution must be >= 1");
  const int n = dimension(d);
  Builder b(n, opt.max_nodes);
  discretize_rec(d, resolution, Clip{}, opt, b);
  PointCloud c = b.finish();
  c.check();
  return c;
}

// ---------------------------------------------------------------------------
// Annuli
// ---------------------------------------------------------------------------

std::pair<double, double> annulus_radii(double ratio, int j, AnnulusMode mode) {
  const double a = std::pow(ratio, j);
  const double b = std::pow(ratio, j + 1);
  return mode == AnnulusMode::shrinking ? std::make_pair(b, a) : std::make_pair(a, b);
}

namespace {

void check_annulus_args(double ratio, int j_lo, int j_hi, AnnulusMode mode) {
  if (!std::isfinite(ratio) || ratio <= 0.0) fail("annulus: ratio must be positive");
  if (ratio == 1.0) fail("ratio must differ from 1");
  if (mode == AnnulusMode::shrinking && !(ratio < 1.0)) fail("annulus: shrinking mode needs ratio in (0,1)");
  if (mode == AnnulusMode::expanding && !(ratio > 1.0)) fail("annulus: expanding mode needs ratio > 1");
  if (j_hi < j_lo) fail("annulus: empty j range");
}

}  // namespace

std::vector<SetDescriptor> annulus_decompose(const SetDescriptor& d, const Vec& y, double ratio,
                                             int j_lo, int j_hi, AnnulusMode mode) {
  validate(d);
  check_annulus_args(ratio, j_lo, j_hi, mode);
  if (y.size() != dimension(d)) fail("annulus: center dimension mismatch");
  std::vector<SetDescriptor> out;
  for (int j = j_lo; j <= j_hi; ++j) {
    const auto [lo, hi] = annulus_radii(ratio, j, mode);
    out.push_back(make_band(d, y, lo, hi));
  }
  return out;
}

std::vector<std::vector<Eigen::Index>> partition_by_annulus(const PointCloud& c, const Vec& y,
                                                            double ratio, int j_lo, int j_hi,
                                                            AnnulusMode mode) {
  check_annulus_args(ratio, j_lo, j_hi, mode);
  std::vector<std::pair<double, double>> radii;
  for (int j = j_lo; j <= j_hi; ++j) radii.push_back(annulus_radii(ratio, j, mode));
  std::vector<std::vector<Eigen::Index>> out(radii.size());
  for (Eigen::Index i = 0; i < c.size(); ++i) {
    const double r = (c.nodes.col(i) - y).norm();
    for (std::size_t k = 0; k < radii.size(); ++k) {
      if (r > radii[k].first && r <= radii[k].second) {
        out[k].push_back(i);
        break;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Kelvin inversion
// ---------------------------------------------------------------------------

PointCloud kelvin_invert_cloud(const PointCloud& c, const Vec& center) {
  if (center.size() != c.n) fail("kelvin: center dimension mismatch");
  PointCloud out = c;
  for (Eigen::Index i = 0; i < c.size(); ++i) {
    const Vec v = c.nodes.col(i) - center;
    const double r2 = v.squaredNorm();
    if (!(r2 > 0.0)) fail("kelvin: a node coincides with the inversion center");
    const double r = std::sqrt(r2);
    out.nodes.col(i) = center + v / r2;
    const auto& cell = c.cells[static_cast<std::size_t>(i)];
    out.cells[static_cast<std::size_t>(i)] = cell.inverted(r);
    out.weights[i] = c.weights[i] * std::pow(r, -2.0 * cell.intrinsic_dim());
    out.cell_radius[i] = c.cell_radius[i] / r2;
  }
  return out;
}

DiscreteMeasure kelvin_transform_measure(const DiscreteMeasure& m, const Vec& center, double alpha) {
  const PointCloud& c = *m.cloud;
  auto img = std::make_shared<const PointCloud>(kelvin_invert_cloud(c, center));
  Eigen::VectorXd out(m.masses.size());
  for (Eigen::Index i = 0; i < c.size(); ++i) {
    const double r = (c.nodes.col(i) - center).norm();
    out[i] = std::pow(r, alpha - c.n) * m.masses[i];
  }
  return {img, out};
}

}  // namespace rieszwb
