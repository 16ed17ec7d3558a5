#pragma once

#include <Eigen/Dense>

#include <memory>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

namespace rieszwb {

using Vec = Eigen::VectorXd;

class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Set descriptors
// ---------------------------------------------------------------------------

struct Ball {
  Vec center;
  double radius = 0.0;
};

struct Sphere {
  Vec center;
  double radius = 0.0;
};

struct Shell {
  Vec center;
  double r_in = 0.0;
  double r_out = 0.0;
};

enum class ProfileKind { power, exp_s, cusp };

// Radius of a rotation body about the x1 axis as a function of x1.
//   power:  rho = x1^(-s)
//   exp_s:  rho = exp(-x1^s)
//   cusp:   rho = exp(-x1^(-beta))
struct Profile {
  ProfileKind kind = ProfileKind::power;
  double exponent = 0.0;
  double x1_min = 0.0;
  double x1_max = 0.0;  // may be +infinity

  // Natural log of the radius; finite even where the radius underflows.
  double log_radius(double x1) const;
  double radius(double x1) const;
  bool increasing() const { return kind == ProfileKind::cusp; }
  // Largest log-radius over [a, b] (profiles are monotone).
  double log_max_on(double a, double b) const;
  double log_min_on(double a, double b) const;
};

struct RotationBody {
  Profile profile;
};

// Solid circular cylinder around the line through the origin spanned by `axis`,
// restricted to axial coordinate x1 = <x, axis> in [x1_min, x1_max].
struct HalfCylinder {
  Vec axis;
  double radius = 0.0;
  double x1_min = 0.0;
  double x1_max = 0.0;  // may be +infinity
};

class SetDescriptor;

struct Union {
  std::vector<SetDescriptor> parts;
};

// inner ∩ closed ball of radius `radius` about the origin.
struct Truncate {
  std::shared_ptr<const SetDescriptor> inner;
  double radius = 0.0;
};

// inner ∩ {x : r_lo < |x - center| <= r_hi}.
struct Band {
  std::shared_ptr<const SetDescriptor> inner;
  Vec center;
  double r_lo = 0.0;
  double r_hi = 0.0;
};

class SetDescriptor {
 public:
  using Variant =
      std::variant<Ball, Sphere, Shell, RotationBody, HalfCylinder, Union, Truncate, Band>;

  SetDescriptor() = default;
  template <class T>
  SetDescriptor(T v) : value(std::move(v)) {}  // NOLINT(google-explicit-constructor)

  Variant value;

  template <class T>
  const T* as() const {
    return std::get_if<T>(&value);
  }
};

SetDescriptor make_truncate(SetDescriptor inner, double radius);
SetDescriptor make_band(SetDescriptor inner, Vec center, double r_lo, double r_hi);

int dimension(const SetDescriptor& d);
std::string type_name(const SetDescriptor& d);
// Throws GeometryError on degenerate or inconsistent descriptors.
void validate(const SetDescriptor& d);
// Membership with a small relative tolerance on boundaries.
bool contains(const SetDescriptor& d, const Vec& x);
// sup |x - point| over the set; +infinity for unbounded sets.
double extent_from(const SetDescriptor& d, const Vec& point);
bool is_bounded(const SetDescriptor& d);

void to_json(nlohmann::json& j, const SetDescriptor& d);
void from_json(const nlohmann::json& j, SetDescriptor& d);

// ---------------------------------------------------------------------------
// Point clouds
// ---------------------------------------------------------------------------

// Local structure of the cell represented by a node; consumed by the kernel
// diagonal rule.
//   lattice: node of a locally uniform lattice of dimension `dim`; `measure`
//            is the cell's dim-dimensional measure.
//   skin:    thin boundary sheet of a solid body; `measure` is the lateral
//            (dim-dimensional) cell measure, `thickness` the sheet thickness.
//   tube:    thin solid cylinder of radius `radius` and length `thickness`.
enum class CellKind { lattice, skin, tube };

struct CellShape {
  CellKind kind = CellKind::lattice;
  int dim = 0;
  double measure = 0.0;
  double thickness = 0.0;
  double radius = 0.0;

  int intrinsic_dim() const;
  // Shape after Kelvin inversion at distance r from the inversion center.
  CellShape inverted(double r) const;
};

struct PointCloud {
  int n = 0;
  Eigen::MatrixXd nodes;  // n x N, one node per column
  Eigen::VectorXd weights;
  Eigen::VectorXd cell_radius;
  std::vector<CellShape> cells;

  Eigen::Index size() const { return nodes.cols(); }
  bool empty() const { return nodes.cols() == 0; }
  Vec node(Eigen::Index i) const { return nodes.col(i); }
  double total_weight() const { return weights.sum(); }
  // Throws GeometryError if an invariant fails (positive weights, distinct nodes, ...).
  void check() const;
  // Subcloud with the given node indices (in order).
  PointCloud subset(const std::vector<Eigen::Index>& idx) const;
};

using CloudPtr = std::shared_ptr<const PointCloud>;

struct DiscreteMeasure {
  CloudPtr cloud;
  Eigen::VectorXd masses;

  DiscreteMeasure() = default;
  DiscreteMeasure(CloudPtr c, Eigen::VectorXd m);
  static DiscreteMeasure zero(CloudPtr c);
  static DiscreteMeasure unit_at(CloudPtr c, Eigen::Index i);

  double total_mass() const { return masses.sum(); }
  Eigen::Index size() const { return masses.size(); }
};

struct DiscretizeOptions {
  // Skin sheet thickness as a fraction of the local node spacing.
  double skin_fraction = 1e-3;
  // Thickness growth factor of interior layers.
  double layer_growth = 2.0;
  // Axial spacing grows like grading * |x1| far from the axis origin.
  double axial_grading = 0.25;
  // Stations with profile radius below ring_ratio * spacing become tubes.
  double ring_ratio = 0.5;
  // Minimum number of axial stations on any discretized axial interval.
  int min_stations = 16;
  // Log of the smallest representable profile radius; thinner parts are skipped.
  double log_radius_floor = -345.38776394910684;  // ln(1e-150), keeps tube volumes rho^2 h representable
  // Upper bound on nodes produced by one call.
  Eigen::Index max_nodes = 200000;
};

// Resolution r sets the node spacing to roughly (characteristic length) * 2 / r.
PointCloud discretize(const SetDescriptor& d, int resolution, const DiscretizeOptions& opt = {});

enum class AnnulusMode { shrinking, expanding };

// A_j = A ∩ {ratio^(j+1) < |x - y| <= ratio^j} (shrinking) or
// A ∩ {ratio^j < |x - y| <= ratio^(j+1)} (expanding), j = j_lo..j_hi.
std::vector<SetDescriptor> annulus_decompose(const SetDescriptor& d, const Vec& y, double ratio,
                                             int j_lo, int j_hi, AnnulusMode mode);
// Radii (lo, hi] of slice j.
std::pair<double, double> annulus_radii(double ratio, int j, AnnulusMode mode);
// Assigns each node of a cloud to its slice; nodes outside every slice go to no group.
std::vector<std::vector<Eigen::Index>> partition_by_annulus(const PointCloud& c, const Vec& y,
                                                            double ratio, int j_lo, int j_hi,
                                                            AnnulusMode mode);

// x -> center + (x - center)/|x - center|^2; weights scale by r^(-2d).
PointCloud kelvin_invert_cloud(const PointCloud& c, const Vec& center);
// Mass at image node = |x - center|^(alpha - n) * mass at x.
DiscreteMeasure kelvin_transform_measure(const DiscreteMeasure& m, const Vec& center, double alpha);

}  // namespace rieszwb
