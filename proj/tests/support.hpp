#pragma once

#include <Eigen/Dense>
#include <memory>

#include "rieszwb/geometry.hpp"

namespace test_support {

inline constexpr double kPi = 3.14159265358979323846;

// Cloud of isolated lattice cells at the given points.
inline rieszwb::CloudPtr point_cloud(const Eigen::MatrixXd& pts, double cell_measure = 1e-3) {
  rieszwb::PointCloud c;
  c.n = static_cast<int>(pts.rows());
  c.nodes = pts;
  const Eigen::Index N = pts.cols();
  c.weights = Eigen::VectorXd::Constant(N, cell_measure);
  c.cell_radius = Eigen::VectorXd::Constant(N, std::cbrt(cell_measure));
  c.cells.assign(static_cast<std::size_t>(N),
                 rieszwb::CellShape{rieszwb::CellKind::lattice, c.n, cell_measure, 0.0, 0.0});
  c.check();
  return std::make_shared<const rieszwb::PointCloud>(std::move(c));
}

inline rieszwb::CloudPtr shared(rieszwb::PointCloud c) {
  return std::make_shared<const rieszwb::PointCloud>(std::move(c));
}

}  // namespace test_support
