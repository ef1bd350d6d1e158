#pragma once

#include <Eigen/Dense>

namespace pafm {

// Row-major so that row i is timestep i of a (time x feature) window.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

}  // namespace pafm
