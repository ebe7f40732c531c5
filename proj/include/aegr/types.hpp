#pragma once

#include <Eigen/Dense>

namespace aegr {

// Samples are rows. Row-major keeps row gathers and per-row scans contiguous.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

}  // namespace aegr
