#pragma once

#include <Eigen/Dense>

namespace docmap {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
// Row-per-item storage: token vectors, cell weights, point sets.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace docmap
