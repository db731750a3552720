#pragma once

#include <Eigen/Dense>

namespace optideq {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Largest singular value, from the symmetric eigen-decomposition of W^T W.
double spectral_norm(const Matrix& w);

}  // namespace optideq
