#pragma once

#include <Eigen/Dense>

namespace scoretune {

// Row-major so that each row is one sample / one data point and rows map
// directly onto the on-disk layouts.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

}  // namespace scoretune
