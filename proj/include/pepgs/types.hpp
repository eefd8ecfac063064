// Copyright 2026 The pepgs Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace pepgs {

using Scalar = double;

using Vec2 = Eigen::Matrix<Scalar, 2, 1>;
using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
using Vec4 = Eigen::Matrix<Scalar, 4, 1>;
using Mat2 = Eigen::Matrix<Scalar, 2, 2>;
using Mat3 = Eigen::Matrix<Scalar, 3, 3>;
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
// Row-major dense matrix; rows are per-anchor records.
using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Error raised for invalid inputs and runtime failures throughout the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Width of the anchor feature vector.
inline constexpr int kFeatureDim = 32;
/// Width of the per-anchor input row: distance, direction, blended feature.
inline constexpr int kInputDim = kFeatureDim + 3 + 1;

}  // namespace pepgs
