// Copyright 2026 The pepgs Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <numbers>
#include <random>

#include "pepgs/types.hpp"

namespace pepgs {

// The std distributions are implementation-defined; these draw directly from
// the engine's bits so seeded runs reproduce across standard libraries.

inline Scalar uniform(std::mt19937_64& rng, Scalar lo, Scalar hi) {
  const Scalar u = static_cast<Scalar>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

inline Scalar normal(std::mt19937_64& rng, Scalar mean = 0, Scalar stddev = 1) {
  Scalar u1 = uniform(rng, 0, 1);
  while (u1 <= 0) u1 = uniform(rng, 0, 1);
  const Scalar u2 = uniform(rng, 0, 1);
  return mean + stddev * std::sqrt(-2 * std::log(u1)) * std::cos(2 * std::numbers::pi * u2);
}

template <class Derived>
void fill_uniform(Eigen::MatrixBase<Derived>& m, std::mt19937_64& rng, Scalar lo, Scalar hi) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = uniform(rng, lo, hi);
}

}  // namespace pepgs
