// Copyright Contributors to the splatlab project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace splatlab {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// Raised when a caller breaks a documented precondition (shapes, ranges, unit norms).
class ContractViolation : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a loss or oracle produces a non-finite or otherwise unusable number.
class NumericalError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// File and format errors (missing checkpoint, malformed PLY, bad config).
class IoError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

inline void
require(bool condition, const std::string &message) {
    if (!condition) {
        throw ContractViolation(message);
    }
}

/// Number of worker threads. Reads SPLATLAB_THREADS once; falls back to the OpenMP default.
int
thread_count();

/// Override the worker count for the current process; 0 restores the environment/OpenMP default.
void
set_thread_count(int threads);

} // namespace splatlab
