// Copyright Contributors to the splatlab project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "splatlab/common.hpp"

#include <cstdint>

namespace splatlab {

inline constexpr int kMaxShDegree = 3;

constexpr int
num_sh_basis(int degree) {
    return (degree + 1) * (degree + 1);
}

// Real SH constants in the convention shared by splatting renderers. The basis is orthonormal on
// S^2, so the integral of Y_i * Y_j over the sphere is the Kronecker delta.
namespace sh_constants {
inline constexpr double kC0    = 0.28209479177387814;
inline constexpr double kC1    = 0.4886025119029199;
inline constexpr double kC2[5] = {1.0925484305920792,
                                  -1.0925484305920792,
                                  0.31539156525252005,
                                  -1.0925484305920792,
                                  0.5462742152960396};
inline constexpr double kC3[7] = {-0.5900435899266435,
                                  2.890611442640554,
                                  -0.4570457994644658,
                                  0.3731763325901154,
                                  -0.4570457994644658,
                                  1.445305721320277,
                                  -0.5900435899266435};
} // namespace sh_constants

using ShBasisValues   = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 16, 1>;
using ShBasisGradient = Eigen::Matrix<double, Eigen::Dynamic, 3, 0, 16, 3>;
using ShRest          = Eigen::Matrix<double, Eigen::Dynamic, 3, 0, 15, 3>;

/// Per-primitive color model: a view-independent color plus view-dependent band coefficients.
/// Row b of `rest` multiplies basis function b+1; columns are RGB.
struct ShCoefficients {
    Vec3 dc = Vec3::Zero();
    ShRest rest;
    int degree = 0;

    ShCoefficients() = default;
    explicit ShCoefficients(int deg);

    int rest_rows() const { return num_sh_basis(degree) - 1; }
    /// Throws ContractViolation when rest does not have num_basis-1 rows or the degree is out of range.
    void validate() const;
};

/// Basis values Y_0..Y_{(degree+1)^2-1} at a unit direction.
/// Throws ContractViolation for a non-unit direction and for degree outside [0, 3].
ShBasisValues
eval_basis(const Vec3 &direction, int degree);

/// Basis values and the gradient of each basis polynomial with respect to the direction components.
/// No unit-norm check; callers chain the normalization themselves.
void
eval_basis_with_gradient(const Vec3 &direction,
                         int degree,
                         ShBasisValues &values,
                         ShBasisGradient &gradient);

/// C(d) = dc + sum_b rest_b * Y_{b+1}(d), pre-activation (no clamping).
Vec3
eval_color(const ShCoefficients &coeffs, const Vec3 &direction);

/// Same as eval_color but also rejects coefficients whose degree differs from the run degree.
Vec3
eval_color(const ShCoefficients &coeffs, const Vec3 &direction, int run_degree);

/// Ambiguity indicator: squared L2 norm of all view-dependent coefficients over all channels.
double
indicator(const ShCoefficients &coeffs);

struct MonteCarloEstimate {
    double value          = 0.0;
    double standard_error = 0.0;
};

/// Monte Carlo estimate of the integral over S^2 of |C(d) - dc|^2, summed over channels.
/// Uses a fixed-seed uniform-sphere sampler; requires n_samples >= 1e4.
MonteCarloEstimate
sphere_inconsistency_oracle(const ShCoefficients &coeffs,
                            std::size_t n_samples,
                            std::uint64_t seed = 0x5eed5eedULL);

/// Monte Carlo Gram matrix of the basis: entry (i,j) estimates the integral of Y_i Y_j over S^2,
/// together with per-entry standard errors.
struct BasisGram {
    Eigen::MatrixXd value;
    Eigen::MatrixXd standard_error;
};

BasisGram
basis_gram_monte_carlo(int degree, std::size_t n_samples, std::uint64_t seed = 0x5eed5eedULL);

} // namespace splatlab
