// Copyright Contributors to the splatlab project
// SPDX-License-Identifier: Apache-2.0
//
#include "splatlab/sh_basis.hpp"

#include "splatlab/random.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace splatlab {

using namespace sh_constants;

namespace {

int
checked_degree(int deg) {
    if (deg < 0 || deg > kMaxShDegree) {
        throw ContractViolation("unsupported SH degree " + std::to_string(deg));
    }
    return deg;
}

} // namespace

ShCoefficients::ShCoefficients(int deg)
    : rest(ShRest::Zero(num_sh_basis(checked_degree(deg)) - 1, 3)), degree(deg) {}

void
ShCoefficients::validate() const {
    if (degree < 0 || degree > kMaxShDegree) {
        throw ContractViolation("unsupported SH degree " + std::to_string(degree));
    }
    if (rest.rows() != rest_rows()) {
        throw ContractViolation("SH rest has " + std::to_string(rest.rows()) + " rows, expected " +
                                std::to_string(rest_rows()));
    }
}

namespace {

void
check_unit(const Vec3 &d) {
    if (std::abs(d.norm() - 1.0) > 1e-9) {
        throw ContractViolation("direction is not unit-norm");
    }
}

void
check_degree(int degree) {
    if (degree < 0 || degree > kMaxShDegree) {
        throw ContractViolation("unsupported SH degree " + std::to_string(degree));
    }
}

} // namespace

void
eval_basis_with_gradient(const Vec3 &d, int degree, ShBasisValues &Y, ShBasisGradient &G) {
    check_degree(degree);
    const int n = num_sh_basis(degree);
    Y.resize(n);
    G.setZero(n, 3);
    const double x = d.x(), y = d.y(), z = d.z();

    Y(0) = kC0;
    if (degree < 1) {
        return;
    }
    Y(1) = -kC1 * y;
    Y(2) = kC1 * z;
    Y(3) = -kC1 * x;
    G.row(1) << 0.0, -kC1, 0.0;
    G.row(2) << 0.0, 0.0, kC1;
    G.row(3) << -kC1, 0.0, 0.0;
    if (degree < 2) {
        return;
    }
    const double xx = x * x, yy = y * y, zz = z * z;
    const double xy = x * y, yz = y * z, xz = x * z;
    Y(4) = kC2[0] * xy;
    Y(5) = kC2[1] * yz;
    Y(6) = kC2[2] * (2.0 * zz - xx - yy);
    Y(7) = kC2[3] * xz;
    Y(8) = kC2[4] * (xx - yy);
    G.row(4) << kC2[0] * y, kC2[0] * x, 0.0;
    G.row(5) << 0.0, kC2[1] * z, kC2[1] * y;
    G.row(6) << -2.0 * kC2[2] * x, -2.0 * kC2[2] * y, 4.0 * kC2[2] * z;
    G.row(7) << kC2[3] * z, 0.0, kC2[3] * x;
    G.row(8) << 2.0 * kC2[4] * x, -2.0 * kC2[4] * y, 0.0;
    if (degree < 3) {
        return;
    }
    Y(9)  = kC3[0] * y * (3.0 * xx - yy);
    Y(10) = kC3[1] * xy * z;
    Y(11) = kC3[2] * y * (4.0 * zz - xx - yy);
    Y(12) = kC3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
    Y(13) = kC3[4] * x * (4.0 * zz - xx - yy);
    Y(14) = kC3[5] * z * (xx - yy);
    Y(15) = kC3[6] * x * (xx - 3.0 * yy);
    G.row(9) << 6.0 * kC3[0] * xy, 3.0 * kC3[0] * (xx - yy), 0.0;
    G.row(10) << kC3[1] * yz, kC3[1] * xz, kC3[1] * xy;
    G.row(11) << -2.0 * kC3[2] * xy, kC3[2] * (4.0 * zz - xx - 3.0 * yy), 8.0 * kC3[2] * yz;
    G.row(12) << -6.0 * kC3[3] * xz, -6.0 * kC3[3] * yz, kC3[3] * (6.0 * zz - 3.0 * xx - 3.0 * yy);
    G.row(13) << kC3[4] * (4.0 * zz - 3.0 * xx - yy), -2.0 * kC3[4] * xy, 8.0 * kC3[4] * xz;
    G.row(14) << 2.0 * kC3[5] * xz, -2.0 * kC3[5] * yz, kC3[5] * (xx - yy);
    G.row(15) << 3.0 * kC3[6] * (xx - yy), -6.0 * kC3[6] * xy, 0.0;
}

ShBasisValues
eval_basis(const Vec3 &direction, int degree) {
    check_unit(direction);
    ShBasisValues values;
    ShBasisGradient unused;
    eval_basis_with_gradient(direction, degree, values, unused);
    return values;
}

Vec3
eval_color(const ShCoefficients &coeffs, const Vec3 &direction) {
    coeffs.validate();
    const ShBasisValues Y = eval_basis(direction, coeffs.degree);
    Vec3 color            = coeffs.dc;
    for (int b = 0; b < coeffs.rest.rows(); ++b) {
        color += Y(b + 1) * coeffs.rest.row(b).transpose();
    }
    return color;
}

Vec3
eval_color(const ShCoefficients &coeffs, const Vec3 &direction, int run_degree) {
    if (coeffs.degree != run_degree) {
        throw ContractViolation("SH degree " + std::to_string(coeffs.degree) +
                                " does not match run degree " + std::to_string(run_degree));
    }
    return eval_color(coeffs, direction);
}

double
indicator(const ShCoefficients &coeffs) {
    return coeffs.rest.squaredNorm();
}

MonteCarloEstimate
sphere_inconsistency_oracle(const ShCoefficients &coeffs, std::size_t n_samples, std::uint64_t seed) {
    coeffs.validate();
    require(n_samples >= 10000, "sphere oracle needs at least 1e4 samples");
    Rng rng(seed);
    ShBasisValues Y;
    ShBasisGradient unused;
    // Welford accumulation of the integrand |C(d) - dc|^2.
    double mean = 0.0, m2 = 0.0;
    for (std::size_t s = 0; s < n_samples; ++s) {
        const Vec3 d = rng.unit_vector();
        eval_basis_with_gradient(d, coeffs.degree, Y, unused);
        Vec3 dev = Vec3::Zero();
        for (int b = 0; b < coeffs.rest.rows(); ++b) {
            dev += Y(b + 1) * coeffs.rest.row(b).transpose();
        }
        const double f     = dev.squaredNorm();
        const double delta = f - mean;
        mean += delta / static_cast<double>(s + 1);
        m2 += delta * (f - mean);
    }
    const double area     = 4.0 * std::numbers::pi;
    const double variance = m2 / static_cast<double>(n_samples - 1);
    return {area * mean, area * std::sqrt(variance / static_cast<double>(n_samples))};
}

BasisGram
basis_gram_monte_carlo(int degree, std::size_t n_samples, std::uint64_t seed) {
    check_degree(degree);
    require(n_samples >= 2, "Gram estimate needs at least two samples");
    const int n = num_sh_basis(degree);
    Eigen::MatrixXd sum  = Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd sum2 = Eigen::MatrixXd::Zero(n, n);
    Rng rng(seed);
    ShBasisValues Y;
    ShBasisGradient unused;
    for (std::size_t s = 0; s < n_samples; ++s) {
        eval_basis_with_gradient(rng.unit_vector(), degree, Y, unused);
        for (int i = 0; i < n; ++i) {
            for (int j = i; j < n; ++j) {
                const double f = Y(i) * Y(j);
                sum(i, j) += f;
                sum2(i, j) += f * f;
            }
        }
    }
    const double area = 4.0 * std::numbers::pi;
    const double ns   = static_cast<double>(n_samples);
    BasisGram gram{Eigen::MatrixXd::Zero(n, n), Eigen::MatrixXd::Zero(n, n)};
    for (int i = 0; i < n; ++i) {
        for (int j = i; j < n; ++j) {
            const double mean = sum(i, j) / ns;
            const double var  = std::max(0.0, (sum2(i, j) - ns * mean * mean) / (ns - 1.0));
            gram.value(i, j) = gram.value(j, i) = area * mean;
            gram.standard_error(i, j) = gram.standard_error(j, i) = area * std::sqrt(var / ns);
        }
    }
    return gram;
}

} // namespace splatlab
