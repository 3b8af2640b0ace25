// Copyright Contributors to the splatlab project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "splatlab/common.hpp"
#include "splatlab/sh_basis.hpp"

#include <Eigen/Dense>

#include <array>
#include <limits>
#include <optional>
#include <vector>

namespace splatlab {

/// Diagonal floor added to every projected 2D covariance before inversion (pixel^2).
inline constexpr double kCov2dFloor = 0.3;

/// Default truncation bound, in Mahalanobis units of the projected covariance.
inline constexpr double kDefaultGamma = 2.0;

inline constexpr double kInfiniteGamma = std::numeric_limits<double>::infinity();

inline double
sigmoid(double x) {
    return 1.0 / (1.0 + std::exp(-x));
}

inline double
logit(double p) {
    return std::log(p / (1.0 - p));
}

/// One anisotropic Gaussian splat. Rotation is a quaternion (w, x, y, z), kept at unit length by the
/// optimizer; the forward model normalizes it anyway so gradients include the normalization.
struct GaussianPrimitive {
    Vec3 mu               = Vec3::Zero();
    Vec3 log_scale        = Vec3::Zero();
    Vec4 rotation         = Vec4(1.0, 0.0, 0.0, 0.0);
    double opacity_logit  = 0.0;
    ShCoefficients sh     = ShCoefficients(0);

    double opacity() const { return sigmoid(opacity_logit); }
    Vec3 scale() const { return log_scale.array().exp(); }
};

/// Pinhole camera in the OpenCV convention (x right, y down, z forward). Pixel (i, j) is sampled at
/// its center (i + 0.5, j + 0.5).
struct Camera {
    double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
    Mat3 rotation    = Mat3::Identity(); ///< world-to-camera
    Vec3 translation = Vec3::Zero();     ///< world-to-camera
    int width        = 1;
    int height       = 1;
    double near      = 0.01;
    double far       = 100.0;

    /// Throws ContractViolation if fx/fy are not positive, near >= far, or rotation is not orthonormal.
    void validate() const;

    Vec3 center() const { return -rotation.transpose() * translation; }
    Vec3 to_camera(const Vec3 &world) const { return rotation * world + translation; }
    Vec3 to_world(const Vec3 &cam) const { return rotation.transpose() * (cam - translation); }

    /// Camera-space point at depth z (camera z, not ray length) behind pixel coordinate (u, v).
    Vec3 backproject(double u, double v, double z) const {
        return {(u - cx) / fx * z, (v - cy) / fy * z, z};
    }

    /// Camera looking from `eye` at `target`; vertical field of view in degrees.
    static Camera look_at(const Vec3 &eye,
                          const Vec3 &target,
                          const Vec3 &up,
                          double fov_y_deg,
                          int width,
                          int height,
                          double near = 0.01,
                          double far  = 100.0);
};

/// Screen-space footprint of a primitive for one camera.
struct Projected2D {
    Vec2 mu2d        = Vec2::Zero();
    Mat2 cov2d       = Mat2::Identity(); ///< includes the kCov2dFloor conditioning
    double depth     = 0.0;
    Vec3 cam_normal  = Vec3(0.0, 0.0, -1.0);
    double radius_px = 0.0;
};

Mat3
quaternion_to_rotation(const Vec4 &q);

/// R diag(exp(2 log_scale)) R^T for a unit quaternion.
Mat3
covariance3d(const Vec3 &log_scale, const Vec4 &rotation);

/// Mahalanobis radius beyond which a primitive contributes nothing: gamma, further limited by the
/// radius where base_alpha * exp(-r^2/2) drops below min_alpha when min_alpha > 0.
double
footprint_bound(double gamma, double min_alpha, double base_alpha);

/// Local-affine perspective projection of the primitive. Returns nullopt when the mean is not in
/// front of the near plane (or beyond far) or when the footprint at radius gamma misses the image.
/// A positive min_alpha shrinks the footprint to where the opacity can still reach min_alpha.
std::optional<Projected2D>
project(const GaussianPrimitive &p,
        const Camera &cam,
        double gamma     = kDefaultGamma,
        double min_alpha = 0.0);

/// Squared Mahalanobis radius of a pixel position under the projected covariance.
inline double
mahalanobis_sq(const Mat2 &conic, const Vec2 &d) {
    return conic(0, 0) * d.x() * d.x() + 2.0 * conic(0, 1) * d.x() * d.y() + conic(1, 1) * d.y() * d.y();
}

/// base_alpha * exp(-r^2/2) when r <= gamma (inclusive), exactly zero beyond.
double
truncated_alpha(const Projected2D &proj, double base_alpha, const Vec2 &pixel, double gamma);

/// Shortest-axis normal of the primitive in the camera frame, oriented against the
/// direction from the camera centre to the primitive centre.
/// Ties between equal smallest scales resolve to the lower axis index.
Vec3
primitive_normal(const GaussianPrimitive &p, const Camera &cam);

/// Index of the smallest scale axis with the lower-index tie-break.
int
shortest_axis(const Vec3 &log_scale);

enum class ParamGroup : int { Mu = 0, LogScale, Rotation, Opacity, ShDc, ShRest };
inline constexpr int kNumParamGroups = 6;
inline constexpr std::array<const char *, kNumParamGroups> kParamGroupNames = {
    "mu", "log_scale", "rotation", "opacity", "sh_dc", "sh_rest"};

/// Gradient of a scalar objective with respect to one primitive, plus screen-space diagnostics
/// (mean2d and cov2d) summed over the pixels of the last backward pass.
struct PrimitiveGradient {
    Vec3 mu              = Vec3::Zero();
    Vec3 log_scale       = Vec3::Zero();
    Vec4 rotation        = Vec4::Zero();
    double opacity_logit = 0.0;
    Vec3 sh_dc           = Vec3::Zero();
    ShRest sh_rest;
    Vec2 mean2d = Vec2::Zero();
    Mat2 cov2d  = Mat2::Zero();

    PrimitiveGradient() = default;
    explicit PrimitiveGradient(int sh_degree) : sh_rest(ShRest::Zero(num_sh_basis(sh_degree) - 1, 3)) {}

    void zero_group(ParamGroup group);
    PrimitiveGradient &operator+=(const PrimitiveGradient &other);
    PrimitiveGradient &operator*=(double s);
    bool all_finite() const;
};

using Gradients = std::vector<PrimitiveGradient>;

Gradients
zero_gradients(const std::vector<GaussianPrimitive> &prims);

/// Flat parameter layout per primitive: mu(3) log_scale(3) rotation(4) opacity(1) sh_dc(3)
/// sh_rest(3 * rows, row-major).
std::size_t
parameters_per_primitive(int sh_degree);

Eigen::VectorXd
pack_parameters(const std::vector<GaussianPrimitive> &prims);

void
unpack_parameters(const Eigen::VectorXd &flat, std::vector<GaussianPrimitive> &prims);

Eigen::VectorXd
pack_gradients(const Gradients &grads);

/// Parameter group owning flat offset `k` inside one primitive's block.
ParamGroup
group_of_offset(std::size_t k);

} // namespace splatlab
