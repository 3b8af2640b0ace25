// Copyright Contributors to the splatlab project
// SPDX-License-Identifier: Apache-2.0
//
#include "splatlab/primitives.hpp"

#include <cmath>
#include <numbers>

namespace splatlab {

void
Camera::validate() const {
    require(fx > 0.0 && fy > 0.0, "camera focal lengths must be positive");
    require(near < far, "camera near must be smaller than far");
    require(width > 0 && height > 0, "camera image size must be positive");
    const double err = (rotation * rotation.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff();
    require(err <= 1e-9, "camera rotation is not orthonormal");
}

Camera
Camera::look_at(const Vec3 &eye,
                const Vec3 &target,
                const Vec3 &up,
                double fov_y_deg,
                int width,
                int height,
                double near,
                double far) {
    const Vec3 forward = (target - eye).normalized();
    Vec3 right         = forward.cross(up);
    if (right.norm() < 1e-12) {
        right = forward.cross(Vec3::UnitX());
    }
    right.normalize();
    const Vec3 down = forward.cross(right);

    Camera cam;
    cam.rotation.row(0) = right.transpose();
    cam.rotation.row(1) = down.transpose();
    cam.rotation.row(2) = forward.transpose();
    cam.translation     = -cam.rotation * eye;
    cam.width           = width;
    cam.height          = height;
    const double f      = 0.5 * height / std::tan(0.5 * fov_y_deg * std::numbers::pi / 180.0);
    cam.fx = cam.fy = f;
    cam.cx          = 0.5 * width;
    cam.cy          = 0.5 * height;
    cam.near        = near;
    cam.far         = far;
    return cam;
}

Mat3
quaternion_to_rotation(const Vec4 &q) {
    const double w = q(0), x = q(1), y = q(2), z = q(3);
    Mat3 R;
    R << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
        2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
        2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
    return R;
}

Mat3
covariance3d(const Vec3 &log_scale, const Vec4 &rotation) {
    const Mat3 R  = quaternion_to_rotation(rotation);
    const Vec3 s2 = (2.0 * log_scale).array().exp();
    return R * s2.asDiagonal() * R.transpose();
}

int
shortest_axis(const Vec3 &log_scale) {
    int axis = 0;
    for (int k = 1; k < 3; ++k) {
        if (log_scale(k) < log_scale(axis)) {
            axis = k;
        }
    }
    return axis;
}

Vec3
primitive_normal(const GaussianPrimitive &p, const Camera &cam) {
    const Mat3 R = quaternion_to_rotation(p.rotation.normalized());
    Vec3 n       = cam.rotation * R.col(shortest_axis(p.log_scale));
    if (n.dot(cam.to_camera(p.mu)) > 0.0) {
        n = -n;
    }
    return n;
}

double
footprint_bound(double gamma, double min_alpha, double base_alpha) {
    if (min_alpha <= 0.0) {
        return gamma;
    }
    if (base_alpha < min_alpha) {
        return 0.0;
    }
    return std::min(gamma, std::sqrt(2.0 * std::log(base_alpha / min_alpha)));
}

std::optional<Projected2D>
project(const GaussianPrimitive &p, const Camera &cam, double gamma, double min_alpha) {
    const Vec3 pc  = cam.to_camera(p.mu);
    const double z = pc.z();
    if (z <= cam.near || z >= cam.far) {
        return std::nullopt;
    }
    Eigen::Matrix<double, 2, 3> J;
    J << cam.fx / z, 0.0, -cam.fx * pc.x() / (z * z), 0.0, cam.fy / z, -cam.fy * pc.y() / (z * z);
    const Eigen::Matrix<double, 2, 3> T = J * cam.rotation;
    const Mat3 sigma                    = covariance3d(p.log_scale, p.rotation.normalized());

    Projected2D out;
    out.cov2d = T * sigma * T.transpose();
    out.cov2d(0, 0) += kCov2dFloor;
    out.cov2d(1, 1) += kCov2dFloor;
    out.mu2d  = Vec2(cam.fx * pc.x() / z + cam.cx, cam.fy * pc.y() / z + cam.cy);
    out.depth = z;

    if (min_alpha > 0.0 && p.opacity() < min_alpha) {
        return std::nullopt;
    }
    const double bound = footprint_bound(gamma, min_alpha, p.opacity());
    const double mid  = 0.5 * (out.cov2d(0, 0) + out.cov2d(1, 1));
    const double det  = out.cov2d.determinant();
    const double lmax = mid + std::sqrt(std::max(mid * mid - det, 0.0));
    out.radius_px     = bound * std::sqrt(lmax);

    if (std::isfinite(bound)) {
        // Tight axis-aligned extent of the bound ellipse.
        const double hx = bound * std::sqrt(out.cov2d(0, 0));
        const double hy = bound * std::sqrt(out.cov2d(1, 1));
        if (out.mu2d.x() + hx < 0.0 || out.mu2d.x() - hx > cam.width || out.mu2d.y() + hy < 0.0 ||
            out.mu2d.y() - hy > cam.height) {
            return std::nullopt;
        }
    }
    out.cam_normal = primitive_normal(p, cam);
    return out;
}

double
truncated_alpha(const Projected2D &proj, double base_alpha, const Vec2 &pixel, double gamma) {
    const Mat2 conic = proj.cov2d.inverse();
    const double r2  = mahalanobis_sq(conic, pixel - proj.mu2d);
    if (!(r2 <= gamma * gamma)) {
        return 0.0;
    }
    return base_alpha * std::exp(-0.5 * r2);
}

void
PrimitiveGradient::zero_group(ParamGroup group) {
    switch (group) {
    case ParamGroup::Mu: mu.setZero(); break;
    case ParamGroup::LogScale: log_scale.setZero(); break;
    case ParamGroup::Rotation: rotation.setZero(); break;
    case ParamGroup::Opacity: opacity_logit = 0.0; break;
    case ParamGroup::ShDc: sh_dc.setZero(); break;
    case ParamGroup::ShRest: sh_rest.setZero(); break;
    }
}

PrimitiveGradient &
PrimitiveGradient::operator+=(const PrimitiveGradient &o) {
    mu += o.mu;
    log_scale += o.log_scale;
    rotation += o.rotation;
    opacity_logit += o.opacity_logit;
    sh_dc += o.sh_dc;
    sh_rest += o.sh_rest;
    mean2d += o.mean2d;
    cov2d += o.cov2d;
    return *this;
}

PrimitiveGradient &
PrimitiveGradient::operator*=(double s) {
    mu *= s;
    log_scale *= s;
    rotation *= s;
    opacity_logit *= s;
    sh_dc *= s;
    sh_rest *= s;
    mean2d *= s;
    cov2d *= s;
    return *this;
}

bool
PrimitiveGradient::all_finite() const {
    return mu.allFinite() && log_scale.allFinite() && rotation.allFinite() && std::isfinite(opacity_logit) &&
           sh_dc.allFinite() && sh_rest.allFinite();
}

Gradients
zero_gradients(const std::vector<GaussianPrimitive> &prims) {
    Gradients g;
    g.reserve(prims.size());
    for (const auto &p : prims) {
        g.emplace_back(p.sh.degree);
    }
    return g;
}

std::size_t
parameters_per_primitive(int sh_degree) {
    return 14 + 3 * static_cast<std::size_t>(num_sh_basis(sh_degree) - 1);
}

namespace {

template <typename Fn>
void
for_each_slot(std::size_t rest_rows, Fn &&fn) {
    // fn(offset, group, index-within-group)
    std::size_t k = 0;
    for (int i = 0; i < 3; ++i) fn(k++, ParamGroup::Mu, i);
    for (int i = 0; i < 3; ++i) fn(k++, ParamGroup::LogScale, i);
    for (int i = 0; i < 4; ++i) fn(k++, ParamGroup::Rotation, i);
    fn(k++, ParamGroup::Opacity, 0);
    for (int i = 0; i < 3; ++i) fn(k++, ParamGroup::ShDc, i);
    for (std::size_t i = 0; i < 3 * rest_rows; ++i) fn(k++, ParamGroup::ShRest, static_cast<int>(i));
}

} // namespace

ParamGroup
group_of_offset(std::size_t k) {
    if (k < 3) return ParamGroup::Mu;
    if (k < 6) return ParamGroup::LogScale;
    if (k < 10) return ParamGroup::Rotation;
    if (k < 11) return ParamGroup::Opacity;
    if (k < 14) return ParamGroup::ShDc;
    return ParamGroup::ShRest;
}

Eigen::VectorXd
pack_parameters(const std::vector<GaussianPrimitive> &prims) {
    std::size_t total = 0;
    for (const auto &p : prims) total += parameters_per_primitive(p.sh.degree);
    Eigen::VectorXd flat(static_cast<Eigen::Index>(total));
    std::size_t base = 0;
    for (const auto &p : prims) {
        for_each_slot(p.sh.rest.rows(), [&](std::size_t k, ParamGroup g, int i) {
            double v = 0.0;
            switch (g) {
            case ParamGroup::Mu: v = p.mu(i); break;
            case ParamGroup::LogScale: v = p.log_scale(i); break;
            case ParamGroup::Rotation: v = p.rotation(i); break;
            case ParamGroup::Opacity: v = p.opacity_logit; break;
            case ParamGroup::ShDc: v = p.sh.dc(i); break;
            case ParamGroup::ShRest: v = p.sh.rest(i / 3, i % 3); break;
            }
            flat(static_cast<Eigen::Index>(base + k)) = v;
        });
        base += parameters_per_primitive(p.sh.degree);
    }
    return flat;
}

void
unpack_parameters(const Eigen::VectorXd &flat, std::vector<GaussianPrimitive> &prims) {
    std::size_t base = 0;
    for (auto &p : prims) {
        require(base + parameters_per_primitive(p.sh.degree) <= static_cast<std::size_t>(flat.size()),
                "flat parameter vector too short");
        for_each_slot(p.sh.rest.rows(), [&](std::size_t k, ParamGroup g, int i) {
            const double v = flat(static_cast<Eigen::Index>(base + k));
            switch (g) {
            case ParamGroup::Mu: p.mu(i) = v; break;
            case ParamGroup::LogScale: p.log_scale(i) = v; break;
            case ParamGroup::Rotation: p.rotation(i) = v; break;
            case ParamGroup::Opacity: p.opacity_logit = v; break;
            case ParamGroup::ShDc: p.sh.dc(i) = v; break;
            case ParamGroup::ShRest: p.sh.rest(i / 3, i % 3) = v; break;
            }
        });
        base += parameters_per_primitive(p.sh.degree);
    }
    require(base == static_cast<std::size_t>(flat.size()), "flat parameter vector size mismatch");
}

Eigen::VectorXd
pack_gradients(const Gradients &grads) {
    std::size_t total = 0;
    for (const auto &g : grads) total += 14 + 3 * static_cast<std::size_t>(g.sh_rest.rows());
    Eigen::VectorXd flat(static_cast<Eigen::Index>(total));
    std::size_t base = 0;
    for (const auto &g : grads) {
        for_each_slot(g.sh_rest.rows(), [&](std::size_t k, ParamGroup grp, int i) {
            double v = 0.0;
            switch (grp) {
            case ParamGroup::Mu: v = g.mu(i); break;
            case ParamGroup::LogScale: v = g.log_scale(i); break;
            case ParamGroup::Rotation: v = g.rotation(i); break;
            case ParamGroup::Opacity: v = g.opacity_logit; break;
            case ParamGroup::ShDc: v = g.sh_dc(i); break;
            case ParamGroup::ShRest: v = g.sh_rest(i / 3, i % 3); break;
            }
            flat(static_cast<Eigen::Index>(base + k)) = v;
        });
        base += 14 + 3 * static_cast<std::size_t>(g.sh_rest.rows());
    }
    return flat;
}

} // namespace splatlab
