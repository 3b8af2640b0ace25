// Copyright Contributors to the splatlab project
// SPDX-License-Identifier: Apache-2.0
//
#include "splatlab/rasterizer.hpp"

#include <algorithm>
#include <cmath>

namespace splatlab {

namespace {

constexpr double kDepthEps = 1e-8;

struct PixelRange {
    int x0, x1, y0, y1; // inclusive; empty when x0 > x1 or y0 > y1
};

// Pixels whose centers can fall inside the bound ellipse of a primitive.
PixelRange
footprint_pixels(const ProjectionCache &c, const RenderOptions &opt, int width, int height) {
    const double bound = footprint_bound(opt.gamma, opt.min_alpha, c.base);
    if (!std::isfinite(bound)) {
        return {0, width - 1, 0, height - 1};
    }
    const double hx = bound * std::sqrt(c.proj.cov2d(0, 0));
    const double hy = bound * std::sqrt(c.proj.cov2d(1, 1));
    const Vec2 &m   = c.proj.mu2d;
    PixelRange r;
    r.x0 = static_cast<int>(std::max(0.0, std::ceil(m.x() - hx - 0.5)));
    r.x1 = static_cast<int>(std::min(width - 1.0, std::floor(m.x() + hx - 0.5)));
    r.y0 = static_cast<int>(std::max(0.0, std::ceil(m.y() - hy - 0.5)));
    r.y1 = static_cast<int>(std::min(height - 1.0, std::floor(m.y() + hy - 0.5)));
    return r;
}

void
check_adjoint(const Image &img, int width, int height, int channels, const char *name) {
    if (img.empty()) {
        return;
    }
    if (img.width != width || img.height != height || img.channels != channels) {
        throw ContractViolation(std::string("adjoint image '") + name + "' has the wrong shape");
    }
}

Vec3
world_normal_column(const Mat3 &R, int axis) {
    return R.col(axis);
}

} // namespace

RenderOutputs
render(const std::vector<GaussianPrimitive> &prims,
       const Camera &cam,
       const std::vector<int> &selection,
       const RenderOptions &options) {
    require(!prims.empty(), "render needs at least one primitive");
    cam.validate();
    require(options.gamma > 0.0, "gamma must be positive");
    require(options.tile_size > 0, "tile size must be positive");

    const int W = cam.width, H = cam.height;
    const int n = static_cast<int>(prims.size());
    RenderOutputs out;
    out.width     = W;
    out.height    = H;
    out.options   = options;
    out.color     = Image(W, H, 3);
    out.depth     = Image(W, H, 1);
    out.normal    = Image(W, H, 3);
    out.acc_alpha = Image(W, H, 1);
    out.mask      = Image(W, H, 1);
    out.selected.assign(prims.size(), 0);
    for (const int s : selection) {
        require(s >= 0 && s < n, "selection index out of range");
        out.selected[s] = 1;
    }

    out.projections.resize(prims.size());
    const Vec3 center = cam.center();
    const int threads = thread_count();
#pragma omp parallel for schedule(static) num_threads(threads)
    for (int i = 0; i < n; ++i) {
        const GaussianPrimitive &p = prims[i];
        ProjectionCache &c         = out.projections[i];
        const auto proj            = project(p, cam, options.gamma, options.min_alpha);
        if (!proj) {
            continue;
        }
        c.visible   = true;
        c.proj      = *proj;
        c.conic     = proj->cov2d.inverse();
        c.base      = p.opacity();
        c.cam_point = cam.to_camera(p.mu);
        const Vec3 v = p.mu - center;
        c.view_dist  = v.norm();
        c.view_dir   = c.view_dist > 0.0 ? Vec3(v / c.view_dist) : Vec3::UnitZ();
        ShBasisValues Y;
        ShBasisGradient G;
        eval_basis_with_gradient(c.view_dir, p.sh.degree, Y, G);
        c.color = p.sh.dc;
        for (int b = 0; b < p.sh.rest.rows(); ++b) {
            c.color += Y(b + 1) * p.sh.rest.row(b).transpose();
        }
        c.normal_axis = shortest_axis(p.log_scale);
        const Vec3 wn = world_normal_column(quaternion_to_rotation(p.rotation.normalized()), c.normal_axis);
        c.normal_sign = (cam.rotation * wn).dot(c.cam_point) > 0.0 ? -1.0 : 1.0;
    }

    for (int i = 0; i < n; ++i) {
        if (out.projections[i].visible) {
            out.depth_order.push_back(i);
        }
    }
    std::stable_sort(out.depth_order.begin(), out.depth_order.end(), [&](int a, int b) {
        const double da = out.projections[a].proj.depth, db = out.projections[b].proj.depth;
        return da < db || (da == db && a < b);
    });

    const int ts      = options.tile_size;
    const int tiles_x = (W + ts - 1) / ts;
    const int tiles_y = (H + ts - 1) / ts;
    const int ntiles  = tiles_x * tiles_y;
    std::vector<std::vector<int>> tile_lists(ntiles);
    for (const int i : out.depth_order) {
        const PixelRange r = footprint_pixels(out.projections[i], options, W, H);
        if (r.x0 > r.x1 || r.y0 > r.y1) {
            continue;
        }
        for (int ty = r.y0 / ts; ty <= r.y1 / ts; ++ty) {
            for (int tx = r.x0 / ts; tx <= r.x1 / ts; ++tx) {
                tile_lists[ty * tiles_x + tx].push_back(i);
            }
        }
    }

    const std::size_t npix = out.color.pixel_count();
    std::vector<std::size_t> counts(npix, 0), local_start(npix, 0);
    std::vector<std::vector<BlendRecord>> tile_records(ntiles);
    const double gamma2 = options.gamma * options.gamma;

#pragma omp parallel for schedule(dynamic) num_threads(threads)
    for (int t = 0; t < ntiles; ++t) {
        const int tx = t % tiles_x, ty = t / tiles_x;
        const std::vector<int> &list  = tile_lists[t];
        std::vector<BlendRecord> &buf = tile_records[t];
        for (int y = ty * ts; y < std::min(H, (ty + 1) * ts); ++y) {
            for (int x = tx * ts; x < std::min(W, (tx + 1) * ts); ++x) {
                const std::size_t p = static_cast<std::size_t>(y) * W + x;
                local_start[p]      = buf.size();
                const Vec2 pix      = pixel_center(x, y);
                double T = 1.0, acc = 0.0, zsum = 0.0, msum = 0.0;
                Vec3 csum = Vec3::Zero(), nsum = Vec3::Zero();
                for (const int i : list) {
                    const ProjectionCache &c = out.projections[i];
                    const double r2          = mahalanobis_sq(c.conic, pix - c.proj.mu2d);
                    if (!(r2 <= gamma2)) {
                        continue;
                    }
                    const double alpha = c.base * std::exp(-0.5 * r2);
                    if (options.min_alpha > 0.0 && alpha < options.min_alpha) {
                        continue;
                    }
                    const double w = alpha * T;
                    buf.push_back({i, w, c.color, alpha, T});
                    csum += w * c.color;
                    acc += w;
                    zsum += w * c.proj.depth;
                    nsum += w * c.proj.cam_normal;
                    if (out.selected[i]) {
                        msum += w;
                    }
                    T *= 1.0 - alpha;
                    if (options.early_termination && T < options.termination_threshold) {
                        break;
                    }
                }
                counts[p] = buf.size() - local_start[p];
                out.color.set_rgb(x, y, csum);
                out.acc_alpha.at(x, y) = acc;
                out.depth.at(x, y)     = zsum / std::max(acc, kDepthEps);
                const double nn        = nsum.norm();
                out.normal.set_rgb(x, y, nn > 0.0 ? Vec3(nsum / nn) : Vec3::Zero());
                out.mask.at(x, y) = msum;
            }
        }
    }

    out.offsets.assign(npix + 1, 0);
    for (std::size_t p = 0; p < npix; ++p) {
        out.offsets[p + 1] = out.offsets[p] + counts[p];
    }
    out.records.resize(out.offsets[npix]);
#pragma omp parallel for schedule(static) num_threads(threads)
    for (int t = 0; t < ntiles; ++t) {
        const int tx = t % tiles_x, ty = t / tiles_x;
        for (int y = ty * ts; y < std::min(H, (ty + 1) * ts); ++y) {
            for (int x = tx * ts; x < std::min(W, (tx + 1) * ts); ++x) {
                const std::size_t p = static_cast<std::size_t>(y) * W + x;
                std::copy_n(tile_records[t].begin() + static_cast<std::ptrdiff_t>(local_start[p]), counts[p],
                            out.records.begin() + static_cast<std::ptrdiff_t>(out.offsets[p]));
            }
        }
    }
    return out;
}

namespace {

struct RecordAdjoint {
    double dalpha = 0.0;
    Vec3 dcolor   = Vec3::Zero();
    double ddepth = 0.0;
    Vec3 dnormal  = Vec3::Zero();
};

// Gradient of the rotation matrix entries pushed onto the unnormalized quaternion components.
Vec4
rotation_to_quaternion_grad(const Mat3 &dR, const Vec4 &q_raw) {
    const double qn = q_raw.norm();
    const Vec4 q    = q_raw / qn;
    const double w = q(0), x = q(1), y = q(2), z = q(3);
    Vec4 dq;
    dq(0) = 2.0 * (-z * dR(0, 1) + y * dR(0, 2) + z * dR(1, 0) - x * dR(1, 2) - y * dR(2, 0) + x * dR(2, 1));
    dq(1) = 2.0 * (y * dR(0, 1) + z * dR(0, 2) + y * dR(1, 0) - 2.0 * x * dR(1, 1) - w * dR(1, 2) +
                   z * dR(2, 0) + w * dR(2, 1) - 2.0 * x * dR(2, 2));
    dq(2) = 2.0 * (-2.0 * y * dR(0, 0) + x * dR(0, 1) + w * dR(0, 2) + x * dR(1, 0) + z * dR(1, 2) -
                   w * dR(2, 0) + z * dR(2, 1) - 2.0 * y * dR(2, 2));
    dq(3) = 2.0 * (-2.0 * z * dR(0, 0) - w * dR(0, 1) + x * dR(0, 2) + w * dR(1, 0) - 2.0 * z * dR(1, 1) +
                   y * dR(1, 2) + x * dR(2, 0) + y * dR(2, 1));
    return (dq - q * q.dot(dq)) / qn;
}

} // namespace

Gradients
backward(const RenderOutputs &out,
         const RenderAdjoints &adj,
         const std::vector<GaussianPrimitive> &prims,
         const Camera &cam) {
    const int W = out.width, H = out.height;
    require(prims.size() == out.projections.size(), "primitive count differs from the rendered set");
    require(cam.width == W && cam.height == H, "camera does not match the rendered image size");
    check_adjoint(adj.color, W, H, 3, "color");
    check_adjoint(adj.depth, W, H, 1, "depth");
    check_adjoint(adj.normal, W, H, 3, "normal");
    check_adjoint(adj.acc_alpha, W, H, 1, "acc_alpha");
    check_adjoint(adj.mask, W, H, 1, "mask");
    require(adj.record_color.empty() || adj.record_color.size() == out.records.size(),
            "record color adjoint must match the record count");

    const std::size_t nrec = out.records.size();
    const int npix         = W * H;
    const int threads      = thread_count();
    std::vector<RecordAdjoint> radj(nrec);
    std::vector<int> record_pixel(nrec);

#pragma omp parallel for schedule(dynamic, 64) num_threads(threads)
    for (int p = 0; p < npix; ++p) {
        const std::size_t b = out.offsets[p], e = out.offsets[p + 1];
        for (std::size_t k = b; k < e; ++k) {
            record_pixel[k] = p;
        }
        if (b == e) {
            continue;
        }
        const int x = p % W, y = p / W;
        const Vec3 gC   = adj.color.empty() ? Vec3::Zero() : adj.color.rgb(x, y);
        const double gD = adj.depth.empty() ? 0.0 : adj.depth.at(x, y);
        const Vec3 gN   = adj.normal.empty() ? Vec3::Zero() : adj.normal.rgb(x, y);
        const double gA = adj.acc_alpha.empty() ? 0.0 : adj.acc_alpha.at(x, y);
        const double gM = adj.mask.empty() ? 0.0 : adj.mask.at(x, y);

        const double A = out.acc_alpha.at(x, y);
        const double D = out.depth.at(x, y);
        Vec3 dv        = Vec3::Zero();
        if (gN.squaredNorm() > 0.0) {
            Vec3 v = Vec3::Zero();
            for (std::size_t k = b; k < e; ++k) {
                v += out.records[k].weight * out.projections[out.records[k].primitive_index].proj.cam_normal;
            }
            const double vn = v.norm();
            if (vn > 0.0) {
                const Vec3 N = v / vn;
                dv           = (gN - N * N.dot(gN)) / vn;
            }
        }
        const double inv_a = 1.0 / std::max(A, kDepthEps);

        double S = 0.0;
        for (std::size_t k = e; k-- > b;) {
            const BlendRecord &r     = out.records[k];
            const ProjectionCache &c = out.projections[r.primitive_index];
            const double dDdw        = A > kDepthEps ? (c.proj.depth - D) * inv_a : c.proj.depth * inv_a;
            double g = gC.dot(r.color) + gA + gD * dDdw + dv.dot(c.proj.cam_normal);
            if (out.selected[r.primitive_index]) {
                g += gM;
            }
            RecordAdjoint &ra = radj[k];
            ra.dalpha         = r.transmittance * (g - S);
            S                 = g * r.alpha_used + (1.0 - r.alpha_used) * S;
            ra.dcolor         = r.weight * gC;
            if (!adj.record_color.empty()) {
                ra.dcolor += adj.record_color[k];
            }
            ra.ddepth  = gD * r.weight * inv_a;
            ra.dnormal = r.weight * dv;
        }
    }

    // Records grouped by primitive, in record order, so each primitive reduces in a fixed order.
    const int n = static_cast<int>(prims.size());
    std::vector<std::size_t> prim_offsets(prims.size() + 1, 0);
    for (const BlendRecord &r : out.records) {
        ++prim_offsets[r.primitive_index + 1];
    }
    for (int i = 0; i < n; ++i) {
        prim_offsets[i + 1] += prim_offsets[i];
    }
    std::vector<std::size_t> by_prim(nrec);
    {
        std::vector<std::size_t> cursor(prim_offsets.begin(), prim_offsets.end() - 1);
        for (std::size_t k = 0; k < nrec; ++k) {
            by_prim[cursor[out.records[k].primitive_index]++] = k;
        }
    }

    Gradients grads = zero_gradients(prims);
    const Mat3 &Wr  = cam.rotation;

#pragma omp parallel for schedule(dynamic, 16) num_threads(threads)
    for (int i = 0; i < n; ++i) {
        if (prim_offsets[i] == prim_offsets[i + 1]) {
            continue;
        }
        const GaussianPrimitive &prim = prims[i];
        const ProjectionCache &c      = out.projections[i];
        PrimitiveGradient &g          = grads[i];

        Mat2 dconic   = Mat2::Zero();
        Vec2 dmu2d    = Vec2::Zero();
        double dlogit = 0.0, dz = 0.0;
        Vec3 dcolor = Vec3::Zero(), dn = Vec3::Zero();
        for (std::size_t j = prim_offsets[i]; j < prim_offsets[i + 1]; ++j) {
            const std::size_t k    = by_prim[j];
            const BlendRecord &r   = out.records[k];
            const RecordAdjoint &a = radj[k];
            const int p            = record_pixel[k];
            const Vec2 d           = pixel_center(p % W, p / W) - c.proj.mu2d;
            dlogit += a.dalpha * r.alpha_used * (1.0 - c.base);
            const double dr2 = -0.5 * a.dalpha * r.alpha_used;
            dconic += dr2 * d * d.transpose();
            dmu2d += dr2 * (-2.0 * c.conic * d);
            dcolor += a.dcolor;
            dz += a.ddepth;
            dn += a.dnormal;
        }

        const Mat2 dcov2d = -c.conic * dconic * c.conic;
        g.mean2d          = dmu2d;
        g.cov2d           = dcov2d;
        g.opacity_logit   = dlogit;

        const double x = c.cam_point.x(), y = c.cam_point.y(), z = c.cam_point.z();
        const double z2 = z * z, z3 = z2 * z;
        Eigen::Matrix<double, 2, 3> J;
        J << cam.fx / z, 0.0, -cam.fx * x / z2, 0.0, cam.fy / z, -cam.fy * y / z2;
        const Eigen::Matrix<double, 2, 3> T = J * Wr;
        const Vec4 qn                       = prim.rotation.normalized();
        const Mat3 R                        = quaternion_to_rotation(qn);
        const Vec3 s2                       = (2.0 * prim.log_scale).array().exp();
        const Mat3 sigma                    = R * s2.asDiagonal() * R.transpose();

        const Mat3 dsigma                    = T.transpose() * dcov2d * T;
        const Eigen::Matrix<double, 2, 3> dT = 2.0 * dcov2d * T * sigma;
        const Eigen::Matrix<double, 2, 3> dJ = dT * Wr.transpose();

        Vec3 dpc;
        dpc.x() = dmu2d.x() * cam.fx / z - dJ(0, 2) * cam.fx / z2;
        dpc.y() = dmu2d.y() * cam.fy / z - dJ(1, 2) * cam.fy / z2;
        dpc.z() = -dmu2d.x() * cam.fx * x / z2 - dmu2d.y() * cam.fy * y / z2 - dJ(0, 0) * cam.fx / z2 +
                  dJ(0, 2) * 2.0 * cam.fx * x / z3 - dJ(1, 1) * cam.fy / z2 + dJ(1, 2) * 2.0 * cam.fy * y / z3 +
                  dz;
        g.mu = Wr.transpose() * dpc;

        // View-dependent color: coefficients and the direction from the camera center.
        ShBasisValues Y;
        ShBasisGradient G;
        eval_basis_with_gradient(c.view_dir, prim.sh.degree, Y, G);
        g.sh_dc     = dcolor;
        Vec3 ddir   = Vec3::Zero();
        for (int b = 0; b < prim.sh.rest.rows(); ++b) {
            g.sh_rest.row(b) = Y(b + 1) * dcolor.transpose();
            ddir += G.row(b + 1).transpose() * prim.sh.rest.row(b).dot(dcolor.transpose());
        }
        if (c.view_dist > 0.0) {
            g.mu += (ddir - c.view_dir * c.view_dir.dot(ddir)) / c.view_dist;
        }

        Mat3 dR            = 2.0 * dsigma * R * s2.asDiagonal();
        dR.col(c.normal_axis) += c.normal_sign * Wr.transpose() * dn;
        const Mat3 rsr     = R.transpose() * dsigma * R;
        for (int k = 0; k < 3; ++k) {
            g.log_scale(k) = 2.0 * s2(k) * rsr(k, k);
        }
        g.rotation = rotation_to_quaternion_grad(dR, prim.rotation);
    }
    return grads;
}

} // namespace splatlab
