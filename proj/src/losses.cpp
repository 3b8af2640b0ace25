// Copyright Contributors to the splatlab project
// SPDX-License-Identifier: Apache-2.0
//
#include "splatlab/losses.hpp"

#include <array>
#include <cmath>

namespace splatlab {

namespace {

constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;

std::array<double, kSsimWindow>
gaussian_taps() {
    std::array<double, kSsimWindow> taps{};
    double sum = 0.0;
    for (int i = 0; i < kSsimWindow; ++i) {
        const double d = i - kSsimWindow / 2;
        taps[i]        = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
        sum += taps[i];
    }
    for (double &t : taps) t /= sum;
    return taps;
}

using Plane = std::vector<double>;

// Separable "same" convolution with zero padding. The kernel is symmetric, so this is also its own
// adjoint.
Plane
blur(const Plane &in, int w, int h) {
    static const auto taps = gaussian_taps();
    constexpr int half     = kSsimWindow / 2;
    Plane tmp(in.size(), 0.0), out(in.size(), 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int k = -half; k <= half; ++k) {
                const int xx = x + k;
                if (xx >= 0 && xx < w) s += taps[k + half] * in[y * w + xx];
            }
            tmp[y * w + x] = s;
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int k = -half; k <= half; ++k) {
                const int yy = y + k;
                if (yy >= 0 && yy < h) s += taps[k + half] * tmp[yy * w + x];
            }
            out[y * w + x] = s;
        }
    }
    return out;
}

Plane
channel_plane(const Image &img, int c) {
    Plane p(img.pixel_count());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = img.data[i * img.channels + c];
    return p;
}

} // namespace

double
ssim(const Image &a, const Image &b, Image *grad_a) {
    require(a.same_shape(b), "ssim images differ in shape");
    require(!a.empty(), "ssim of an empty image");
    const int w = a.width, h = a.height;
    const std::size_t npix = a.pixel_count();
    const double count     = static_cast<double>(a.data.size());
    if (grad_a) {
        *grad_a = Image(w, h, a.channels);
    }
    double total = 0.0;
    for (int c = 0; c < a.channels; ++c) {
        const Plane x = channel_plane(a, c), y = channel_plane(b, c);
        Plane xx(npix), yy(npix), xy(npix);
        for (std::size_t i = 0; i < npix; ++i) {
            xx[i] = x[i] * x[i];
            yy[i] = y[i] * y[i];
            xy[i] = x[i] * y[i];
        }
        const Plane mx = blur(x, w, h), my = blur(y, w, h);
        const Plane exx = blur(xx, w, h), eyy = blur(yy, w, h), exy = blur(xy, w, h);
        Plane dm(npix), de(npix), dc(npix);
        for (std::size_t i = 0; i < npix; ++i) {
            const double sx  = exx[i] - mx[i] * mx[i];
            const double sy  = eyy[i] - my[i] * my[i];
            const double sxy = exy[i] - mx[i] * my[i];
            const double a1  = 2.0 * mx[i] * my[i] + kSsimC1;
            const double a2  = 2.0 * sxy + kSsimC2;
            const double b1  = mx[i] * mx[i] + my[i] * my[i] + kSsimC1;
            const double b2  = sx + sy + kSsimC2;
            const double s   = a1 * a2 / (b1 * b2);
            total += s;
            if (grad_a) {
                dm[i] = (2.0 * my[i] * (a2 - a1) / (b1 * b2) - 2.0 * mx[i] * s * (1.0 / b1 - 1.0 / b2)) / count;
                de[i] = -s / b2 / count;
                dc[i] = 2.0 * a1 / (b1 * b2) / count;
            }
        }
        if (grad_a) {
            const Plane gm = blur(dm, w, h), ge = blur(de, w, h), gc = blur(dc, w, h);
            for (std::size_t i = 0; i < npix; ++i) {
                grad_a->data[i * a.channels + c] = gm[i] + 2.0 * x[i] * ge[i] + y[i] * gc[i];
            }
        }
    }
    return total / count;
}

double
photometric(const Image &rendered, const Image &gt, double lambda_dssim, Image *grad) {
    require(rendered.same_shape(gt), "photometric images differ in shape");
    require(lambda_dssim >= 0.0 && lambda_dssim <= 1.0, "lambda_dssim must be in [0, 1]");
    const double count = static_cast<double>(rendered.data.size());
    double l1          = 0.0;
    for (std::size_t i = 0; i < rendered.data.size(); ++i) {
        l1 += std::abs(rendered.data[i] - gt.data[i]);
    }
    l1 /= count;
    if (grad) {
        *grad = Image(rendered.width, rendered.height, rendered.channels);
        for (std::size_t i = 0; i < rendered.data.size(); ++i) {
            const double d = rendered.data[i] - gt.data[i];
            grad->data[i]  = (1.0 - lambda_dssim) * static_cast<double>((d > 0.0) - (d < 0.0)) / count;
        }
    }
    if (lambda_dssim == 0.0) {
        return l1;
    }
    Image gs;
    const double s = ssim(rendered, gt, grad ? &gs : nullptr);
    if (grad) {
        for (std::size_t i = 0; i < grad->data.size(); ++i) {
            grad->data[i] -= 0.5 * lambda_dssim * gs.data[i];
        }
    }
    return (1.0 - lambda_dssim) * l1 + lambda_dssim * (1.0 - s) / 2.0;
}

double
geo_depth(const Image &depth,
          const Image &prior_depth,
          const Image &acc_alpha,
          double scene_range,
          Image *grad,
          double valid_threshold) {
    require(scene_range > 0.0, "scene_range must be positive");
    require(depth.same_shape(prior_depth) && depth.same_shape(acc_alpha) && depth.channels == 1,
            "geo_depth maps differ in shape");
    if (grad) {
        *grad = Image(depth.width, depth.height, 1);
    }
    double sum        = 0.0;
    std::size_t valid = 0;
    for (std::size_t i = 0; i < depth.data.size(); ++i) {
        if (acc_alpha.data[i] > valid_threshold && prior_depth.data[i] > 0.0) {
            sum += std::abs(depth.data[i] - prior_depth.data[i]);
            ++valid;
        }
    }
    if (valid == 0) {
        return 0.0;
    }
    const double norm = 1.0 / (scene_range * static_cast<double>(valid));
    if (grad) {
        for (std::size_t i = 0; i < depth.data.size(); ++i) {
            if (acc_alpha.data[i] > valid_threshold && prior_depth.data[i] > 0.0) {
                const double d = depth.data[i] - prior_depth.data[i];
                grad->data[i]  = static_cast<double>((d > 0.0) - (d < 0.0)) * norm;
            }
        }
    }
    return sum * norm;
}

double
ray_color(const RenderOutputs &out, Reduction reduction, std::vector<Vec3> *record_grad) {
    const std::size_t npix = out.acc_alpha.pixel_count();
    if (record_grad) {
        record_grad->assign(out.records.size(), Vec3::Zero());
    }
    std::vector<double> per_pixel(npix, 0.0);
    std::size_t rays = 0;
    for (std::size_t p = 0; p < npix; ++p) {
        if (!(out.acc_alpha.data[p] > 0.0)) {
            continue;
        }
        ++rays;
        const std::size_t b = out.offsets[p], e = out.offsets[p + 1];
        double wsum         = 0.0;
        for (std::size_t k = b; k < e; ++k) wsum += out.records[k].weight;
        // Mean about the first color so identical colors give exactly zero spread.
        const Vec3 &c0 = out.records[b].color;
        Vec3 mean      = Vec3::Zero();
        for (std::size_t k = b; k < e; ++k) mean += out.records[k].weight * (out.records[k].color - c0);
        mean = c0 + mean / wsum;
        double r = 0.0;
        for (std::size_t k = b; k < e; ++k) {
            r += out.records[k].weight * (out.records[k].color - mean).squaredNorm();
        }
        per_pixel[p] = r;
    }
    double total = 0.0;
    for (const double r : per_pixel) total += r;
    const double scale = (reduction == Reduction::Mean && rays > 0) ? 1.0 / static_cast<double>(rays) : 1.0;
    if (record_grad) {
        for (std::size_t p = 0; p < npix; ++p) {
            if (!(out.acc_alpha.data[p] > 0.0)) {
                continue;
            }
            const std::size_t b = out.offsets[p], e = out.offsets[p + 1];
            double wsum         = 0.0;
            for (std::size_t k = b; k < e; ++k) wsum += out.records[k].weight;
            const Vec3 &c0 = out.records[b].color;
            Vec3 mean      = Vec3::Zero();
            for (std::size_t k = b; k < e; ++k) mean += out.records[k].weight * (out.records[k].color - c0);
            mean = c0 + mean / wsum;
            for (std::size_t k = b; k < e; ++k) {
                (*record_grad)[k] = 2.0 * scale * out.records[k].weight * (out.records[k].color - mean);
            }
        }
    }
    return total * scale;
}

Gradients
record_color_to_sh(const RenderOutputs &out,
                   const std::vector<GaussianPrimitive> &prims,
                   const std::vector<Vec3> &record_grad) {
    require(record_grad.size() == out.records.size(), "record gradient does not match the record count");
    require(prims.size() == out.projections.size(), "primitive count differs from the rendered set");
    std::vector<Vec3> per_prim(prims.size(), Vec3::Zero());
    for (std::size_t k = 0; k < out.records.size(); ++k) {
        per_prim[out.records[k].primitive_index] += record_grad[k];
    }
    Gradients grads = zero_gradients(prims);
    ShBasisValues Y;
    ShBasisGradient G;
    for (std::size_t i = 0; i < prims.size(); ++i) {
        if (!out.projections[i].visible || per_prim[i].squaredNorm() == 0.0) continue;
        eval_basis_with_gradient(out.projections[i].view_dir, prims[i].sh.degree, Y, G);
        grads[i].sh_dc = per_prim[i];
        for (int b = 0; b < prims[i].sh.rest.rows(); ++b) {
            grads[i].sh_rest.row(b) = Y(b + 1) * per_prim[i].transpose();
        }
    }
    return grads;
}

namespace {

struct NormalStencil {
    bool valid = false;
    Vec3 dx    = Vec3::Zero(); // P(x+1) - P(x-1)
    Vec3 dy    = Vec3::Zero(); // P(y+1) - P(y-1)
};

Vec3
ray_of(const Camera &cam, int x, int y) {
    return cam.backproject(x + 0.5, y + 0.5, 1.0);
}

NormalStencil
stencil(const Image &depth, const Image &acc, const Camera &cam, int x, int y, double thr) {
    NormalStencil s;
    const int w = depth.width, h = depth.height;
    if (x < 1 || y < 1 || x >= w - 1 || y >= h - 1) {
        return s;
    }
    if (!(acc.at(x, y) > thr && acc.at(x - 1, y) > thr && acc.at(x + 1, y) > thr && acc.at(x, y - 1) > thr &&
          acc.at(x, y + 1) > thr)) {
        return s;
    }
    s.valid = true;
    s.dx    = ray_of(cam, x + 1, y) * depth.at(x + 1, y) - ray_of(cam, x - 1, y) * depth.at(x - 1, y);
    s.dy    = ray_of(cam, x, y + 1) * depth.at(x, y + 1) - ray_of(cam, x, y - 1) * depth.at(x, y - 1);
    return s;
}

} // namespace

Image
depth_to_normal(const Image &depth, const Image &acc_alpha, const Camera &cam, double valid_threshold) {
    require(depth.same_shape(acc_alpha) && depth.channels == 1, "depth and acc_alpha differ in shape");
    require(depth.width == cam.width && depth.height == cam.height, "depth does not match the camera");
    Image out(depth.width, depth.height, 3);
    for (int y = 0; y < depth.height; ++y) {
        for (int x = 0; x < depth.width; ++x) {
            const NormalStencil s = stencil(depth, acc_alpha, cam, x, y, valid_threshold);
            if (!s.valid) continue;
            const Vec3 u    = s.dx.cross(s.dy);
            const double un = u.norm();
            if (!(un > 0.0)) continue;
            Vec3 n = u / un;
            if (n.dot(ray_of(cam, x, y)) > 0.0) n = -n;
            out.set_rgb(x, y, n);
        }
    }
    return out;
}

Image
depth_to_normal_backward(const Image &depth,
                         const Image &acc_alpha,
                         const Camera &cam,
                         const Image &grad_normal,
                         double valid_threshold) {
    require(grad_normal.width == depth.width && grad_normal.height == depth.height && grad_normal.channels == 3,
            "normal gradient has the wrong shape");
    Image gd(depth.width, depth.height, 1);
    for (int y = 0; y < depth.height; ++y) {
        for (int x = 0; x < depth.width; ++x) {
            const Vec3 g = grad_normal.rgb(x, y);
            if (g.squaredNorm() == 0.0) continue;
            const NormalStencil s = stencil(depth, acc_alpha, cam, x, y, valid_threshold);
            if (!s.valid) continue;
            const Vec3 u    = s.dx.cross(s.dy);
            const double un = u.norm();
            if (!(un > 0.0)) continue;
            const Vec3 uh     = u / un;
            const double sign = uh.dot(ray_of(cam, x, y)) > 0.0 ? -1.0 : 1.0;
            const Vec3 gu     = sign * (g - uh * uh.dot(g)) / un;
            const Vec3 ga     = s.dy.cross(gu);
            const Vec3 gb     = gu.cross(s.dx);
            gd.at(x + 1, y) += ray_of(cam, x + 1, y).dot(ga);
            gd.at(x - 1, y) -= ray_of(cam, x - 1, y).dot(ga);
            gd.at(x, y + 1) += ray_of(cam, x, y + 1).dot(gb);
            gd.at(x, y - 1) -= ray_of(cam, x, y - 1).dot(gb);
        }
    }
    return gd;
}

double
amorphous_normal(const Image &mask,
                 const Image &depth_normal,
                 const Image &prior_normal,
                 Image *grad_mask,
                 Image *grad_depth_normal) {
    require(mask.channels == 1 && depth_normal.channels == 3 && prior_normal.channels == 3,
            "amorphous_normal channel layout mismatch");
    require(mask.width == depth_normal.width && mask.height == depth_normal.height &&
                depth_normal.same_shape(prior_normal),
            "amorphous_normal maps differ in shape");
    const int w = mask.width, h = mask.height;
    if (grad_mask) *grad_mask = Image(w, h, 1);
    if (grad_depth_normal) *grad_depth_normal = Image(w, h, 3);

    std::size_t valid = 0;
    double sum        = 0.0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const Vec3 nd = depth_normal.rgb(x, y), np = prior_normal.rgb(x, y);
            const double ndn = nd.norm(), npn = np.norm();
            if (!(ndn > 0.0) || !(npn > 0.0)) continue;
            ++valid;
            // 1 - <a, b> for unit vectors, written so identical normals give exactly zero.
            sum += mask.at(x, y) * 0.5 * (nd / ndn - np / npn).squaredNorm();
        }
    }
    if (valid == 0) {
        return 0.0;
    }
    const double inv = 1.0 / static_cast<double>(valid);
    if (grad_mask || grad_depth_normal) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const Vec3 nd = depth_normal.rgb(x, y), np = prior_normal.rgb(x, y);
                const double ndn = nd.norm(), npn = np.norm();
                if (!(ndn > 0.0) || !(npn > 0.0)) continue;
                const Vec3 a = nd / ndn, b = np / npn;
                if (grad_mask) grad_mask->at(x, y) = 0.5 * (a - b).squaredNorm() * inv;
                if (grad_depth_normal) {
                    grad_depth_normal->set_rgb(x, y, -mask.at(x, y) * inv * (b - a * a.dot(b)) / ndn);
                }
            }
        }
    }
    return sum * inv;
}

double
total_loss(const LossTerms &t, const LossWeights &w) {
    return t.photo + w.tau * t.geo + w.mu1 * t.amorphous + w.mu2 * t.ray_color;
}

void
check_finite(const LossTerms &t) {
    const std::pair<const char *, double> terms[] = {
        {"photo", t.photo}, {"geo", t.geo}, {"ray_color", t.ray_color}, {"amorphous", t.amorphous}, {"total", t.total}};
    for (const auto &[name, value] : terms) {
        if (!std::isfinite(value)) {
            throw NumericalError(std::string("non-finite loss term '") + name + "'");
        }
    }
}

} // namespace splatlab
