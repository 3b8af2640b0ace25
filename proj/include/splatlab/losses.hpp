// Copyright Contributors to the splatlab project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "splatlab/image.hpp"
#include "splatlab/primitives.hpp"
#include "splatlab/rasterizer.hpp"

#include <vector>

namespace splatlab {

inline constexpr double kDefaultLambdaDssim = 0.2;
inline constexpr int kSsimWindow            = 11;
inline constexpr double kSsimSigma          = 1.5;

/// Mean SSIM over all pixels and channels with an 11x11 Gaussian window (sigma 1.5), zero padding.
/// When `grad_a` is non-null it receives d(mean SSIM)/d(a).
double
ssim(const Image &a, const Image &b, Image *grad_a = nullptr);

/// (1 - lambda) * mean|rendered - gt| + lambda * (1 - SSIM) / 2.
double
photometric(const Image &rendered, const Image &gt, double lambda_dssim, Image *grad = nullptr);

/// Mean of |D - D_P| / scene_range over pixels with acc_alpha > valid_threshold and a positive prior.
double
geo_depth(const Image &depth,
          const Image &prior_depth,
          const Image &acc_alpha,
          double scene_range,
          Image *grad            = nullptr,
          double valid_threshold = 0.5);

enum class Reduction { Sum, Mean };

/// Weighted color spread along each ray, sum_i w_i |c_i - C|^2 with C the weight-normalized mean
/// color of the ray, reduced over rays with acc_alpha > 0. When `record_grad` is non-null it receives
/// the detached per-record gradient 2 w_i (c_i - C) (scaled by the reduction), routed to c_i only.
double
ray_color(const RenderOutputs &outputs, Reduction reduction, std::vector<Vec3> *record_grad = nullptr);

/// Routes per-record color gradients into SH coefficients only (dc and rest). The view direction,
/// weights and every geometric parameter are treated as constants, so all non-SH groups stay zero.
Gradients
record_color_to_sh(const RenderOutputs &outputs,
                   const std::vector<GaussianPrimitive> &prims,
                   const std::vector<Vec3> &record_grad);

/// Camera-frame normals from the rendered depth via central differences of back-projected points.
/// A pixel needs itself and its four direct neighbours valid (acc_alpha > valid_threshold); other
/// pixels get the zero vector. Normals face the camera: <n, pixel ray> <= 0.
Image
depth_to_normal(const Image &depth, const Image &acc_alpha, const Camera &cam, double valid_threshold = 0.5);

/// Adjoint of depth_to_normal: maps a gradient on the normal map to a gradient on the depth map.
Image
depth_to_normal_backward(const Image &depth,
                         const Image &acc_alpha,
                         const Camera &cam,
                         const Image &grad_normal,
                         double valid_threshold = 0.5);

/// Mean over pixels where both normals are non-zero of M * (1 - <N_D, N_P>), both renormalized.
double
amorphous_normal(const Image &mask,
                 const Image &depth_normal,
                 const Image &prior_normal,
                 Image *grad_mask         = nullptr,
                 Image *grad_depth_normal = nullptr);

struct LossWeights {
    double tau = 0.1;  ///< geometric depth
    double mu1 = 0.1;  ///< amorphous normal
    double mu2 = 1e-5; ///< ray color
};

struct LossTerms {
    double photo     = 0.0;
    double geo       = 0.0;
    double ray_color = 0.0;
    double amorphous = 0.0;
    double total     = 0.0;
};

/// photo + tau * geo + mu1 * amorphous + mu2 * ray_color. Gated-off terms must be passed as zero.
double
total_loss(const LossTerms &terms, const LossWeights &weights);

/// Throws NumericalError naming the first non-finite term.
void
check_finite(const LossTerms &terms);

} // namespace splatlab
