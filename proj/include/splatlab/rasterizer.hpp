// Copyright Contributors to the splatlab project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "splatlab/image.hpp"
#include "splatlab/primitives.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace splatlab {

struct RenderOptions {
    double gamma                 = kDefaultGamma;
    bool early_termination       = true;
    double termination_threshold = 1e-4;
    /// Contributions with alpha below this are skipped entirely (0 keeps every contribution).
    double min_alpha = 0.0;
    int tile_size    = 16;
};

/// One compositing step at one pixel.
struct BlendRecord {
    int primitive_index  = 0;
    double weight        = 0.0; ///< alpha_used * transmittance
    Vec3 color           = Vec3::Zero();
    double alpha_used    = 0.0;
    double transmittance = 1.0; ///< transmittance before this step
};

/// Per-primitive quantities computed once per render and reused by the backward pass.
struct ProjectionCache {
    bool visible = false;
    Projected2D proj;
    Mat2 conic       = Mat2::Identity();
    double base      = 0.0; ///< sigmoid(opacity_logit)
    Vec3 cam_point   = Vec3::Zero();
    Vec3 view_dir    = Vec3::UnitZ(); ///< unit vector from the camera center to mu (world frame)
    double view_dist = 1.0;
    Vec3 color       = Vec3::Zero();
    int normal_axis  = 0;
    double normal_sign = 1.0;
};

struct RenderOutputs {
    int width  = 0;
    int height = 0;
    Image color;     ///< H x W x 3
    Image depth;     ///< H x W x 1
    Image normal;    ///< H x W x 3
    Image acc_alpha; ///< H x W x 1
    Image mask;      ///< H x W x 1

    std::vector<BlendRecord> records;        ///< all pixels, row-major, front to back
    std::vector<std::size_t> offsets;        ///< pixel p owns records [offsets[p], offsets[p+1])
    std::vector<std::uint8_t> selected;      ///< per-primitive selection flags used for the mask
    std::vector<ProjectionCache> projections;
    std::vector<int> depth_order;            ///< visible primitives sorted by (depth, index)
    RenderOptions options;

    std::span<const BlendRecord> pixel_records(int x, int y) const {
        const std::size_t p = static_cast<std::size_t>(y) * width + x;
        return {records.data() + offsets[p], offsets[p + 1] - offsets[p]};
    }
};

/// Front-to-back alpha compositing of truncated Gaussians. `selection` lists primitive indices
/// contributing to the mask output.
RenderOutputs
render(const std::vector<GaussianPrimitive> &prims,
       const Camera &cam,
       const std::vector<int> &selection = {},
       const RenderOptions &options      = {});

/// Gradient images for each rendered map. Empty images mean a zero adjoint for that map.
/// `record_color` optionally supplies an extra adjoint per blend record on its color (same indexing
/// as RenderOutputs::records).
struct RenderAdjoints {
    Image color;
    Image depth;
    Image normal;
    Image acc_alpha;
    Image mask;
    std::vector<Vec3> record_color;
};

/// Analytic reverse pass. Returns one PrimitiveGradient per input primitive; mean2d and cov2d hold
/// the screen-space gradients used by densification and edge diagnostics.
Gradients
backward(const RenderOutputs &outputs,
         const RenderAdjoints &adjoints,
         const std::vector<GaussianPrimitive> &prims,
         const Camera &cam);

/// Pixel-center coordinate of pixel (x, y).
inline Vec2
pixel_center(int x, int y) {
    return {x + 0.5, y + 0.5};
}

} // namespace splatlab
