// Copyright Contributors to the splatlab project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "splatlab/image.hpp"
#include "splatlab/primitives.hpp"
#include "splatlab/rasterizer.hpp"
#include "splatlab/synthscene.hpp"

#include <cstdint>
#include <vector>

namespace splatlab {

inline constexpr double kPsnrCap = 99.0;

struct PointCloud {
    std::vector<Vec3> points;
    std::vector<Vec3> colors; ///< empty or one per point
};

/// Exact nearest-neighbour index over a fixed point set. Immutable after construction, so concurrent
/// queries are safe.
class KdTree {
  public:
    explicit KdTree(std::vector<Vec3> points);

    std::size_t size() const { return points_.size(); }
    const std::vector<Vec3> &points() const { return points_; }

    /// Index of the nearest point and the squared distance to it. Ties go to the lower index.
    std::pair<std::size_t, double> nearest(const Vec3 &query) const;

    /// Up to k nearest points (excluding none), sorted by distance then index.
    std::vector<std::pair<std::size_t, double>> k_nearest(const Vec3 &query, std::size_t k) const;

  private:
    struct Node {
        std::uint32_t begin = 0, end = 0; ///< range in order_
        std::int32_t left = -1, right = -1;
        int axis          = -1; ///< -1 for leaves
        double split      = 0.0;
    };

    int build(std::uint32_t begin, std::uint32_t end);

    std::vector<Vec3> points_;
    std::vector<std::uint32_t> order_;
    std::vector<Node> nodes_;
};

/// Back-projects every pixel with acc_alpha > threshold (and a positive depth) from every view.
/// With `cell_size` > 0 only the first point falling in each voxel of that size is kept, visiting
/// views in order and pixels in row-major order. `colors`, when non-empty, supplies per-point colors.
/// Throws NumericalError when nothing survives (degenerate reconstruction).
PointCloud
fuse_depth(const std::vector<Camera> &cameras,
           const std::vector<Image> &depths,
           const std::vector<Image> &acc_alphas,
           double threshold,
           double cell_size                 = 0.0,
           const std::vector<Image> &colors = {});

inline double
default_dedup_cell(double scene_extent) {
    return scene_extent / 256.0;
}

struct ChamferResult {
    double d_to_s = 0.0; ///< mean distance from the reconstruction to the reference
    double s_to_d = 0.0; ///< mean distance from the reference to the reconstruction
    double mean   = 0.0;
};

ChamferResult
chamfer(const PointCloud &reconstruction, const PointCloud &reference);

/// 10 log10(1 / MSE) over all channels, capped at kPsnrCap for identical images.
double
psnr(const Image &image, const Image &gt);

struct ReconstructionMetrics {
    ChamferResult chamfer;
    std::vector<double> psnr_per_view;
    double mean_psnr              = 0.0;
    std::size_t reconstruction_points = 0;
    std::size_t reference_points      = 0;
};

/// Renders every dataset view, fuses the rendered depth where acc_alpha > acc_threshold and compares
/// it with the ground-truth depth fused over hit pixels, both deduplicated at `cell_size`.
ReconstructionMetrics
evaluate_reconstruction(const std::vector<GaussianPrimitive> &prims,
                        const Dataset &dataset,
                        const RenderOptions &options,
                        double cell_size,
                        double acc_threshold = 0.5);

} // namespace splatlab
