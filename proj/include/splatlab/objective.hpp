// Copyright Contributors to the splatlab project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "splatlab/losses.hpp"
#include "splatlab/rasterizer.hpp"

#include <vector>

namespace splatlab {

/// Supervision for one training view. Null maps disable the terms that need them.
struct ViewTargets {
    const Image *color        = nullptr;
    const Image *prior_depth  = nullptr;
    const Image *prior_normal = nullptr;
    double scene_range        = 1.0;
};

struct ObjectiveOptions {
    RenderOptions render;
    LossWeights weights;
    double lambda_dssim     = kDefaultLambdaDssim;
    Reduction ray_reduction = Reduction::Sum;
    double valid_threshold  = 0.5;
    bool use_photo          = true;
    bool use_geo            = false;
    bool use_ray_color      = false;
    bool use_amorphous      = false;
};

struct ViewEvaluation {
    RenderOutputs render;
    LossTerms terms;
    Gradients base;      ///< photo + tau * geo, every parameter group
    Gradients ray_color; ///< d(ray_color), unweighted, SH groups only
    Gradients amorphous; ///< d(amorphous), unweighted and not yet routed
};

/// Renders one view and evaluates every enabled loss term. With `want_gradients` the three
/// gradient sets are filled (empty for disabled terms).
ViewEvaluation
evaluate_view(const std::vector<GaussianPrimitive> &prims,
              const Camera &cam,
              const ViewTargets &targets,
              const std::vector<int> &selection,
              const ObjectiveOptions &options,
              bool want_gradients);

} // namespace splatlab
