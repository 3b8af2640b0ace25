// Copyright Contributors to the splatlab project
// SPDX-License-Identifier: Apache-2.0
//
#include "splatlab/objective.hpp"

namespace splatlab {

ViewEvaluation
evaluate_view(const std::vector<GaussianPrimitive> &prims,
              const Camera &cam,
              const ViewTargets &targets,
              const std::vector<int> &selection,
              const ObjectiveOptions &opt,
              bool want_gradients) {
    ViewEvaluation ev;
    ev.render              = render(prims, cam, selection, opt.render);
    const RenderOutputs &r = ev.render;

    RenderAdjoints base_adj;
    bool base_active = false;
    if (opt.use_photo) {
        require(targets.color != nullptr, "photometric term needs a target image");
        ev.terms.photo = photometric(r.color, *targets.color, opt.lambda_dssim, want_gradients ? &base_adj.color : nullptr);
        base_active    = true;
    }
    if (opt.use_geo && targets.prior_depth != nullptr) {
        Image g;
        ev.terms.geo = geo_depth(r.depth, *targets.prior_depth, r.acc_alpha, targets.scene_range,
                                 want_gradients ? &g : nullptr, opt.valid_threshold);
        if (want_gradients) {
            for (double &v : g.data) v *= opt.weights.tau;
            base_adj.depth = std::move(g);
        }
        base_active = true;
    }
    if (opt.use_ray_color) {
        std::vector<Vec3> rg;
        ev.terms.ray_color = ray_color(r, opt.ray_reduction, want_gradients ? &rg : nullptr);
        if (want_gradients) ev.ray_color = record_color_to_sh(r, prims, rg);
    }
    if (opt.use_amorphous && targets.prior_normal != nullptr) {
        const Image nd = depth_to_normal(r.depth, r.acc_alpha, cam, opt.valid_threshold);
        Image g_mask, g_normal;
        ev.terms.amorphous = amorphous_normal(r.mask, nd, *targets.prior_normal, want_gradients ? &g_mask : nullptr,
                                              want_gradients ? &g_normal : nullptr);
        if (want_gradients) {
            RenderAdjoints adj;
            adj.mask      = std::move(g_mask);
            adj.depth     = depth_to_normal_backward(r.depth, r.acc_alpha, cam, g_normal, opt.valid_threshold);
            ev.amorphous  = backward(r, adj, prims, cam);
        }
    }
    ev.terms.total = total_loss(ev.terms, opt.weights);
    if (want_gradients && base_active) {
        ev.base = backward(r, base_adj, prims, cam);
    }
    return ev;
}

} // namespace splatlab
