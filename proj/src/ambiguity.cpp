// Copyright Contributors to the splatlab project
// SPDX-License-Identifier: Apache-2.0
//
#include "splatlab/ambiguity.hpp"

#include <algorithm>
#include <cmath>

namespace splatlab {

std::vector<double>
compute_indicators(const std::vector<GaussianPrimitive> &prims) {
    std::vector<double> values(prims.size());
    for (std::size_t i = 0; i < prims.size(); ++i) {
        values[i] = indicator(prims[i].sh);
    }
    return values;
}

double
percentile(double q, std::vector<double> values) {
    require(!values.empty(), "percentile of an empty set");
    require(q >= 0.0 && q <= 1.0, "percentile fraction must be in [0, 1]");
    std::sort(values.begin(), values.end());
    const auto n   = static_cast<long long>(values.size());
    long long rank = static_cast<long long>(std::ceil(q * static_cast<double>(n))) - 1;
    rank           = std::clamp(rank, 0LL, n - 1);
    return values[static_cast<std::size_t>(rank)];
}

DualEndSelection
select_dual_end(const std::vector<double> &values, double eta_u, double eta_l) {
    require(eta_u >= 0.0 && eta_u < 0.5 && eta_l >= 0.0 && eta_l < 0.5, "eta_u and eta_l must be in [0, 0.5)");
    DualEndSelection sel;
    if (values.empty()) {
        return sel;
    }
    const double hi = percentile(1.0 - eta_u, values);
    const double lo = percentile(eta_l, values);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const int k = static_cast<int>(i);
        if (values[i] > hi) {
            sel.upper.push_back(k);
            sel.all.push_back(k);
        } else if (values[i] < lo) {
            sel.lower.push_back(k);
            sel.all.push_back(k);
        }
    }
    return sel;
}

RoutingMask::RoutingMask(const std::vector<int> &selection, std::size_t num_primitives)
    : allow_(num_primitives) {
    for (auto &a : allow_) a.fill(false);
    for (const int s : selection) {
        require(s >= 0 && static_cast<std::size_t>(s) < num_primitives, "selection index out of range");
        auto &a                                    = allow_[static_cast<std::size_t>(s)];
        a[static_cast<int>(ParamGroup::Mu)]        = true;
        a[static_cast<int>(ParamGroup::Rotation)]  = true;
        a[static_cast<int>(ParamGroup::ShDc)]      = true;
        a[static_cast<int>(ParamGroup::ShRest)]    = true;
    }
}

void
RoutingMask::apply(Gradients &grads) const {
    require(grads.size() == allow_.size(), "routing mask size differs from the gradient count");
    for (std::size_t i = 0; i < grads.size(); ++i) {
        bool any = false;
        for (int g = 0; g < kNumParamGroups; ++g) {
            if (!allow_[i][g]) {
                grads[i].zero_group(static_cast<ParamGroup>(g));
            } else {
                any = true;
            }
        }
        if (!any) {
            grads[i].mean2d.setZero();
            grads[i].cov2d.setZero();
        }
    }
}

RoutingMask
routing_mask(const std::vector<int> &selection, std::size_t num_primitives) {
    return RoutingMask(selection, num_primitives);
}

} // namespace splatlab
