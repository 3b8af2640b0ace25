// Copyright Contributors to the splatlab project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "splatlab/primitives.hpp"

#include <array>
#include <vector>

namespace splatlab {

/// Squared norm of the view-dependent coefficients of every primitive, in storage order.
std::vector<double>
compute_indicators(const std::vector<GaussianPrimitive> &prims);

/// Nearest-rank percentile: the element at index ceil(q * N) - 1 of the ascending sort, clamped to
/// [0, N - 1]. Throws ContractViolation for empty input or q outside [0, 1].
double
percentile(double q, std::vector<double> values);

struct DualEndSelection {
    std::vector<int> upper; ///< values strictly above the (1 - eta_u) percentile
    std::vector<int> lower; ///< values strictly below the eta_l percentile
    std::vector<int> all;   ///< sorted union
};

DualEndSelection
select_dual_end(const std::vector<double> &values, double eta_u, double eta_l);

/// Which (primitive, parameter group) pairs may receive the amorphous-normal gradient.
class RoutingMask {
  public:
    RoutingMask() = default;
    RoutingMask(const std::vector<int> &selection, std::size_t num_primitives);

    bool allowed(std::size_t primitive, ParamGroup group) const {
        return allow_[primitive][static_cast<int>(group)];
    }
    std::size_t size() const { return allow_.size(); }

    /// Zeroes every blocked group. Screen-space diagnostics are cleared for unselected primitives.
    void apply(Gradients &grads) const;

  private:
    std::vector<std::array<bool, kNumParamGroups>> allow_;
};

/// Grants mu, rotation, sh_dc and sh_rest of primitives in `selection`; opacity and scale never.
RoutingMask
routing_mask(const std::vector<int> &selection, std::size_t num_primitives);

} // namespace splatlab
