// Copyright Contributors to the splatlab project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "splatlab/primitives.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace splatlab {

/// ASCII PLY with one vertex per primitive: x y z, log_scale_0..2, rot_0..3 (w x y z), opacity_logit,
/// sh_dc_0..2 and sh_rest_k with k = 3 * row + channel. Values are printed with 17 significant digits
/// so a save/load round trip is exact. `comment` lines are stored verbatim in the header.
void
write_primitives_ply(const std::filesystem::path &path,
                     const std::vector<GaussianPrimitive> &prims,
                     const std::vector<std::string> &comments = {});

/// Throws IoError on malformed files. The SH degree is inferred from the sh_rest property count.
std::vector<GaussianPrimitive>
read_primitives_ply(const std::filesystem::path &path);

void
write_point_cloud_ply(const std::filesystem::path &path, const std::vector<Vec3> &points);

std::vector<Vec3>
read_point_cloud_ply(const std::filesystem::path &path);

} // namespace splatlab
