// Copyright Contributors to the splatlab project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace splatlab {

/// What a command ran on. The output directory is recorded but left out of the hash so the same run
/// written to two places carries the same identity.
struct RunManifest {
    std::string command;
    std::filesystem::path config_path;
    std::filesystem::path scene_path; ///< a file, or the name of a built-in scene
    std::filesystem::path output_dir;
    std::uint64_t seed = 0;
    std::vector<std::string> toggles; ///< "key=on|off" in application order, preset first
    std::map<std::string, std::string> inputs;    ///< command-specific arguments (checkpoint, view, ...)
    std::string resolved_config; ///< JSON text of the effective config, empty when unused
    std::string resolved_scene;  ///< JSON text of the effective scene, empty when unused
};

/// 64-bit FNV-1a.
std::uint64_t
fnv1a64(std::string_view bytes);

/// Canonical JSON. `with_output_dir` adds the output directory (for the on-disk record).
std::string
manifest_to_json(const RunManifest &manifest, bool with_output_dir = true);

std::uint64_t
manifest_hash(const RunManifest &manifest);

/// 16 lowercase hex digits.
std::string
manifest_hash_hex(const RunManifest &manifest);

/// Creates the output directory if needed. Throws IoError when it cannot be created or is a file.
void
prepare_output_dir(const RunManifest &manifest);

} // namespace splatlab
