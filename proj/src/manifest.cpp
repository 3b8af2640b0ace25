// Copyright Contributors to the splatlab project
// SPDX-License-Identifier: Apache-2.0
//
#include "splatlab/manifest.hpp"

#include "splatlab/common.hpp"

#include <fmt/format.h>
#include <json.hpp>

namespace splatlab {

std::uint64_t
fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string
manifest_to_json(const RunManifest &m, bool with_output_dir) {
    nlohmann::ordered_json j;
    j["command"]     = m.command;
    j["config_path"] = m.config_path.generic_string();
    j["scene_path"]  = m.scene_path.generic_string();
    if (with_output_dir) j["output_dir"] = m.output_dir.generic_string();
    j["seed"]    = m.seed;
    j["toggles"] = m.toggles;
    j["inputs"]  = m.inputs;
    j["config"]  = m.resolved_config.empty() ? nlohmann::ordered_json() : nlohmann::ordered_json::parse(m.resolved_config);
    j["scene"]   = m.resolved_scene.empty() ? nlohmann::ordered_json() : nlohmann::ordered_json::parse(m.resolved_scene);
    return j.dump(2);
}

std::uint64_t
manifest_hash(const RunManifest &m) {
    return fnv1a64(manifest_to_json(m, false));
}

std::string
manifest_hash_hex(const RunManifest &m) {
    return fmt::format("{:016x}", manifest_hash(m));
}

void
prepare_output_dir(const RunManifest &m) {
    if (m.output_dir.empty()) throw IoError("no output directory given");
    std::error_code ec;
    std::filesystem::create_directories(m.output_dir, ec);
    if (ec || !std::filesystem::is_directory(m.output_dir)) {
        throw IoError(fmt::format("cannot create output directory '{}'", m.output_dir.string()));
    }
}

} // namespace splatlab
