// Copyright Contributors to the splatlab project
// SPDX-License-Identifier: Apache-2.0
//
#include "splatlab/ply.hpp"

#include <fmt/format.h>
#include <fmt/os.h>

#include <fstream>
#include <sstream>

namespace splatlab {

namespace {

struct PlyHeader {
    std::size_t vertex_count = 0;
    std::vector<std::string> properties;
};

PlyHeader
read_header(std::istream &in, const std::filesystem::path &path) {
    std::string line;
    if (!std::getline(in, line) || line != "ply") {
        throw IoError(path.string() + ": not a PLY file");
    }
    PlyHeader h;
    bool in_vertex = false;
    while (std::getline(in, line)) {
        std::istringstream ss(line);
        std::string word;
        ss >> word;
        if (word == "format") {
            std::string fmt_name;
            ss >> fmt_name;
            if (fmt_name != "ascii") throw IoError(path.string() + ": only ASCII PLY is supported");
        } else if (word == "element") {
            std::string name;
            ss >> name;
            in_vertex = name == "vertex";
            if (in_vertex) ss >> h.vertex_count;
        } else if (word == "property" && in_vertex) {
            std::string type, name;
            ss >> type >> name;
            h.properties.push_back(name);
        } else if (word == "end_header") {
            return h;
        }
    }
    throw IoError(path.string() + ": truncated PLY header");
}

std::vector<double>
read_row(std::istream &in, std::size_t n, const std::filesystem::path &path) {
    std::vector<double> row(n);
    for (double &v : row) {
        if (!(in >> v)) throw IoError(path.string() + ": truncated PLY body");
    }
    return row;
}

} // namespace

void
write_primitives_ply(const std::filesystem::path &path,
                     const std::vector<GaussianPrimitive> &prims,
                     const std::vector<std::string> &comments) {
    const int degree = prims.empty() ? 0 : prims.front().sh.degree;
    const int rest   = 3 * (num_sh_basis(degree) - 1);
    try {
        auto out = fmt::output_file(path.string());
        out.print("ply\nformat ascii 1.0\n");
        for (const auto &c : comments) out.print("comment {}\n", c);
        out.print("element vertex {}\n", prims.size());
        for (const char *name : {"x", "y", "z", "log_scale_0", "log_scale_1", "log_scale_2", "rot_0", "rot_1", "rot_2",
                                 "rot_3", "opacity_logit", "sh_dc_0", "sh_dc_1", "sh_dc_2"}) {
            out.print("property double {}\n", name);
        }
        for (int k = 0; k < rest; ++k) out.print("property double sh_rest_{}\n", k);
        out.print("end_header\n");
        for (const auto &p : prims) {
            require(p.sh.degree == degree, "all primitives in a PLY file must share one SH degree");
            out.print("{:.17g} {:.17g} {:.17g} {:.17g} {:.17g} {:.17g} {:.17g} {:.17g} {:.17g} {:.17g} {:.17g} "
                      "{:.17g} {:.17g} {:.17g}",
                      p.mu.x(), p.mu.y(), p.mu.z(), p.log_scale.x(), p.log_scale.y(), p.log_scale.z(),
                      p.rotation(0), p.rotation(1), p.rotation(2), p.rotation(3), p.opacity_logit, p.sh.dc.x(),
                      p.sh.dc.y(), p.sh.dc.z());
            for (int k = 0; k < rest; ++k) out.print(" {:.17g}", p.sh.rest(k / 3, k % 3));
            out.print("\n");
        }
    } catch (const std::system_error &e) {
        throw IoError("cannot write " + path.string() + ": " + e.what());
    }
}

std::vector<GaussianPrimitive>
read_primitives_ply(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    const PlyHeader h = read_header(in, path);
    if (h.properties.size() < 14) throw IoError(path.string() + ": missing primitive properties");
    const std::size_t rest = h.properties.size() - 14;
    int degree             = -1;
    for (int d = 0; d <= kMaxShDegree; ++d) {
        if (static_cast<std::size_t>(3 * (num_sh_basis(d) - 1)) == rest) degree = d;
    }
    if (degree < 0) throw IoError(path.string() + ": sh_rest count does not match any SH degree");
    std::vector<GaussianPrimitive> prims(h.vertex_count);
    for (auto &p : prims) {
        const auto v    = read_row(in, h.properties.size(), path);
        p.mu            = Vec3(v[0], v[1], v[2]);
        p.log_scale     = Vec3(v[3], v[4], v[5]);
        p.rotation      = Vec4(v[6], v[7], v[8], v[9]);
        p.opacity_logit = v[10];
        p.sh            = ShCoefficients(degree);
        p.sh.dc         = Vec3(v[11], v[12], v[13]);
        for (std::size_t k = 0; k < rest; ++k) p.sh.rest(static_cast<int>(k / 3), static_cast<int>(k % 3)) = v[14 + k];
    }
    return prims;
}

void
write_point_cloud_ply(const std::filesystem::path &path, const std::vector<Vec3> &points) {
    try {
        auto out = fmt::output_file(path.string());
        out.print("ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\n"
                  "property double z\nend_header\n",
                  points.size());
        for (const auto &p : points) out.print("{:.17g} {:.17g} {:.17g}\n", p.x(), p.y(), p.z());
    } catch (const std::system_error &e) {
        throw IoError("cannot write " + path.string() + ": " + e.what());
    }
}

std::vector<Vec3>
read_point_cloud_ply(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    const PlyHeader h = read_header(in, path);
    if (h.properties.size() < 3) throw IoError(path.string() + ": point cloud needs x y z");
    std::vector<Vec3> pts(h.vertex_count);
    for (auto &p : pts) {
        const auto v = read_row(in, h.properties.size(), path);
        p            = Vec3(v[0], v[1], v[2]);
    }
    return pts;
}

} // namespace splatlab
