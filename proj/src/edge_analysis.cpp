// Copyright Contributors to the splatlab project
// SPDX-License-Identifier: Apache-2.0
//
#include "splatlab/edge_analysis.hpp"

#include "splatlab/common.hpp"
#include "splatlab/image.hpp"

#include <fmt/format.h>
#include <fmt/os.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace splatlab {

double
response_g(double r) {
    require(r >= 0.0, "radius must be non-negative");
    return r * r * std::exp(-0.5 * r * r);
}

double
radial_j(double r) {
    return r * response_g(r);
}

double
s_core(double r_b) {
    require(r_b >= 0.0, "radius must be non-negative");
    // 1 - e^{-x}(1 + x) with x = r_b^2/2, written with expm1 to keep small radii accurate.
    const double x = 0.5 * r_b * r_b;
    return 2.0 * (-std::expm1(-x) - x * std::exp(-x));
}

double
s_edge(double r_b) {
    require(r_b >= 0.0, "radius must be non-negative");
    return std::exp(-0.5 * r_b * r_b) * (r_b * r_b + 2.0);
}

double
ratio_eta(double r_b) {
    require(r_b >= 0.0, "radius must be non-negative");
    return 2.0 * std::exp(0.5 * r_b * r_b) / (r_b * r_b + 2.0) - 1.0;
}

double
find_r_crit(double tolerance) {
    require(tolerance > 0.0, "tolerance must be positive");
    auto f    = [](double r) { return std::exp(0.5 * r * r) - r * r - 2.0; };
    double lo = 1.5, hi = 2.5;
    // f(1.5) < 0 < f(2.5)
    while (hi - lo > tolerance) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        (f(mid) < 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

std::vector<EdgeReportRow>
table_report(const std::vector<double> &r_b_list) {
    std::vector<EdgeReportRow> rows;
    rows.reserve(r_b_list.size());
    for (const double r : r_b_list) {
        EdgeReportRow row;
        row.r_b                = r;
        row.s_core             = s_core(r);
        row.s_edge             = s_edge(r);
        row.ratio_edge_to_core = row.s_core > 0.0 ? row.s_edge / row.s_core
                                                  : std::numeric_limits<double>::infinity();
        row.gaussian_at_bound  = std::exp(-0.5 * r * r);
        rows.push_back(row);
    }
    return rows;
}

std::vector<double>
default_table_radii() {
    return {1.5, 1.83, 2.0, 2.5, 3.0, 4.0};
}

void
write_table_csv(const std::filesystem::path &path,
                const std::vector<EdgeReportRow> &rows,
                const std::vector<std::string> &comments) {
    try {
        auto out = fmt::output_file(path.string());
        for (const auto &c : comments) out.print("# {}\n", c);
        out.print("r_b,s_core,s_edge,ratio_edge_to_core,gaussian_at_bound\n");
        for (const auto &r : rows) {
            out.print("{:.6f},{:.12g},{:.12g},{:.12g},{:.12g}\n", r.r_b, r.s_core, r.s_edge, r.ratio_edge_to_core,
                      r.gaussian_at_bound);
        }
    } catch (const std::system_error &e) {
        throw IoError("cannot write " + path.string() + ": " + e.what());
    }
}

void
write_curve_plot(const std::filesystem::path &path, int width, int height) {
    require(width >= 32 && height >= 32, "plot is too small");
    Image img(width, height, 3, 1.0);
    const double r_max = 4.0, y_max = 2.5;
    auto to_px = [&](double r, double v) {
        return std::pair<int, int>{static_cast<int>(std::lround(r / r_max * (width - 1))),
                                   static_cast<int>(std::lround((1.0 - v / y_max) * (height - 1)))};
    };
    auto plot = [&](auto fn, const Vec3 &color) {
        for (int i = 0; i < 4 * width; ++i) {
            const double r  = r_max * i / (4.0 * width - 1.0);
            const double v  = fn(r);
            const auto [x, y] = to_px(r, std::min(v, y_max));
            if (v <= y_max && y >= 0 && y < height) img.set_rgb(x, y, color);
        }
    };
    // reference line at eta = 1
    for (int x = 0; x < width; ++x) img.set_rgb(x, to_px(0.0, 1.0).second, Vec3(0.8, 0.8, 0.8));
    plot([](double r) { return ratio_eta(r); }, Vec3(0.8, 0.1, 0.1));
    plot([](double r) { return response_g(r); }, Vec3(0.1, 0.5, 0.1));
    plot([](double r) { return radial_j(r); }, Vec3(0.1, 0.1, 0.8));
    write_pnm(path, img);
}

} // namespace splatlab
