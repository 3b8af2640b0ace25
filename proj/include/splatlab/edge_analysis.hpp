// Copyright Contributors to the splatlab project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace splatlab {

/// Shape-gradient response at Mahalanobis radius r: r^2 exp(-r^2/2).
double
response_g(double r);

/// Radial density of the response over a 2D ring: r * g(r) = r^3 exp(-r^2/2).
double
radial_j(double r);

/// Integral of radial_j over [0, r_b]: 2 - exp(-r_b^2/2) (r_b^2 + 2).
double
s_core(double r_b);

/// Integral of radial_j over [r_b, inf): exp(-r_b^2/2) (r_b^2 + 2).
double
s_edge(double r_b);

/// Core-to-edge ratio s_core / s_edge = 2 exp(r_b^2/2) / (r_b^2 + 2) - 1.
double
ratio_eta(double r_b);

/// Positive root of exp(r^2/2) - r^2 - 2 by bisection on [1.5, 2.5].
double
find_r_crit(double tolerance = 1e-12);

struct EdgeReportRow {
    double r_b                = 0.0;
    double s_core             = 0.0;
    double s_edge             = 0.0;
    double ratio_edge_to_core = 0.0;
    double gaussian_at_bound  = 0.0; ///< exp(-r_b^2/2)
};

std::vector<EdgeReportRow>
table_report(const std::vector<double> &r_b_list);

/// The radii tabulated by default: 1.5, 1.83, 2.0, 2.5, 3.0, 4.0.
std::vector<double>
default_table_radii();

/// `comments` are written as '#' lines before the column header.
void
write_table_csv(const std::filesystem::path &path,
                const std::vector<EdgeReportRow> &rows,
                const std::vector<std::string> &comments = {});

/// Line plot of eta(r_b), g(r) and J(r) over [0, 4] as a binary PPM.
void
write_curve_plot(const std::filesystem::path &path, int width = 480, int height = 320);

} // namespace splatlab
