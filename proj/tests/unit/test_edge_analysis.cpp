// Copyright Contributors to the splatlab project
// SPDX-License-Identifier: Apache-2.0
//
#include "splatlab/edge_analysis.hpp"
#include "splatlab/rasterizer.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace splatlab;

namespace {

// Printed table precision: values are cut (not rounded) to the shown decimals.
double
truncate_to(double v, int decimals) {
    const double s = std::pow(10.0, decimals);
    return std::floor(v * s) / s;
}

} // namespace

TEST(Response, ShapeAndPeak) {
    EXPECT_EQ(response_g(0.0), 0.0);
    EXPECT_LT(response_g(40.0), 1e-300);
    double best = 0.0, arg = 0.0;
    for (int k = 0; k <= 400000; ++k) {
        const double r = 4.0 * k / 400000.0;
        if (response_g(r) > best) {
            best = response_g(r);
            arg  = r;
        }
    }
    EXPECT_NEAR(arg, std::sqrt(2.0), 1e-4);
    EXPECT_NEAR(best, 2.0 / std::exp(1.0), 1e-9);
    EXPECT_NEAR(response_g(std::sqrt(2.0)), 2.0 / std::exp(1.0), 1e-15);
    EXPECT_NEAR(radial_j(1.0), std::exp(-0.5), 1e-15);
    EXPECT_EQ(radial_j(0.0), 0.0);
    EXPECT_THROW(response_g(-1.0), ContractViolation);
}

TEST(Regions, ClosedFormsMatchQuadrature) {
    // Integrand written out here so the quadrature shares no code with the library.
    auto radial_j = [](double r) { return r * r * r * std::exp(-0.5 * r * r); };
    const double total = fixtures::adaptive_simpson(radial_j, 0.0, 12.0, 1e-12);
    EXPECT_NEAR(total, 2.0, 1e-10);
    for (int k = 0; k <= 60; ++k) {
        const double r = 0.1 * k;
        const double core = fixtures::adaptive_simpson(radial_j, 0.0, r, 1e-10);
        const double edge = fixtures::adaptive_simpson(radial_j, r, 12.0, 1e-10);
        EXPECT_NEAR(s_core(r), core, 1e-8) << r;
        EXPECT_NEAR(s_edge(r), edge, 1e-8) << r;
        EXPECT_NEAR(s_core(r) + s_edge(r), 2.0, 1e-12);
    }
    EXPECT_EQ(s_core(0.0), 0.0);
    EXPECT_EQ(s_edge(0.0), 2.0);
}

TEST(Ratio, ClosedFormsAgreeAndIncrease) {
    double prev = -1.0;
    for (int k = 0; k <= 5000; ++k) {
        const double r = 6.0 * k / 5000.0;
        EXPECT_NEAR(ratio_eta(r), s_core(r) / s_edge(r), 1e-12 * std::max(1.0, ratio_eta(r)));
        EXPECT_GE(ratio_eta(r), prev);
        prev = ratio_eta(r);
    }
    EXPECT_EQ(ratio_eta(0.0), 0.0);
    EXPECT_NEAR(1.0 / ratio_eta(4.0), 3e-3, 5e-4);
}

TEST(CriticalRadius, RootAndValue) {
    const double r = find_r_crit(1e-12);
    EXPECT_NEAR(r, 1.832, 0.005);
    EXPECT_LT(std::abs(std::exp(0.5 * r * r) - r * r - 2.0), 1e-10);
    EXPECT_NEAR(ratio_eta(r), 1.0, 1e-10);
    EXPECT_EQ(std::round(r * 100) / 100, 1.83);
    // Independent bracket search: scan for the sign change, then bisect.
    double lo = 1.0, hi = 3.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (std::exp(0.5 * mid * mid) - mid * mid - 2.0 < 0 ? lo : hi) = mid;
    }
    EXPECT_NEAR(r, lo, 1e-10);
    EXPECT_THROW(find_r_crit(0.0), ContractViolation);
}

TEST(TableReport, RowsAgainstPrintedTable) {
    const auto rows = table_report(default_table_radii());
    ASSERT_EQ(rows.size(), 6u);
    const double ratio[] = {2.22, 1.00, 0.68, 0.22, 0.06, 3e-3};
    const double g[]     = {0.324, 0.187, 0.135, 0.043, 0.011, 0.000};
    for (std::size_t i = 0; i < rows.size(); ++i) {
        EXPECT_NEAR(rows[i].s_core + rows[i].s_edge, 2.0, 1e-12);
        EXPECT_NEAR(truncate_to(rows[i].ratio_edge_to_core, i == 5 ? 3 : 2), ratio[i], 0.005) << rows[i].r_b;
        EXPECT_NEAR(truncate_to(rows[i].gaussian_at_bound, 3), g[i], 0.005) << rows[i].r_b;
        EXPECT_NEAR(rows[i].gaussian_at_bound, std::exp(-0.5 * rows[i].r_b * rows[i].r_b), 1e-15);
    }
}

// Connects the closed form to the rasterizer: with a ring-shaped adjoint on acc_alpha, the summed
// screen-covariance gradient of an isotropic splat is proportional to the integral of J over the ring.
TEST(RingSum, RasterizerShapeGradientFollowsRadialDensity) {
    const int size     = 256;
    const double sigma = 20.0;
    Camera cam;
    cam.fx = cam.fy = 200.0;
    cam.cx = cam.cy = size / 2.0;
    cam.width = cam.height = size;
    GaussianPrimitive p;
    const double z = 4.0;
    p.mu           = Vec3(0, 0, z);
    // screen variance = (f s / z)^2 + floor = sigma^2
    const double s = std::sqrt(sigma * sigma - kCov2dFloor) * z / cam.fx;
    p.log_scale    = Vec3::Constant(std::log(s));
    p.opacity_logit = logit(0.8);
    RenderOptions opt;
    opt.gamma               = kInfiniteGamma;
    const RenderOutputs out = render({p}, cam, {}, opt);

    std::vector<double> ratios;
    for (int k = 0; k < 10; ++k) {
        const double r1 = 0.5 + 0.25 * k, r2 = r1 + 0.25;
        RenderAdjoints adj;
        adj.acc_alpha = Image(size, size, 1);
        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                const double r = (pixel_center(x, y) - Vec2(cam.cx, cam.cy)).norm() / sigma;
                if (r >= r1 && r < r2) adj.acc_alpha.at(x, y) = 1.0;
            }
        }
        const Gradients g = backward(out, adj, {p}, cam);
        const double shape = g[0].cov2d.trace();
        ratios.push_back(shape / (s_core(r2) - s_core(r1)));
    }
    // Continuum limit: the ring sum is base * pi times the J integral.
    for (double q : ratios) EXPECT_NEAR(q / (0.8 * std::numbers::pi), 1.0, 0.03);
}
