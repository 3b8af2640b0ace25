// Copyright Contributors to the splatlab project
// SPDX-License-Identifier: Apache-2.0
//
#include "splatlab/evalmetrics.hpp"
#include "splatlab/random.hpp"
#include "splatlab/synthscene.hpp"

#include <gtest/gtest.h>

#include <Eigen/Geometry>

#include <cmath>
#include <set>

using namespace splatlab;

namespace {

PointCloud
random_cloud(Rng &rng, int n, double spread = 1.0) {
    PointCloud c;
    for (int i = 0; i < n; ++i) c.points.emplace_back(rng.uniform(-spread, spread), rng.uniform(-spread, spread), rng.normal());
    return c;
}

double
brute_directed(const PointCloud &a, const PointCloud &b) {
    double sum = 0.0;
    for (const Vec3 &p : a.points) {
        double best = std::numeric_limits<double>::infinity();
        for (const Vec3 &q : b.points) best = std::min(best, (p - q).squaredNorm());
        sum += std::sqrt(best);
    }
    return sum / static_cast<double>(a.points.size());
}

SceneSpec
plane_only_scene() {
    SceneSpec s;
    Surface plane;
    plane.half_extent       = Vec2(0.5, 0.5);
    plane.texture.kind      = TextureKind::Checker;
    plane.texture.color_b   = Vec3(0.2, 0.3, 0.4);
    s.surfaces              = {plane};
    s.cameras.count         = 8;
    s.cameras.radius        = 2.5;
    s.cameras.elevation_deg = 60.0;
    return s;
}

} // namespace

TEST(KdTree, NearestAndKNearestMatchBruteForce) {
    Rng rng(1);
    auto cloud = random_cloud(rng, 700).points;
    cloud.push_back(cloud[5]); // duplicate: ties resolve to the lower index
    const KdTree tree(cloud);
    for (int q = 0; q < 300; ++q) {
        const Vec3 p = q == 0 ? cloud[5] : Vec3(rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5), rng.normal());
        std::size_t bi = 0;
        double bd      = std::numeric_limits<double>::infinity();
        std::vector<std::pair<double, std::size_t>> all;
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            const double d = (cloud[i] - p).squaredNorm();
            all.emplace_back(d, i);
            if (d < bd) {
                bd = d;
                bi = i;
            }
        }
        const auto [idx, d2] = tree.nearest(p);
        EXPECT_EQ(idx, bi);
        EXPECT_EQ(d2, bd);
        std::sort(all.begin(), all.end());
        const auto knn = tree.k_nearest(p, 6);
        ASSERT_EQ(knn.size(), 6u);
        for (int k = 0; k < 6; ++k) {
            EXPECT_EQ(knn[k].first, all[k].second);
            EXPECT_EQ(knn[k].second, all[k].first);
        }
    }
    EXPECT_THROW(KdTree({}).nearest(Vec3::Zero()), ContractViolation);
}

TEST(Chamfer, IdentityAndSinglePoint) {
    Rng rng(2);
    const PointCloud a = random_cloud(rng, 200);
    const ChamferResult same = chamfer(a, a);
    EXPECT_EQ(same.d_to_s, 0.0);
    EXPECT_EQ(same.s_to_d, 0.0);
    EXPECT_EQ(same.mean, 0.0);
    const ChamferResult one = chamfer(PointCloud{{Vec3::Zero()}, {}}, PointCloud{{Vec3(1, 0, 0)}, {}});
    EXPECT_EQ(one.d_to_s, 1.0);
    EXPECT_EQ(one.s_to_d, 1.0);
    EXPECT_EQ(one.mean, 1.0);
    EXPECT_THROW(chamfer(PointCloud{}, a), ContractViolation);
    EXPECT_THROW(chamfer(a, PointCloud{}), ContractViolation);
}

TEST(Chamfer, MatchesBruteForceAllPairs) {
    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        const PointCloud a = random_cloud(rng, 1 + static_cast<int>(rng.below(500)));
        const PointCloud b = random_cloud(rng, 1 + static_cast<int>(rng.below(500)), 0.7);
        const ChamferResult r = chamfer(a, b);
        EXPECT_NEAR(r.d_to_s, brute_directed(a, b), 1e-12);
        EXPECT_NEAR(r.s_to_d, brute_directed(b, a), 1e-12);
        EXPECT_NEAR(r.mean, 0.5 * (brute_directed(a, b) + brute_directed(b, a)), 1e-12);
        const ChamferResult swapped = chamfer(b, a);
        EXPECT_EQ(swapped.s_to_d, r.d_to_s);
        EXPECT_EQ(swapped.d_to_s, r.s_to_d);
    }
}

TEST(Chamfer, InvariantUnderCommonRigidTransform) {
    Rng rng(4);
    PointCloud a = random_cloud(rng, 300), b = random_cloud(rng, 250);
    const ChamferResult before = chamfer(a, b);
    const Mat3 rot = Eigen::Quaterniond(Vec4(rng.normal(), rng.normal(), rng.normal(), rng.normal()).normalized())
                         .toRotationMatrix();
    const Vec3 shift(3.0, -2.0, 7.5);
    for (auto *c : {&a, &b}) {
        for (Vec3 &p : c->points) p = rot * p + shift;
    }
    const ChamferResult after = chamfer(a, b);
    EXPECT_NEAR(after.d_to_s, before.d_to_s, 1e-9);
    EXPECT_NEAR(after.s_to_d, before.s_to_d, 1e-9);
    EXPECT_NEAR(after.mean, before.mean, 1e-9);
}

TEST(FuseDepth, PlanePointsAndDedup) {
    const SceneSpec spec = plane_only_scene();
    const auto cams      = scene_cameras(spec);
    std::vector<Image> depths, accs;
    for (const Camera &c : cams) {
        const auto gt = render_gt(spec, c);
        depths.push_back(gt.depth);
        accs.push_back(gt.hit);
    }
    const PointCloud all = fuse_depth(cams, depths, accs, 0.5);
    std::size_t hits     = 0;
    for (const Image &a : accs) {
        for (double v : a.data) hits += v > 0.5;
    }
    EXPECT_EQ(all.points.size(), hits);
    for (const Vec3 &p : all.points) {
        EXPECT_LT(std::abs(p.z()), 1e-6);
        EXPECT_LE(p.cwiseAbs().head<2>().maxCoeff(), 0.5 + 1e-6);
    }

    const double cell = 0.05;
    const std::vector<Camera> two(cams.begin(), cams.begin() + 2);
    const std::vector<Image> d2(depths.begin(), depths.begin() + 2), a2(accs.begin(), accs.begin() + 2);
    const PointCloud full  = fuse_depth(two, d2, a2, 0.5);
    const PointCloud dedup = fuse_depth(two, d2, a2, 0.5, cell);
    std::set<std::array<long, 3>> cells_full, cells_dedup;
    for (const Vec3 &p : full.points) {
        cells_full.insert({std::lround(std::floor(p.x() / cell)), std::lround(std::floor(p.y() / cell)),
                           std::lround(std::floor(p.z() / cell))});
    }
    for (const Vec3 &p : dedup.points) {
        cells_dedup.insert({std::lround(std::floor(p.x() / cell)), std::lround(std::floor(p.y() / cell)),
                            std::lround(std::floor(p.z() / cell))});
    }
    EXPECT_EQ(cells_dedup.size(), dedup.points.size()); // one point per occupied cell
    EXPECT_EQ(cells_dedup, cells_full);                 // and no occupied cell is lost
    EXPECT_LT(dedup.points.size(), full.points.size());
}

TEST(FuseDepth, Errors) {
    Camera cam = Camera::look_at(Vec3(0, 0, -2), Vec3::Zero(), Vec3(0, -1, 0), 40, 8, 8);
    const Image depth(8, 8, 1, 2.0), low(8, 8, 1, 0.3);
    EXPECT_THROW(fuse_depth({cam}, {depth}, {low}, 0.5), NumericalError);
    EXPECT_THROW(fuse_depth({cam, cam}, {depth}, {low}, 0.5), ContractViolation);
    EXPECT_THROW(fuse_depth({cam}, {Image(4, 4, 1)}, {Image(4, 4, 1)}, 0.5), ContractViolation);
}

TEST(FuseDepth, ExactDepthsAgreeWithAnalyticSurface) {
    const SceneSpec spec = plane_only_scene();
    const auto cams      = scene_cameras(spec);
    std::vector<Image> depths, accs;
    for (const Camera &c : cams) {
        const auto gt = render_gt(spec, c);
        depths.push_back(gt.depth);
        accs.push_back(gt.hit);
    }
    const PointCloud fused = fuse_depth(cams, depths, accs, 0.5, default_dedup_cell(2.0 * spec.bound));
    PointCloud analytic;
    for (int i = 0; i <= 200; ++i) {
        for (int j = 0; j <= 200; ++j) analytic.points.emplace_back(-0.5 + i / 200.0, -0.5 + j / 200.0, 0.0);
    }
    const double footprint = spec.cameras.radius / cams[0].fx;
    const ChamferResult r  = chamfer(fused, analytic);
    EXPECT_LT(r.mean, 2.0 * footprint);
}

TEST(Psnr, Examples) {
    Image a(8, 8, 3, 0.5);
    EXPECT_EQ(psnr(a, a), kPsnrCap);
    Image b = a;
    for (double &v : b.data) v += 0.1;
    EXPECT_NEAR(psnr(b, a), 20.0, 1e-9);
    Rng rng(5);
    double prev = kPsnrCap;
    for (double sigma : {0.01, 0.03, 0.1, 0.2}) {
        Image n = a;
        Rng local(5);
        for (double &v : n.data) v = std::clamp(v + sigma * local.normal(), 0.0, 1.0);
        const double p = psnr(n, a);
        EXPECT_LT(p, prev);
        prev = p;
    }
    EXPECT_THROW(psnr(a, Image(8, 8, 1)), ContractViolation);
    EXPECT_THROW(psnr(Image(8, 8, 3, 1.5), a), ContractViolation);
}
