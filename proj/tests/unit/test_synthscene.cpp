// Copyright Contributors to the splatlab project
// SPDX-License-Identifier: Apache-2.0
//
#include "splatlab/synthscene.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

using namespace splatlab;

namespace {

/// Distance from `p` to the nearest analytic surface of the scene (independent of the ray caster).
double
surface_distance(const SceneSpec &spec, const Vec3 &p) {
    double best = std::numeric_limits<double>::infinity();
    for (const Surface &s : spec.surfaces) {
        double d = std::numeric_limits<double>::infinity();
        if (s.kind == SurfaceKind::Plane) {
            d = std::abs(s.normal.normalized().dot(p - s.center));
        } else if (s.kind == SurfaceKind::Sphere) {
            d = std::abs((p - s.center).norm() - s.radius);
        } else {
            d = std::abs(((p - s.center).cwiseAbs() - s.half_size).maxCoeff());
        }
        best = std::min(best, d);
    }
    return best;
}

bool
in_specular_patch(const SceneSpec &spec, const Vec3 &p) {
    for (const SpecularPatch &sp : spec.specular) {
        if ((p - sp.center).norm() <= sp.radius + 1e-6) return true;
    }
    return false;
}

SceneSpec
sphere_scene() {
    SceneSpec s;
    Surface ball;
    ball.kind               = SurfaceKind::Sphere;
    ball.radius             = 0.5;
    ball.texture.color_a    = Vec3(0.4, 0.5, 0.6);
    s.surfaces              = {ball};
    s.cameras.count         = 4;
    s.cameras.radius        = 2.0;
    s.cameras.elevation_deg = 0.0;
    s.width = s.height = 65;
    return s;
}

} // namespace

TEST(SceneSpec, ValidationRejectsBadSpecs) {
    EXPECT_NO_THROW(validate(desk_scene()));
    SceneSpec s = desk_scene();
    s.cameras.count = 2;
    EXPECT_THROW(validate(s), ContractViolation);
    s = desk_scene();
    s.surfaces[2].radius = 2.0;
    EXPECT_THROW(validate(s), ContractViolation);
    s = desk_scene();
    s.noise.depth_sigma = -0.1;
    EXPECT_THROW(validate(s), ContractViolation);
    s = desk_scene();
    s.specular[0].surface = 9;
    EXPECT_THROW(validate(s), ContractViolation);
    EXPECT_EQ(scene_range(desk_scene()), 2.0);
    EXPECT_TRUE(lambertian_scene().specular.empty());
}

TEST(SceneSpec, JsonRoundTrip) {
    const SceneSpec s   = desk_scene();
    const std::string j = scene_spec_to_json(s);
    EXPECT_EQ(scene_spec_to_json(scene_spec_from_json(j)), j);
    EXPECT_THROW(scene_spec_from_json("{"), ContractViolation);
    EXPECT_THROW(scene_spec_from_json(R"({"surfaces":[{"kind":"torus"}]})"), ContractViolation);
}

TEST(RenderGt, ConstantPlaneIsConstantColor) {
    SceneSpec s;
    Surface plane;
    plane.half_extent    = Vec2(1.0, 1.0);
    plane.texture.color_a = Vec3(0.3, 0.6, 0.2);
    s.surfaces           = {plane};
    s.cameras.elevation_deg = 89.0;
    s.cameras.radius        = 1.0;
    s.cameras.count         = 3;
    s.width = s.height = 24;
    const auto cams = scene_cameras(s);
    const auto gt   = render_gt(s, cams[0]);
    const Vec3 first = gt.color.rgb(0, 0);
    for (int y = 0; y < 24; ++y) {
        for (int x = 0; x < 24; ++x) {
            ASSERT_EQ(gt.hit.at(x, y), 1.0);
            EXPECT_EQ(gt.color.rgb(x, y), first);
        }
    }
}

TEST(RenderGt, SphereDepthMatchesAnalyticRay) {
    const SceneSpec s = sphere_scene();
    const Camera cam  = scene_cameras(s)[0];
    const auto gt     = render_gt(s, cam);
    EXPECT_NEAR(gt.depth.at(32, 32), 1.5, 1e-12);
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            // Unit ray from the camera centre; front root of |o + t d|^2 = r^2.
            const Vec3 dc((x + 0.5 - cam.cx) / cam.fx, (y + 0.5 - cam.cy) / cam.fy, 1.0);
            const Vec3 d   = cam.rotation.transpose() * dc.normalized();
            const Vec3 o   = cam.center();
            const double b = o.dot(d), c = o.squaredNorm() - 0.25;
            if (b * b - c < 0) {
                EXPECT_EQ(gt.hit.at(x, y), 0.0);
                continue;
            }
            const double t = -b - std::sqrt(b * b - c);
            ASSERT_EQ(gt.hit.at(x, y), 1.0);
            EXPECT_NEAR(gt.depth.at(x, y), t * dc.normalized().z(), 1e-9);
            const Vec3 n_world = (o + t * d).normalized();
            EXPECT_LT((gt.normal.rgb(x, y) - cam.rotation * n_world).norm(), 1e-8);
        }
    }
}

TEST(RenderGt, DepthsBackprojectOntoSurfaces) {
    const SceneSpec s = desk_scene();
    for (const Camera &cam : scene_cameras(s)) {
        const auto gt = render_gt(s, cam);
        for (int y = 0; y < cam.height; ++y) {
            for (int x = 0; x < cam.width; ++x) {
                if (gt.hit.at(x, y) == 0.0) continue;
                const Vec3 p = cam.to_world(cam.backproject(x + 0.5, y + 0.5, gt.depth.at(x, y)));
                EXPECT_LT(surface_distance(s, p), 1e-9);
                const Vec3 ray((x + 0.5 - cam.cx) / cam.fx, (y + 0.5 - cam.cy) / cam.fy, 1.0);
                EXPECT_LE(gt.normal.rgb(x, y).dot(ray), 1e-12); // faces the camera
            }
        }
    }
}

// Lambertian regions reproject consistently across views; specular patches do not.
TEST(RenderGt, MultiViewConsistencyAndInjectedAmbiguity) {
    const SceneSpec s = desk_scene();
    const auto cams   = scene_cameras(s);
    std::vector<GroundTruthView> gts;
    for (const Camera &c : cams) gts.push_back(render_gt(s, c));
    int lambertian_checked = 0;
    const Camera &a        = cams[0];
    for (int y = 0; y < a.height; ++y) {
        for (int x = 0; x < a.width; ++x) {
            if (gts[0].hit.at(x, y) == 0.0) continue;
            const Vec3 p = a.to_world(a.backproject(x + 0.5, y + 0.5, gts[0].depth.at(x, y)));
            if (in_specular_patch(s, p)) continue;
            for (std::size_t v = 1; v < cams.size(); ++v) {
                const Vec3 eye = cams[v].center();
                const auto hit = intersect(s, eye, p - eye);
                if (!hit || (hit->point - p).norm() > 1e-9) continue; // occluded from view v
                const Vec3 cb = shade(s, *hit, eye);
                EXPECT_LT((cb - gts[0].color.rgb(x, y)).norm(), 1e-6);
                ++lambertian_checked;
            }
        }
    }
    EXPECT_GT(lambertian_checked, 5000);

    // Every patch pixel seen by any view is a candidate; the luminance spread over the views that
    // see the same surface point must exceed half the lobe strength for some candidate.
    for (std::size_t k = 0; k < s.specular.size(); ++k) {
        const SpecularPatch &sp = s.specular[k];
        double widest           = 0.0;
        for (std::size_t v = 0; v < cams.size(); ++v) {
            const Camera &c = cams[v];
            for (int y = 0; y < c.height; ++y) {
                for (int x = 0; x < c.width; ++x) {
                    if (gts[v].hit.at(x, y) == 0.0) continue;
                    const Vec3 p = c.to_world(c.backproject(x + 0.5, y + 0.5, gts[v].depth.at(x, y)));
                    if ((p - sp.center).norm() > sp.radius) continue;
                    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
                    for (const Camera &other : cams) {
                        const Vec3 eye = other.center();
                        const auto h   = intersect(s, eye, p - eye);
                        if (!h || h->surface != sp.surface || (h->point - p).norm() > 1e-9) continue;
                        const double lum = shade(s, *h, eye).sum() / 3.0;
                        lo               = std::min(lo, lum);
                        hi               = std::max(hi, lum);
                    }
                    widest = std::max(widest, hi - lo);
                }
            }
        }
        EXPECT_GT(widest, sp.strength / 2.0) << "patch " << k;
    }
}

TEST(MakePriors, ZeroNoiseIsIdentity) {
    const SceneSpec s = desk_scene();
    const auto gt     = render_gt(s, scene_cameras(s)[0]);
    const Priors pr   = make_priors(gt.depth, gt.normal, PriorNoise{}, 9);
    EXPECT_EQ(pr.depth.data, gt.depth.data);
    for (std::size_t i = 0; i < gt.normal.data.size(); ++i) EXPECT_NEAR(pr.normal.data[i], gt.normal.data[i], 1e-15);
}

TEST(MakePriors, NoiseStatistics) {
    const int w = 400, h = 250; // 1e5 pixels
    Image depth(w, h, 1), normal(w, h, 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            depth.at(x, y) = 1.0 + 2.0 * x / w + 0.5 * y / h;
            normal.set_rgb(x, y, Vec3(0.2 * x / w, -0.1, -1.0).normalized());
        }
    }
    const Priors pr = make_priors(depth, normal, PriorNoise{0.02, 0.0, 5.0}, 11);
    double sum2 = 0.0, ang2 = 0.0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double rel = pr.depth.at(x, y) / depth.at(x, y) - 1.0;
            sum2 += rel * rel;
            const double c = std::clamp(pr.normal.rgb(x, y).dot(normal.rgb(x, y)), -1.0, 1.0);
            ang2 += std::acos(c) * std::acos(c);
            EXPECT_NEAR(pr.normal.rgb(x, y).norm(), 1.0, 1e-12);
        }
    }
    const double n = static_cast<double>(w) * h;
    EXPECT_NEAR(std::sqrt(sum2 / n), 0.02, 0.0006);
    EXPECT_NEAR(std::sqrt(ang2 / n) * 180.0 / std::numbers::pi, 5.0, 0.15);

    const Priors out = make_priors(depth, normal, PriorNoise{0.02, 0.05, 0.0}, 12);
    int outside      = 0;
    for (int i = 0; i < w * h; ++i) outside += std::abs(std::log(out.depth.data[i] / depth.data[i])) > 3 * 0.02;
    EXPECT_NEAR(outside / n, 0.05, 0.01);

    // Deterministic per seed.
    EXPECT_EQ(make_priors(depth, normal, PriorNoise{0.02, 0.05, 3.0}, 12).depth.data,
              make_priors(depth, normal, PriorNoise{0.02, 0.05, 3.0}, 12).depth.data);
    EXPECT_NE(make_priors(depth, normal, PriorNoise{0.02, 0.05, 3.0}, 12).depth.data,
              make_priors(depth, normal, PriorNoise{0.02, 0.05, 3.0}, 13).depth.data);
}

TEST(InitPrimitives, BackprojectedPlanePoints) {
    SceneSpec s;
    Surface plane;
    plane.half_extent     = Vec2(0.6, 0.6);
    plane.texture.kind    = TextureKind::Checker;
    plane.texture.color_b = Vec3(0.1, 0.2, 0.9);
    s.surfaces            = {plane};
    s.width = s.height = 32;
    const auto cams = scene_cameras(s);
    std::vector<GroundTruthView> gts;
    for (const Camera &c : cams) gts.push_back(render_gt(s, c));
    std::vector<InitView> views;
    for (std::size_t v = 0; v < cams.size(); ++v) views.push_back({cams[v], &gts[v].color, &gts[v].depth});

    const auto prims = init_primitives(s, views, InitMode::DepthBackproject, 500, 3);
    ASSERT_EQ(prims.size(), 500u);
    for (const auto &p : prims) {
        EXPECT_LT(std::abs(p.mu.z()), 1e-6);
        EXPECT_NEAR(sigmoid(p.opacity_logit), 0.1, 1e-12);
        EXPECT_EQ(p.sh.rest.squaredNorm(), 0.0);
        EXPECT_EQ(p.log_scale.x(), p.log_scale.y());
        EXPECT_EQ(p.log_scale.x(), p.log_scale.z());
        EXPECT_GT(std::exp(p.log_scale.x()), 0.0);
        // Find the source pixel: some view sees the point exactly at a pixel centre.
        bool matched = false;
        for (std::size_t v = 0; v < cams.size() && !matched; ++v) {
            const Vec3 pc = cams[v].to_camera(p.mu);
            const double u = cams[v].fx * pc.x() / pc.z() + cams[v].cx, w = cams[v].fy * pc.y() / pc.z() + cams[v].cy;
            const int x = static_cast<int>(std::floor(u)), y = static_cast<int>(std::floor(w));
            if (x < 0 || y < 0 || x >= s.width || y >= s.height) continue;
            if (std::abs(u - x - 0.5) > 1e-6 || std::abs(w - y - 0.5) > 1e-6) continue;
            matched = p.sh.dc == gts[v].color.rgb(x, y);
        }
        EXPECT_TRUE(matched);
    }
    EXPECT_THROW(init_primitives(s, views, InitMode::DepthBackproject, 1000000, 3), ContractViolation);

    const auto random = init_primitives(s, {}, InitMode::Random, 200, 4);
    ASSERT_EQ(random.size(), 200u);
    for (const auto &p : random) EXPECT_LE(p.mu.cwiseAbs().maxCoeff(), s.bound);
    EXPECT_EQ(parse_init_mode("random"), InitMode::Random);
    EXPECT_THROW(parse_init_mode("sfm"), ContractViolation);
}

TEST(Dataset, WritesImagesGridsAndManifest) {
    SceneSpec s = desk_scene();
    s.width = s.height = 16;
    s.cameras.count    = 3;
    const auto dir     = std::filesystem::temp_directory_path() / "splatlab_dataset_test";
    std::filesystem::remove_all(dir);
    write_dataset(dir, s);
    for (const char *f : {"color_000.ppm", "depth_002.grid", "prior_normal_001.grid", "scene.json"}) {
        EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
    }
    std::ifstream in(dir / "cameras.txt");
    std::string line;
    int rows = 0;
    while (std::getline(in, line)) rows += !line.empty() && line[0] != '#';
    EXPECT_EQ(rows, 3);
    const Dataset ds = generate_dataset(s);
    const Image grid = read_float_grid(dir / "depth_002.grid");
    ASSERT_EQ(grid.data.size(), ds.gt[2].depth.data.size());
    for (std::size_t i = 0; i < grid.data.size(); ++i) {
        EXPECT_EQ(grid.data[i], static_cast<double>(static_cast<float>(ds.gt[2].depth.data[i])));
    }
    EXPECT_EQ(scene_spec_to_json(read_scene_spec(dir / "scene.json")), scene_spec_to_json(s));
    std::filesystem::remove_all(dir);
}
