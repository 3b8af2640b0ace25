// Copyright Contributors to the splatlab project
// SPDX-License-Identifier: Apache-2.0
//
#include "splatlab/synthscene.hpp"

#include "splatlab/evalmetrics.hpp"
#include "splatlab/random.hpp"

#include <fmt/format.h>
#include <fmt/os.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace splatlab {

namespace {

constexpr double kRayEpsilon = 1e-9;

std::uint64_t
splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

double
lattice_value(std::uint64_t seed, std::int64_t i, std::int64_t j, std::int64_t k) {
    std::uint64_t h = splitmix(seed);
    h               = splitmix(h ^ static_cast<std::uint64_t>(i));
    h               = splitmix(h ^ static_cast<std::uint64_t>(j));
    h               = splitmix(h ^ static_cast<std::uint64_t>(k));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double
value_noise(const Vec3 &p, std::uint64_t seed) {
    const Vec3 f = p.array().floor();
    const Vec3 r = p - f;
    const Vec3 s = r.array() * r.array() * (3.0 - 2.0 * r.array());
    const auto i = static_cast<std::int64_t>(f.x()), j = static_cast<std::int64_t>(f.y()),
               k = static_cast<std::int64_t>(f.z());
    double v = 0.0;
    for (int c = 0; c < 8; ++c) {
        const int dx = c & 1, dy = (c >> 1) & 1, dz = (c >> 2) & 1;
        const double w = (dx ? s.x() : 1 - s.x()) * (dy ? s.y() : 1 - s.y()) * (dz ? s.z() : 1 - s.z());
        v += w * lattice_value(seed, i + dx, j + dy, k + dz);
    }
    return v;
}

struct PlaneFrame {
    Vec3 n, u, v;
};

PlaneFrame
plane_frame(const Surface &s) {
    const Vec3 n = s.normal.normalized();
    const Vec3 u = (s.axis_u - s.axis_u.dot(n) * n).normalized();
    return {n, u, n.cross(u)};
}

Vec3
albedo(const Surface &s, const Vec3 &p) {
    const Texture &tex = s.texture;
    switch (tex.kind) {
    case TextureKind::Constant:
        return tex.color_a;
    case TextureKind::Checker: {
        std::int64_t parity = 0;
        if (s.kind == SurfaceKind::Plane) {
            const PlaneFrame fr = plane_frame(s);
            parity = static_cast<std::int64_t>(std::floor(tex.frequency * (p - s.center).dot(fr.u))) +
                     static_cast<std::int64_t>(std::floor(tex.frequency * (p - s.center).dot(fr.v)));
        } else {
            // Offset keeps cell boundaries off axis-aligned box faces.
            const Vec3 q = tex.frequency * p + Vec3(0.1234567, 0.2345678, 0.3456789);
            parity = static_cast<std::int64_t>(std::floor(q.x())) + static_cast<std::int64_t>(std::floor(q.y())) +
                     static_cast<std::int64_t>(std::floor(q.z()));
        }
        return (parity & 1) ? tex.color_b : tex.color_a;
    }
    case TextureKind::Noise: {
        const double t = value_noise(tex.frequency * p, tex.seed);
        return (1.0 - t) * tex.color_a + t * tex.color_b;
    }
    }
    return tex.color_a;
}

std::optional<RayHit>
intersect_surface(const Surface &s, const Vec3 &o, const Vec3 &d) {
    switch (s.kind) {
    case SurfaceKind::Plane: {
        const PlaneFrame fr = plane_frame(s);
        const double denom  = fr.n.dot(d);
        if (std::abs(denom) < 1e-15) return std::nullopt;
        const double t = fr.n.dot(s.center - o) / denom;
        if (!(t > kRayEpsilon)) return std::nullopt;
        const Vec3 p = o + t * d;
        if (std::abs((p - s.center).dot(fr.u)) > s.half_extent.x() ||
            std::abs((p - s.center).dot(fr.v)) > s.half_extent.y()) {
            return std::nullopt;
        }
        return RayHit{t, p, denom < 0 ? fr.n : Vec3(-fr.n), -1};
    }
    case SurfaceKind::Sphere: {
        const Vec3 oc   = o - s.center;
        const double a  = d.squaredNorm();
        const double b  = oc.dot(d);
        const double c  = oc.squaredNorm() - s.radius * s.radius;
        const double disc = b * b - a * c;
        if (disc < 0.0) return std::nullopt;
        const double sq = std::sqrt(disc);
        double t        = (-b - sq) / a;
        if (!(t > kRayEpsilon)) t = (-b + sq) / a;
        if (!(t > kRayEpsilon)) return std::nullopt;
        const Vec3 p = o + t * d;
        Vec3 n       = (p - s.center).normalized();
        if (n.dot(d) > 0) n = -n;
        return RayHit{t, p, n, -1};
    }
    case SurfaceKind::Box: {
        double t0 = -std::numeric_limits<double>::infinity(), t1 = std::numeric_limits<double>::infinity();
        int axis0 = -1, axis1 = -1;
        for (int k = 0; k < 3; ++k) {
            const double lo = s.center(k) - s.half_size(k), hi = s.center(k) + s.half_size(k);
            if (d(k) == 0.0) {
                if (o(k) < lo || o(k) > hi) return std::nullopt;
                continue;
            }
            double ta = (lo - o(k)) / d(k), tb = (hi - o(k)) / d(k);
            if (ta > tb) std::swap(ta, tb);
            if (ta > t0) {
                t0    = ta;
                axis0 = k;
            }
            if (tb < t1) {
                t1    = tb;
                axis1 = k;
            }
        }
        if (t0 > t1) return std::nullopt;
        double t = t0;
        int axis = axis0;
        if (!(t > kRayEpsilon)) {
            t    = t1;
            axis = axis1;
        }
        if (!(t > kRayEpsilon) || axis < 0) return std::nullopt;
        Vec3 n     = Vec3::Zero();
        n(axis)    = d(axis) > 0 ? -1.0 : 1.0;
        return RayHit{t, o + t * d, n, -1};
    }
    }
    return std::nullopt;
}

std::vector<Vec3>
surface_extreme_points(const Surface &s) {
    std::vector<Vec3> pts;
    switch (s.kind) {
    case SurfaceKind::Plane: {
        const PlaneFrame fr = plane_frame(s);
        for (int a : {-1, 1}) {
            for (int b : {-1, 1}) pts.push_back(s.center + a * s.half_extent.x() * fr.u + b * s.half_extent.y() * fr.v);
        }
        break;
    }
    case SurfaceKind::Sphere:
        for (int k = 0; k < 3; ++k) {
            pts.push_back(s.center + s.radius * Vec3::Unit(k));
            pts.push_back(s.center - s.radius * Vec3::Unit(k));
        }
        break;
    case SurfaceKind::Box:
        for (int c = 0; c < 8; ++c) {
            pts.push_back(s.center + Vec3((c & 1) ? 1 : -1, (c & 2) ? 1 : -1, (c & 4) ? 1 : -1)
                                         .cwiseProduct(s.half_size));
        }
        break;
    }
    return pts;
}

// ---- JSON plumbing ------------------------------------------------------------------------------

using nlohmann::json;

json
vec_json(const Eigen::VectorXd &v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

template <int N>
Eigen::Matrix<double, N, 1>
json_vec(const json &j, const char *key, const Eigen::Matrix<double, N, 1> &fallback) {
    if (!j.contains(key)) return fallback;
    const auto v = j.at(key).get<std::vector<double>>();
    require(v.size() == N, fmt::format("scene: '{}' needs {} numbers", key, N));
    Eigen::Matrix<double, N, 1> out;
    for (int i = 0; i < N; ++i) out(i) = v[i];
    return out;
}

template <typename E>
E
enum_from(const std::string &s, std::initializer_list<std::pair<const char *, E>> table, const char *what) {
    for (const auto &[name, e] : table) {
        if (s == name) return e;
    }
    throw ContractViolation(fmt::format("scene: unknown {} '{}'", what, s));
}

const char *
texture_name(TextureKind k) {
    return k == TextureKind::Constant ? "constant" : k == TextureKind::Checker ? "checker" : "noise";
}

const char *
surface_name(SurfaceKind k) {
    return k == SurfaceKind::Plane ? "plane" : k == SurfaceKind::Sphere ? "sphere" : "box";
}

} // namespace

void
validate(const SceneSpec &spec) {
    require(spec.cameras.count >= 3, "scene: at least 3 cameras are required");
    require(spec.cameras.radius > 0.0, "scene: camera radius must be positive");
    require(spec.cameras.fov_y_deg > 0.0 && spec.cameras.fov_y_deg < 180.0, "scene: bad field of view");
    require(spec.width > 0 && spec.height > 0, "scene: image size must be positive");
    require(spec.bound > 0.0, "scene: bound must be positive");
    require(spec.noise.depth_sigma >= 0.0 && spec.noise.outlier_rate >= 0.0 && spec.noise.outlier_rate <= 1.0 &&
                spec.noise.normal_sigma_deg >= 0.0,
            "scene: noise parameters must be non-negative (outlier rate at most 1)");
    require(spec.ambient >= 0.0 && spec.ambient <= 1.0, "scene: ambient must lie in [0, 1]");
    require(spec.light_dir.norm() > 0.0, "scene: zero light direction");
    require(!spec.surfaces.empty(), "scene: no surfaces");
    for (const Surface &s : spec.surfaces) {
        if (s.kind == SurfaceKind::Plane) {
            require(s.normal.norm() > 0.0 && s.normal.normalized().cross(s.axis_u).norm() > 1e-9,
                    "scene: plane axis is degenerate");
            require((s.half_extent.array() > 0.0).all(), "scene: plane extent must be positive");
        }
        if (s.kind == SurfaceKind::Sphere) require(s.radius > 0.0, "scene: sphere radius must be positive");
        if (s.kind == SurfaceKind::Box) require((s.half_size.array() > 0.0).all(), "scene: box size must be positive");
        require(s.texture.frequency > 0.0, "scene: texture frequency must be positive");
        for (const Vec3 &p : surface_extreme_points(s)) {
            require(p.cwiseAbs().maxCoeff() <= spec.bound + 1e-12, "scene: surface outside the scene bound");
        }
    }
    for (const SpecularPatch &sp : spec.specular) {
        require(sp.surface >= 0 && sp.surface < static_cast<int>(spec.surfaces.size()),
                "scene: specular patch refers to a missing surface");
        require(sp.radius > 0.0 && sp.strength >= 0.0 && sp.sharpness >= 0.0, "scene: bad specular patch");
    }
    for (const TexturelessRegion &r : spec.textureless) require(r.radius > 0.0, "scene: bad textureless region");
}

std::vector<Camera>
scene_cameras(const SceneSpec &spec) {
    validate(spec);
    const CameraLayout &lay = spec.cameras;
    std::vector<Camera> cams;
    const double el = lay.elevation_deg * std::numbers::pi / 180.0;
    for (int k = 0; k < lay.count; ++k) {
        double az;
        if (lay.kind == CameraLayoutKind::Ring) {
            az = 2.0 * std::numbers::pi * k / lay.count;
        } else {
            az = (-0.5 + static_cast<double>(k) / (lay.count - 1)) * lay.arc_deg * std::numbers::pi / 180.0;
        }
        const Vec3 eye = lay.target + lay.radius * Vec3(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
        cams.push_back(Camera::look_at(eye, lay.target, Vec3::UnitZ(), lay.fov_y_deg, spec.width, spec.height));
    }
    return cams;
}

std::optional<RayHit>
intersect(const SceneSpec &spec, const Vec3 &origin, const Vec3 &dir) {
    std::optional<RayHit> best;
    for (std::size_t i = 0; i < spec.surfaces.size(); ++i) {
        auto h = intersect_surface(spec.surfaces[i], origin, dir);
        if (h && (!best || h->t < best->t)) {
            h->surface = static_cast<int>(i);
            best       = h;
        }
    }
    return best;
}

Vec3
shade(const SceneSpec &spec, const RayHit &hit, const Vec3 &eye, double *specular) {
    const Surface &s = spec.surfaces[hit.surface];
    Vec3 base        = albedo(s, hit.point);
    for (const TexturelessRegion &r : spec.textureless) {
        if ((hit.point - r.center).norm() <= r.radius) base = r.color;
    }
    const Vec3 l        = spec.light_dir.normalized();
    const double lambert = std::max(0.0, hit.normal.dot(l));
    Vec3 color          = base * (spec.ambient + (1.0 - spec.ambient) * lambert);

    double lobe = 0.0;
    for (const SpecularPatch &sp : spec.specular) {
        if (sp.surface != hit.surface || (hit.point - sp.center).norm() > sp.radius) continue;
        const Vec3 refl = 2.0 * hit.normal.dot(l) * hit.normal - l;
        const Vec3 view = (eye - hit.point).normalized();
        lobe += sp.strength * std::pow(std::max(0.0, refl.dot(view)), sp.sharpness);
    }
    if (specular) *specular = lobe;
    color.array() += lobe;
    return color.cwiseMax(0.0).cwiseMin(1.0);
}

GroundTruthView
render_gt(const SceneSpec &spec, const Camera &cam) {
    validate(spec);
    cam.validate();
    GroundTruthView gt;
    gt.color    = Image(cam.width, cam.height, 3);
    gt.depth    = Image(cam.width, cam.height, 1);
    gt.normal   = Image(cam.width, cam.height, 3);
    gt.hit      = Image(cam.width, cam.height, 1);
    gt.specular = Image(cam.width, cam.height, 1);
    const Vec3 eye = cam.center();
    const Mat3 rt  = cam.rotation.transpose();
    const int n    = cam.width * cam.height;
#pragma omp parallel for schedule(static) num_threads(thread_count())
    for (int i = 0; i < n; ++i) {
        const int x = i % cam.width, y = i / cam.width;
        // Unit camera z so the ray parameter is the camera-space depth.
        const Vec3 dir_cam((x + 0.5 - cam.cx) / cam.fx, (y + 0.5 - cam.cy) / cam.fy, 1.0);
        const auto hit = intersect(spec, eye, rt * dir_cam);
        if (!hit) {
            gt.color.set_rgb(x, y, spec.background);
            continue;
        }
        double lobe = 0.0;
        gt.color.set_rgb(x, y, shade(spec, *hit, eye, &lobe));
        gt.depth.at(x, y)    = hit->t;
        gt.normal.set_rgb(x, y, cam.rotation * hit->normal);
        gt.hit.at(x, y)      = 1.0;
        gt.specular.at(x, y) = lobe;
    }
    return gt;
}

Priors
make_priors(const Image &gt_depth, const Image &gt_normal, const PriorNoise &noise, std::uint64_t seed) {
    require(gt_depth.channels == 1 && gt_normal.channels == 3 && gt_depth.width == gt_normal.width &&
                gt_depth.height == gt_normal.height,
            "make_priors: depth must have 1 channel and normals 3, with equal sizes");
    require(noise.depth_sigma >= 0.0 && noise.outlier_rate >= 0.0 && noise.outlier_rate <= 1.0 &&
                noise.normal_sigma_deg >= 0.0,
            "make_priors: bad noise parameters");
    Priors pr{gt_depth, gt_normal};
    double dmin = std::numeric_limits<double>::infinity(), dmax = 0.0;
    for (double d : gt_depth.data) {
        if (d > 0.0) {
            dmin = std::min(dmin, d);
            dmax = std::max(dmax, d);
        }
    }
    Rng rng(splitmix(seed));
    const double sigma_n = noise.normal_sigma_deg * std::numbers::pi / 180.0;
    for (int y = 0; y < gt_depth.height; ++y) {
        for (int x = 0; x < gt_depth.width; ++x) {
            const double d = gt_depth.at(x, y);
            if (d > 0.0) {
                const double factor = std::exp(noise.depth_sigma * rng.normal());
                pr.depth.at(x, y)   = rng.uniform() < noise.outlier_rate ? rng.uniform(0.5 * dmin, 1.5 * dmax) : d * factor;
            }
            const Vec3 n = gt_normal.rgb(x, y);
            if (n.squaredNorm() > 0.0) {
                const double angle = sigma_n * rng.normal();
                Vec3 t             = rng.unit_vector();
                t                  = t - t.dot(n) * n / n.squaredNorm();
                if (t.norm() < 1e-12) t = n.unitOrthogonal();
                pr.normal.set_rgb(x, y, std::cos(angle) * n.normalized() + std::sin(angle) * t.normalized());
            }
        }
    }
    return pr;
}

InitMode
parse_init_mode(const std::string &name) {
    if (name == "depth_backproject") return InitMode::DepthBackproject;
    if (name == "random") return InitMode::Random;
    throw ContractViolation(fmt::format("unknown init mode '{}'", name));
}

std::vector<GaussianPrimitive>
init_primitives(const SceneSpec &spec,
                const std::vector<InitView> &views,
                InitMode mode,
                int count,
                std::uint64_t seed,
                int sh_degree) {
    require(count > 0, "init_primitives: count must be positive");
    Rng rng(splitmix(seed ^ 0x5eed));
    std::vector<GaussianPrimitive> prims;
    prims.reserve(count);

    if (mode == InitMode::Random) {
        const double spacing = 2.0 * spec.bound / std::cbrt(static_cast<double>(count));
        for (int i = 0; i < count; ++i) {
            GaussianPrimitive p;
            p.mu            = Vec3(rng.uniform(-spec.bound, spec.bound), rng.uniform(-spec.bound, spec.bound),
                                   rng.uniform(-spec.bound, spec.bound));
            p.log_scale     = Vec3::Constant(std::log(0.5 * spacing));
            p.opacity_logit = logit(0.1);
            p.sh            = ShCoefficients(sh_degree);
            p.sh.dc         = Vec3(rng.uniform(), rng.uniform(), rng.uniform());
            prims.push_back(p);
        }
        return prims;
    }

    struct Candidate {
        int view, x, y;
    };
    std::vector<Candidate> cand;
    for (std::size_t v = 0; v < views.size(); ++v) {
        const InitView &iv = views[v];
        require(iv.color && iv.depth, "init_primitives: view without color or depth");
        require(iv.depth->width == iv.camera.width && iv.depth->height == iv.camera.height &&
                    iv.color->same_shape(Image(iv.camera.width, iv.camera.height, 3)),
                "init_primitives: map shape does not match camera");
        for (int y = 0; y < iv.camera.height; ++y) {
            for (int x = 0; x < iv.camera.width; ++x) {
                if (iv.depth->at(x, y) > 0.0) cand.push_back({static_cast<int>(v), x, y});
            }
        }
    }
    require(static_cast<std::size_t>(count) <= cand.size(),
            fmt::format("init_primitives: {} points requested but only {} prior pixels", count, cand.size()));
    // Partial Fisher-Yates: the first `count` entries become a uniform sample without replacement.
    for (int i = 0; i < count; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.below(cand.size() - i));
        std::swap(cand[i], cand[j]);
    }
    cand.resize(count);

    std::vector<Vec3> points;
    for (const Candidate &c : cand) {
        const InitView &iv = views[c.view];
        points.push_back(iv.camera.to_world(iv.camera.backproject(c.x + 0.5, c.y + 0.5, iv.depth->at(c.x, c.y))));
    }
    const KdTree tree(points);
    for (int i = 0; i < count; ++i) {
        const auto nn = tree.k_nearest(points[i], 4);
        double sum = 0.0;
        int used   = 0;
        for (const auto &[idx, d2] : nn) {
            if (idx == static_cast<std::size_t>(i)) continue;
            if (used == 3) break;
            sum += std::sqrt(d2);
            ++used;
        }
        const double spacing = used > 0 && sum > 0.0 ? sum / used : 1e-3 * spec.bound;
        GaussianPrimitive p;
        p.mu            = points[i];
        p.log_scale     = Vec3::Constant(std::log(std::max(spacing, 1e-7)));
        p.opacity_logit = logit(0.1);
        p.sh            = ShCoefficients(sh_degree);
        p.sh.dc         = views[cand[i].view].color->rgb(cand[i].x, cand[i].y);
        prims.push_back(p);
    }
    return prims;
}

SceneSpec
desk_scene() {
    SceneSpec s;
    Surface table;
    table.kind            = SurfaceKind::Plane;
    table.half_extent     = Vec2(0.9, 0.9);
    table.texture.kind    = TextureKind::Checker;
    table.texture.color_a = Vec3(0.78, 0.70, 0.58);
    table.texture.color_b = Vec3(0.36, 0.30, 0.24);
    table.texture.frequency = 5.0;
    s.surfaces.push_back(table);

    Surface box;
    box.kind            = SurfaceKind::Box;
    box.center          = Vec3(-0.35, 0.25, 0.2);
    box.half_size       = Vec3(0.18, 0.18, 0.2);
    box.texture.kind    = TextureKind::Noise;
    box.texture.color_a = Vec3(0.15, 0.35, 0.65);
    box.texture.color_b = Vec3(0.65, 0.85, 0.95);
    box.texture.frequency = 9.0;
    box.texture.seed    = 7;
    s.surfaces.push_back(box);

    Surface ball;
    ball.kind            = SurfaceKind::Sphere;
    ball.center          = Vec3(0.3, -0.2, 0.25);
    ball.radius          = 0.25;
    ball.texture.kind    = TextureKind::Constant;
    ball.texture.color_a = Vec3(0.55, 0.22, 0.18);
    s.surfaces.push_back(ball);

    s.specular.push_back({2, ball.center, 0.26, 0.4, 10.0});
    s.specular.push_back({0, Vec3(0.45, 0.45, 0.0), 0.3, 0.3, 6.0});
    s.textureless.push_back({Vec3(-0.35, -0.45, 0.0), 0.3, Vec3(0.6, 0.6, 0.6)});

    s.cameras.kind          = CameraLayoutKind::Ring;
    s.cameras.count         = 12;
    s.cameras.radius        = 2.6;
    s.cameras.elevation_deg = 40.0;
    s.cameras.fov_y_deg     = 45.0;
    s.cameras.target        = Vec3(0.0, 0.0, 0.1);
    s.noise                 = {0.02, 0.02, 5.0};
    s.seed                  = 1;
    return s;
}

SceneSpec
lambertian_scene() {
    SceneSpec s = desk_scene();
    s.specular.clear();
    return s;
}

SceneSpec
ablation_scene() {
    SceneSpec s      = desk_scene();
    s.cameras.count  = 8;
    s.specular.resize(1);
    return s;
}

std::string
scene_spec_to_json(const SceneSpec &spec) {
    json j;
    for (const Surface &s : spec.surfaces) {
        json js{{"kind", surface_name(s.kind)}, {"center", vec_json(s.center)}};
        if (s.kind == SurfaceKind::Plane) {
            js["normal"]      = vec_json(s.normal);
            js["axis_u"]      = vec_json(s.axis_u);
            js["half_extent"] = vec_json(s.half_extent);
        } else if (s.kind == SurfaceKind::Sphere) {
            js["radius"] = s.radius;
        } else {
            js["half_size"] = vec_json(s.half_size);
        }
        js["texture"] = {{"kind", texture_name(s.texture.kind)},
                         {"color_a", vec_json(s.texture.color_a)},
                         {"color_b", vec_json(s.texture.color_b)},
                         {"frequency", s.texture.frequency},
                         {"seed", s.texture.seed}};
        j["surfaces"].push_back(js);
    }
    j["specular"] = json::array();
    for (const SpecularPatch &sp : spec.specular) {
        j["specular"].push_back({{"surface", sp.surface},
                                 {"center", vec_json(sp.center)},
                                 {"radius", sp.radius},
                                 {"strength", sp.strength},
                                 {"sharpness", sp.sharpness}});
    }
    j["textureless"] = json::array();
    for (const TexturelessRegion &r : spec.textureless) {
        j["textureless"].push_back({{"center", vec_json(r.center)}, {"radius", r.radius}, {"color", vec_json(r.color)}});
    }
    j["cameras"] = {{"layout", spec.cameras.kind == CameraLayoutKind::Ring ? "ring" : "arc"},
                    {"count", spec.cameras.count},
                    {"radius", spec.cameras.radius},
                    {"elevation_deg", spec.cameras.elevation_deg},
                    {"arc_deg", spec.cameras.arc_deg},
                    {"fov_y_deg", spec.cameras.fov_y_deg},
                    {"target", vec_json(spec.cameras.target)}};
    j["width"]      = spec.width;
    j["height"]     = spec.height;
    j["noise"]      = {{"depth_sigma", spec.noise.depth_sigma},
                       {"outlier_rate", spec.noise.outlier_rate},
                       {"normal_sigma_deg", spec.noise.normal_sigma_deg}};
    j["background"] = vec_json(spec.background);
    j["light_dir"]  = vec_json(spec.light_dir);
    j["ambient"]    = spec.ambient;
    j["bound"]      = spec.bound;
    j["seed"]       = spec.seed;
    return j.dump(2);
}

SceneSpec
scene_spec_from_json(const std::string &text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception &e) {
        throw ContractViolation(fmt::format("scene: invalid JSON: {}", e.what()));
    }
    SceneSpec spec;
    try {
        for (const json &js : j.at("surfaces")) {
            Surface s;
            s.kind = enum_from<SurfaceKind>(js.at("kind").get<std::string>(),
                                            {{"plane", SurfaceKind::Plane}, {"sphere", SurfaceKind::Sphere}, {"box", SurfaceKind::Box}},
                                            "surface kind");
            s.center      = json_vec<3>(js, "center", s.center);
            s.normal      = json_vec<3>(js, "normal", s.normal);
            s.axis_u      = json_vec<3>(js, "axis_u", s.axis_u);
            s.half_extent = json_vec<2>(js, "half_extent", s.half_extent);
            s.radius      = js.value("radius", s.radius);
            s.half_size   = json_vec<3>(js, "half_size", s.half_size);
            if (js.contains("texture")) {
                const json &jt = js.at("texture");
                s.texture.kind = enum_from<TextureKind>(
                    jt.value("kind", std::string("constant")),
                    {{"constant", TextureKind::Constant}, {"checker", TextureKind::Checker}, {"noise", TextureKind::Noise}},
                    "texture kind");
                s.texture.color_a   = json_vec<3>(jt, "color_a", s.texture.color_a);
                s.texture.color_b   = json_vec<3>(jt, "color_b", s.texture.color_b);
                s.texture.frequency = jt.value("frequency", s.texture.frequency);
                s.texture.seed      = jt.value("seed", s.texture.seed);
            }
            spec.surfaces.push_back(s);
        }
        for (const json &jp : j.value("specular", json::array())) {
            SpecularPatch sp;
            sp.surface   = jp.at("surface").get<int>();
            sp.center    = json_vec<3>(jp, "center", sp.center);
            sp.radius    = jp.value("radius", sp.radius);
            sp.strength  = jp.value("strength", sp.strength);
            sp.sharpness = jp.value("sharpness", sp.sharpness);
            spec.specular.push_back(sp);
        }
        for (const json &jr : j.value("textureless", json::array())) {
            TexturelessRegion r;
            r.center = json_vec<3>(jr, "center", r.center);
            r.radius = jr.value("radius", r.radius);
            r.color  = json_vec<3>(jr, "color", r.color);
            spec.textureless.push_back(r);
        }
        if (j.contains("cameras")) {
            const json &jc = j.at("cameras");
            spec.cameras.kind = enum_from<CameraLayoutKind>(jc.value("layout", std::string("ring")),
                                                            {{"ring", CameraLayoutKind::Ring}, {"arc", CameraLayoutKind::Arc}},
                                                            "camera layout");
            spec.cameras.count         = jc.value("count", spec.cameras.count);
            spec.cameras.radius        = jc.value("radius", spec.cameras.radius);
            spec.cameras.elevation_deg = jc.value("elevation_deg", spec.cameras.elevation_deg);
            spec.cameras.arc_deg       = jc.value("arc_deg", spec.cameras.arc_deg);
            spec.cameras.fov_y_deg     = jc.value("fov_y_deg", spec.cameras.fov_y_deg);
            spec.cameras.target        = json_vec<3>(jc, "target", spec.cameras.target);
        }
        spec.width  = j.value("width", spec.width);
        spec.height = j.value("height", spec.height);
        if (j.contains("noise")) {
            const json &jn               = j.at("noise");
            spec.noise.depth_sigma      = jn.value("depth_sigma", 0.0);
            spec.noise.outlier_rate     = jn.value("outlier_rate", 0.0);
            spec.noise.normal_sigma_deg = jn.value("normal_sigma_deg", 0.0);
        }
        spec.background = json_vec<3>(j, "background", spec.background);
        spec.light_dir  = json_vec<3>(j, "light_dir", spec.light_dir);
        spec.ambient    = j.value("ambient", spec.ambient);
        spec.bound      = j.value("bound", spec.bound);
        spec.seed       = j.value("seed", spec.seed);
    } catch (const json::exception &e) {
        throw ContractViolation(fmt::format("scene: {}", e.what()));
    }
    validate(spec);
    return spec;
}

SceneSpec
read_scene_spec(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw IoError(fmt::format("cannot open scene file '{}'", path.string()));
    std::stringstream ss;
    ss << in.rdbuf();
    return scene_spec_from_json(ss.str());
}

void
write_scene_spec(const std::filesystem::path &path, const SceneSpec &spec) {
    std::ofstream out(path);
    if (!out) throw IoError(fmt::format("cannot write scene file '{}'", path.string()));
    out << scene_spec_to_json(spec) << '\n';
}

Dataset
generate_dataset(const SceneSpec &spec) {
    Dataset ds;
    ds.cameras = scene_cameras(spec);
    for (std::size_t v = 0; v < ds.cameras.size(); ++v) {
        ds.gt.push_back(render_gt(spec, ds.cameras[v]));
        ds.priors.push_back(make_priors(ds.gt.back().depth, ds.gt.back().normal, spec.noise,
                                        splitmix(spec.seed) + v));
    }
    return ds;
}

void
write_dataset(const std::filesystem::path &dir, const SceneSpec &spec) {
    const Dataset ds = generate_dataset(spec);
    std::filesystem::create_directories(dir);
    auto manifest = fmt::output_file((dir / "cameras.txt").string());
    manifest.print("# view fx fy cx cy width height world_to_camera[4x4 row-major]\n");
    for (std::size_t v = 0; v < ds.cameras.size(); ++v) {
        const Camera &c = ds.cameras[v];
        Mat4 m          = Mat4::Identity();
        m.topLeftCorner<3, 3>() = c.rotation;
        m.topRightCorner<3, 1>() = c.translation;
        manifest.print("{} {:.17g} {:.17g} {:.17g} {:.17g} {} {}", v, c.fx, c.fy, c.cx, c.cy, c.width, c.height);
        for (int r = 0; r < 4; ++r) {
            for (int k = 0; k < 4; ++k) manifest.print(" {:.17g}", m(r, k));
        }
        manifest.print("\n");
        const std::string id = fmt::format("{:03d}", v);
        write_pnm(dir / ("color_" + id + ".ppm"), ds.gt[v].color);
        write_float_grid(dir / ("depth_" + id + ".grid"), ds.gt[v].depth);
        write_float_grid(dir / ("normal_" + id + ".grid"), ds.gt[v].normal);
        write_float_grid(dir / ("prior_depth_" + id + ".grid"), ds.priors[v].depth);
        write_float_grid(dir / ("prior_normal_" + id + ".grid"), ds.priors[v].normal);
    }
    write_scene_spec(dir / "scene.json", spec);
}

} // namespace splatlab
