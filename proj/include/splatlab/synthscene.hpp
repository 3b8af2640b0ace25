// Copyright Contributors to the splatlab project
// SPDX-License-Identifier: Apache-2.0
//
// Procedural multi-view scenes with analytic geometry: ground-truth renders by ray casting, noisy
// depth/normal priors, and primitive initialization from the priors.
#pragma once

#include "splatlab/image.hpp"
#include "splatlab/primitives.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace splatlab {

enum class TextureKind { Constant, Checker, Noise };
enum class SurfaceKind { Plane, Sphere, Box };
enum class CameraLayoutKind { Ring, Arc };

struct Texture {
    TextureKind kind = TextureKind::Constant;
    Vec3 color_a     = Vec3::Constant(0.5);
    Vec3 color_b     = Vec3::Constant(0.5);
    double frequency = 4.0; ///< checker cells or noise lattice cells per scene unit
    std::uint64_t seed = 0;
};

/// Plane: a rectangle through `center` with normal `normal`, spanned by `axis_u` and normal x axis_u,
/// of half extents `half_extent`. Sphere: `center`, `radius`. Box: axis-aligned, `center`, `half_size`.
struct Surface {
    SurfaceKind kind  = SurfaceKind::Plane;
    Vec3 center       = Vec3::Zero();
    Vec3 normal       = Vec3::UnitZ();
    Vec3 axis_u       = Vec3::UnitX();
    Vec2 half_extent  = Vec2::Constant(0.5);
    double radius     = 0.25;
    Vec3 half_size    = Vec3::Constant(0.25);
    Texture texture;
};

/// Points of `surface` within `radius` of `center` get an added Phong lobe
/// strength * max(0, <reflected light, view>)^sharpness.
struct SpecularPatch {
    int surface      = 0;
    Vec3 center      = Vec3::Zero();
    double radius    = 0.2;
    double strength  = 0.4;
    double sharpness = 8.0;
};

/// Points within `radius` of `center` lose their texture and take `color`.
struct TexturelessRegion {
    Vec3 center   = Vec3::Zero();
    double radius = 0.2;
    Vec3 color    = Vec3::Constant(0.6);
};

struct CameraLayout {
    CameraLayoutKind kind = CameraLayoutKind::Ring;
    int count             = 12;
    double radius         = 2.5;
    double elevation_deg  = 35.0;
    double arc_deg        = 120.0; ///< azimuth span for arcs
    double fov_y_deg      = 45.0;
    Vec3 target           = Vec3::Zero();
};

struct PriorNoise {
    double depth_sigma      = 0.0; ///< lognormal sigma of the multiplicative depth factor
    double outlier_rate     = 0.0;
    double normal_sigma_deg = 0.0;
};

struct SceneSpec {
    std::vector<Surface> surfaces;
    std::vector<SpecularPatch> specular;
    std::vector<TexturelessRegion> textureless;
    CameraLayout cameras;
    int width  = 64;
    int height = 64;
    PriorNoise noise;
    Vec3 background   = Vec3::Zero();
    Vec3 light_dir    = Vec3(0.3, -0.4, 1.0); ///< direction towards the light, world frame
    double ambient    = 0.35;
    double bound      = 1.0; ///< every surface lies within [-bound, bound]^3
    std::uint64_t seed = 0;
};

/// Throws ContractViolation on fewer than 3 cameras, surfaces outside the bound, bad indices or
/// negative noise.
void
validate(const SceneSpec &spec);

/// Depth-range normalizer for the geometric depth loss.
inline double
scene_range(const SceneSpec &spec) {
    return 2.0 * spec.bound;
}

std::vector<Camera>
scene_cameras(const SceneSpec &spec);

struct GroundTruthView {
    Image color;  ///< 3 channels
    Image depth;  ///< camera z, 0 for background
    Image normal; ///< camera frame, facing the camera, zero for background
    Image hit;    ///< 1 where a surface was hit
    Image specular; ///< per-pixel specular lobe value (before clamping), for diagnostics
};

struct RayHit {
    double t      = 0.0;
    Vec3 point    = Vec3::Zero();
    Vec3 normal   = Vec3::Zero(); ///< geometric, oriented against the ray
    int surface   = -1;
};

/// Nearest intersection with t > 0 along origin + t * dir.
std::optional<RayHit>
intersect(const SceneSpec &spec, const Vec3 &origin, const Vec3 &dir);

/// Lambertian albedo shading (view-independent) plus any specular lobe for the given view point.
Vec3
shade(const SceneSpec &spec, const RayHit &hit, const Vec3 &eye, double *specular = nullptr);

GroundTruthView
render_gt(const SceneSpec &spec, const Camera &cam);

struct Priors {
    Image depth;
    Image normal;
};

/// Multiplicative lognormal depth noise, uniform outlier depths on a fraction of valid pixels and
/// normals tilted by a random angle of the given sigma. Pixels with zero depth stay empty.
Priors
make_priors(const Image &gt_depth, const Image &gt_normal, const PriorNoise &noise, std::uint64_t seed);

enum class InitMode { DepthBackproject, Random };

struct InitView {
    Camera camera;
    const Image *color = nullptr;
    const Image *depth = nullptr; ///< prior depth
};

/// depth_backproject: `count` pixels drawn without replacement from all views' positive-depth pixels,
/// back-projected, with isotropic scale from the mean distance to the 3 nearest neighbours, opacity
/// 0.1 and the pixel color as the DC term. random: uniform positions in the bound.
std::vector<GaussianPrimitive>
init_primitives(const SceneSpec &spec,
                const std::vector<InitView> &views,
                InitMode mode,
                int count,
                std::uint64_t seed,
                int sh_degree = 3);

InitMode
parse_init_mode(const std::string &name);

/// Table top with a checkered plane, a noise-textured box, a glossy sphere and a textureless patch.
SceneSpec
desk_scene();

/// The desk geometry with every specular patch removed.
SceneSpec
lambertian_scene();

/// The ablation scene: desk geometry seen from 8 ring cameras, keeping the sphere's specular patch
/// and the textureless disc on the table.
SceneSpec
ablation_scene();

SceneSpec
read_scene_spec(const std::filesystem::path &path);

void
write_scene_spec(const std::filesystem::path &path, const SceneSpec &spec);

std::string
scene_spec_to_json(const SceneSpec &spec);

SceneSpec
scene_spec_from_json(const std::string &text);

/// Writes color_NNN.ppm, depth_NNN.grid, normal_NNN.grid, prior_depth_NNN.grid, prior_normal_NNN.grid
/// and cameras.txt (intrinsics and the 4x4 world-to-camera matrix per view).
void
write_dataset(const std::filesystem::path &dir, const SceneSpec &spec);

/// Ground truth and priors for every camera of the scene, generated in memory.
struct Dataset {
    std::vector<Camera> cameras;
    std::vector<GroundTruthView> gt;
    std::vector<Priors> priors;
};

Dataset
generate_dataset(const SceneSpec &spec);

} // namespace splatlab
