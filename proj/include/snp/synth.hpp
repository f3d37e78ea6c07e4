#pragma once

// Analytic synthetic scenes: ray-traced reference images and exact depth
// maps, plus corruption operators with ground-truth labels.

#include "snp/image.hpp"
#include "snp/pointcloud.hpp"
#include "snp/sculpting.hpp"

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace snp {

enum class SceneKind { LambertianSphere, SpecularSphere, PlaneAndBox };

std::string to_string(SceneKind kind);
SceneKind scene_kind_from_string(const std::string& name);  // throws InvalidArgument

struct SceneSpec {
  SceneKind kind = SceneKind::LambertianSphere;
  int n_cameras = 20;       // training ring
  int n_heldout = 5;        // held-out ring, offset in azimuth and elevation
  double ring_radius = 4.0;
  double elevation_deg = 20.0;
  double heldout_elevation_deg = 30.0;
  double fov_deg = 40.0;
  // Textured dome around the scene so every ray has a depth; 0 disables it.
  double backdrop_radius = 0.0;
  int width = 64;
  int height = 64;
  int depth_scale = 1;       // depth maps at 1/depth_scale resolution
  // Like MVS confidence filtering: drop depth pixels on the far side of a
  // depth edge (an 8-neighbour nearer than this ratio); 0 keeps every pixel.
  double edge_mask_ratio = 0.9;
  std::uint64_t texture_seed = 0;
  double point_radius = 0.045;  // screen-space radius of the fused cloud
  std::size_t surface_samples = 20000;
  SceneBounds bounds{2.5, 5.5, 100, DepthSampling::Linear};

  // Recommended framing and bounds for each kind.
  static SceneSpec preset(SceneKind kind);
  void validate() const;
};

struct GroundTruth {
  SceneSpec spec;
  std::vector<Camera> train_cameras;
  std::vector<Camera> heldout_cameras;
  std::vector<Image> train_images;
  std::vector<Image> heldout_images;
  std::vector<DepthMap> depth_maps;  // one per training camera
  // Dense true surface with per-point SH coefficients (27 per point) such
  // that modulate(features, view) reproduces the oracle color.
  FeaturizedPointCloud surface;
  // The view-dependent lobe shared by every point of the specular sphere
  // (zero for the other kinds), 3 x 9 row-major.
  std::array<double, 27> lobe{};
};

struct SynthScene {
  GroundTruth truth;
  FeaturizedPointCloud initial;  // fused from the exact depth maps
};

SynthScene generate(const SceneSpec& spec, std::uint64_t seed);

struct SurfaceHit {
  double depth = 0.0;  // camera-frame z
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::Zero();
};

// Nearest intersection of the ray through full-resolution pixel (u, v).
std::optional<SurfaceHit> trace(const SceneSpec& spec, const Camera& camera, double u, double v);

// Oracle image of one camera (background is black).
Image render_oracle(const GroundTruth& truth, const Camera& camera);

// Invalidates valid pixels that have a valid 8-neighbour with depth below
// ratio x their own depth.
void mask_depth_edges(DepthMap& map, double ratio);

// Pixels whose primary ray hits the surface inside the ball.
std::vector<std::uint8_t> ball_mask(const SceneSpec& spec, const Camera& camera, const Vec3& center,
                                    double radius);

struct MapPixel {
  int map = 0;
  int col = 0;
  int row = 0;
};

struct CorruptedMaps {
  std::vector<DepthMap> maps;
  std::vector<MapPixel> changed;  // injected floaters or carved pixels
};

// Moves n distinct valid depth pixels to depth_factor x their depth.
CorruptedMaps inject_floaters(std::span<const DepthMap> maps, int n, double depth_factor, std::uint64_t seed);
// Invalidates every depth pixel whose 3D point lies within the ball.
CorruptedMaps carve_hole(std::span<const DepthMap> maps, const Vec3& center, double radius);

// Marks, in fuse_depth_maps order, the points coming from `pixels`.
std::vector<std::uint8_t> fused_labels(std::span<const DepthMap> maps, std::span<const MapPixel> pixels);

struct CorruptedCloud {
  FeaturizedPointCloud cloud;
  std::vector<std::uint8_t> injected;  // per output point
  std::size_t removed = 0;
};

// Appends n points on random valid rays of the maps at depth_factor x depth.
CorruptedCloud inject_floaters(const FeaturizedPointCloud& cloud, std::span<const DepthMap> maps, int n,
                               double depth_factor, std::uint64_t seed);
CorruptedCloud carve_hole(const FeaturizedPointCloud& cloud, const Vec3& center, double radius);

}  // namespace snp
