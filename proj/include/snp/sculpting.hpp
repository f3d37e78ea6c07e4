#pragma once

#include "snp/image.hpp"
#include "snp/optimizer.hpp"
#include "snp/pointcloud.hpp"
#include "snp/rasterizer.hpp"

#include <span>
#include <vector>

namespace snp {

enum class DepthSampling { Linear, InverseDepth };

struct SceneBounds {
  double z_near = 2.0;
  double z_far = 6.0;  // may be +inf with InverseDepth sampling
  int n_bins = 100;
  DepthSampling mode = DepthSampling::Linear;

  // Throws InvalidBounds.
  void validate() const;
};

// Per-pixel photometric error of one view (sum of absolute channel errors).
struct ErrorMap {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

// Keep mask over fuse_depth_maps(maps) order. A point survives iff in every
// other view where it lands on a valid depth pixel (nearest neighbour, in
// front of the camera) its depth is >= delta_d times the stored depth.
std::vector<std::uint8_t> forward_consistency_prune(std::span<const DepthMap> maps, double delta_d);

// Same test for an arbitrary cloud against every map (a point's own source
// view passes trivially).
std::vector<std::uint8_t> consistency_keep_mask(std::span<const Vec3> points, std::span<const DepthMap> maps,
                                                double delta_d);

// Pairwise reprojection error between view i and view j for full-resolution
// pixel (u, v) of view i. Throws OutOfImage when the correspondence leaves
// image j, InvalidArgument when either depth is missing.
double colmap_consistency_error(double u, double v, const DepthMap& map_i, const DepthMap& map_j);

// Keep mask from the pairwise baseline: a pixel's point survives when at least
// `min_consistent_views` other views agree within `max_error` pixels.
std::vector<std::uint8_t> colmap_consistency_prune(std::span<const DepthMap> maps, double max_error,
                                                   int min_consistent_views = 1);

// Renders every view without dropout and returns |pred - ref|_1 per pixel.
std::vector<ErrorMap> compute_error_maps(const FeaturizedPointCloud& cloud, std::span<const TrainView> views,
                                         const RenderConfig& config);

// n_bins points on the ray through (u, v), ascending depth.
std::vector<Vec3> sample_candidates(const Camera& camera, double u, double v, const SceneBounds& bounds);
std::vector<double> candidate_depths(const SceneBounds& bounds);

// False when the candidate sits in front of a mapped surface in any view:
// z < (1 - eps_occ) * D at its nearest-neighbour map pixel.
bool evaluate_candidate(const Vec3& candidate, std::span<const DepthMap> maps, double eps_occ = 0.0);

struct AddConfig {
  SceneBounds bounds;
  double delta_e_factor = 5.0;
  int max_per_pixel = 5;  // M
  double eps_occ = 0.0;
};

struct AddedPoint {
  int view = 0;
  int x = 0;
  int y = 0;
  double depth = 0.0;
};

struct AddResult {
  FeaturizedPointCloud cloud;  // input points followed by the added ones
  std::vector<AddedPoint> added;
  std::size_t triggering_pixels = 0;
  double delta_e = 0.0;
};

// `cameras[i]` is the camera of error_maps[i]. Added points carry zero
// features and the initial opacity logit.
AddResult add_points(const FeaturizedPointCloud& cloud, std::span<const Camera> cameras,
                     std::span<const ErrorMap> error_maps, std::span<const DepthMap> maps,
                     const AddConfig& config);

struct SculptConfig {
  double delta_d = 0.8;
  AddConfig add;
  bool prune = true;
  bool add_points = true;
  int rounds = 1;
  // Fit of the existing points before the error maps are rendered; dropout
  // is forced off there.
  TrainConfig optimize;
};

struct SculptReport {
  std::size_t n_input = 0;
  std::size_t pruned = 0;
  std::size_t n_after_prune = 0;
  std::size_t triggering_pixels = 0;
  std::size_t added = 0;
  std::size_t n_output = 0;
  double delta_e = 0.0;
};

struct SculptResult {
  // Sculpted geometry; features are zero and logits reset to the initial
  // value so the final model trains from scratch on the new geometry.
  FeaturizedPointCloud cloud;
  SculptReport report;
  std::vector<std::uint8_t> keep;  // prune mask over the input cloud
  std::vector<AddedPoint> added;
};

// Prune against the depth maps, fit features on the kept points, render error
// maps and add points along high-error rays.
SculptResult sculpt(const FeaturizedPointCloud& cloud, std::span<const DepthMap> maps,
                    std::span<const TrainView> views, const RenderConfig& render, const SculptConfig& config);

}  // namespace snp
