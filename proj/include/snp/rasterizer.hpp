#pragma once

#include "snp/geometry.hpp"
#include "snp/image.hpp"
#include "snp/pointcloud.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace snp {

enum class ViewDirectionMode {
  PerPoint,  // normalize(camera_center - point), recomputed every render
  PerView,   // one direction per view: the reversed optical axis
};

struct RenderConfig {
  double gamma = 1e-3;
  // Screen-space radius in normalized device units; the cloud's radius when unset.
  std::optional<double> radius;
  double dropout_rate = 0.5;
  int subsets = 2;
  // K/9 values; empty means all zeros.
  std::vector<double> background;
  double z_near = 0.1;
  double z_far = 100.0;
  std::uint64_t seed = 0;
  ViewDirectionMode view_directions = ViewDirectionMode::PerPoint;
  int max_contributors = 32;
  int tile_size = 16;

  // Throws InvalidBounds / InvalidArgument.
  void validate() const;
};

// A point's screen-space disc.
struct Footprint {
  double u = 0.0;
  double v = 0.0;
  double radius_px = 0.0;
  double depth = 0.0;
};

struct Contributor {
  std::uint32_t point = 0;
  double weight = 0.0;
  double dx = 0.0;  // pixel_x - u
  double dy = 0.0;  // pixel_y - v
};

struct RenderOutput {
  Image image;                              // H x W x K/9
  std::vector<double> weight_sums;          // sum of contributor weights per pixel
  std::vector<double> background_weights;   // w_bg per pixel
  std::vector<double> nearest_depth;        // +inf where nothing is covered
  std::vector<std::uint64_t> pixel_offsets; // H*W + 1 offsets into contributors
  std::vector<Contributor> contributors;    // per pixel, ascending point index

  // Snapshot of what produced this output, checked by the backward pass.
  std::uint64_t cloud_fingerprint = 0;
  double radius_px = 0.0;

  std::span<const Contributor> pixel_contributors(int x, int y) const {
    const auto p = static_cast<std::size_t>(y) * image.width + x;
    return {contributors.data() + pixel_offsets[p], contributors.data() + pixel_offsets[p + 1]};
  }
};

// radius * min(W, H) / 2.
double pixel_radius(double radius, const Camera& camera);

// Throws BehindCamera for points with camera-frame depth <= 0.
Footprint splat_footprint(const Vec3& point, const Camera& camera, double radius);

// Pixels whose centers lie within the footprint (rho <= r_px), row-major.
std::vector<std::pair<int, int>> covered_pixels(const Footprint& fp, int width, int height);

// Soft rasterization of the active points (all points when `active` is empty).
// Tiled and OpenMP-parallel; output is independent of the thread count.
RenderOutput rasterize(const FeaturizedPointCloud& cloud, const Camera& camera,
                       const RenderConfig& config, std::span<const std::uint8_t> active = {});

// L masks; each keeps every point independently with probability 1 - p_d.
std::vector<std::vector<std::uint8_t>> sample_subsets(std::size_t n_points, double dropout_rate,
                                                      int subsets, std::uint64_t seed);

// Mean image over config.subsets masked renders; auxiliary fields from the
// first subset. Masks depend only on (N, p_d, L, seed), so every frame of a
// camera path sees the same subsets.
RenderOutput rasterize_ensemble(const FeaturizedPointCloud& cloud, const Camera& camera,
                                const RenderConfig& config);

}  // namespace snp
