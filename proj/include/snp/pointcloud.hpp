#pragma once

#include "snp/geometry.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace snp {

// Initial opacity logit for fused / added points; sigmoid(4) ~= 0.982.
inline constexpr double kInitialOpacityLogit = 4.0;

// Point positions, K-dim SH feature rows (row-major, N x K), opacity logits and
// one shared screen-space radius.
struct FeaturizedPointCloud {
  std::vector<Vec3> positions;
  std::vector<double> features;
  std::vector<double> opacity_logits;
  int feature_dim = 27;
  double radius = 0.01;

  static FeaturizedPointCloud empty(int feature_dim, double radius);

  std::size_t size() const { return positions.size(); }
  bool empty() const { return positions.empty(); }
  std::span<const double> feature_row(std::size_t i) const {
    return {features.data() + i * feature_dim, static_cast<std::size_t>(feature_dim)};
  }
  std::span<double> feature_row(std::size_t i) {
    return {features.data() + i * feature_dim, static_cast<std::size_t>(feature_dim)};
  }

  // Appends one point with the given logit and all-zero features.
  void push_back(const Vec3& position, double opacity_logit = kInitialOpacityLogit);

  // Throws DimError / DimMismatch / InvalidArgument when an invariant is broken.
  void validate() const;

  // Content hash of every learnable field; used to detect stale render graphs.
  std::uint64_t fingerprint() const;
};

// Depth map at 1/scale of its camera's resolution. Map pixel (row i, col j)
// sits at full-resolution pixel (scale*j + (scale-1)/2, scale*i + (scale-1)/2).
struct DepthMap {
  int width = 0;   // map columns = camera.width() / scale
  int height = 0;  // map rows = camera.height() / scale
  int scale = 1;
  int camera_index = 0;
  Camera camera;
  std::vector<double> values;
  std::vector<std::uint8_t> valid;

  DepthMap() = default;
  DepthMap(const Camera& cam, int camera_index, int scale);

  std::size_t index(int col, int row) const { return static_cast<std::size_t>(row) * width + col; }
  bool is_valid(int col, int row) const { return valid[index(col, row)] != 0; }
  double value(int col, int row) const { return values[index(col, row)]; }
  void set(int col, int row, double depth) {
    values[index(col, row)] = depth;
    valid[index(col, row)] = depth > 0.0 ? 1 : 0;
  }
  void invalidate(int col, int row) {
    values[index(col, row)] = 0.0;
    valid[index(col, row)] = 0;
  }

  // Full-resolution pixel position of a map pixel center.
  double pixel_u(int col) const { return scale * col + 0.5 * (scale - 1); }
  double pixel_v(int row) const { return scale * row + 0.5 * (scale - 1); }

  // Nearest-neighbour depth at a full-resolution pixel position; nullopt when
  // outside the map or on an invalid pixel.
  std::optional<double> lookup(double u, double v) const;

  std::size_t valid_count() const;
  void validate() const;
};

// One point per valid pixel over all maps, in (map, row, col) order.
FeaturizedPointCloud fuse_depth_maps(std::span<const DepthMap> maps, int feature_dim,
                                     double radius, double initial_logit = kInitialOpacityLogit);

FeaturizedPointCloud merge(const FeaturizedPointCloud& a, const FeaturizedPointCloud& b);

struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
};

// Selector receives (index, position).
using PointSelector = std::function<bool(std::size_t, const Vec3&)>;

FeaturizedPointCloud transform_subset(const FeaturizedPointCloud& cloud,
                                      const PointSelector& selected, const RigidTransform& rigid);

// Keeps the rows for which `keep` holds; relative order is preserved.
FeaturizedPointCloud erase(const FeaturizedPointCloud& cloud, const PointSelector& keep);

// Uniform random subset of exactly target_n points (original order kept).
FeaturizedPointCloud downsample(const FeaturizedPointCloud& cloud, std::size_t target_n,
                                std::uint64_t seed);

// Row subset by boolean mask (mask.size() == cloud.size()).
FeaturizedPointCloud select(const FeaturizedPointCloud& cloud, std::span<const std::uint8_t> mask);

}  // namespace snp
