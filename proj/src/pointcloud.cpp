#include "snp/pointcloud.hpp"

#include "snp/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <iterator>
#include <numeric>
#include <random>

namespace snp {

namespace {

std::uint64_t mix(std::uint64_t h, std::uint64_t x) {
  h ^= x + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  return h * 0xff51afd7ed558ccdULL;
}

std::uint64_t bits(double v) {
  std::uint64_t b;
  std::memcpy(&b, &v, sizeof b);
  return b;
}

}  // namespace

FeaturizedPointCloud FeaturizedPointCloud::empty(int feature_dim, double radius) {
  FeaturizedPointCloud c;
  c.feature_dim = feature_dim;
  c.radius = radius;
  return c;
}

void FeaturizedPointCloud::push_back(const Vec3& position, double opacity_logit) {
  positions.push_back(position);
  features.resize(features.size() + feature_dim, 0.0);
  opacity_logits.push_back(opacity_logit);
}

void FeaturizedPointCloud::validate() const {
  SNP_CHECK(feature_dim > 0 && feature_dim % 9 == 0, ErrorCode::DimError,
            "feature_dim must be a positive multiple of 9");
  SNP_CHECK(radius > 0.0 && std::isfinite(radius), ErrorCode::InvalidArgument,
            "radius must be positive");
  SNP_CHECK(features.size() == positions.size() * feature_dim &&
                opacity_logits.size() == positions.size(),
            ErrorCode::DimMismatch, "point arrays disagree on N");
  for (const auto& p : positions)
    SNP_CHECK(p.allFinite(), ErrorCode::InvalidArgument, "non-finite position");
  for (double f : features) SNP_CHECK(std::isfinite(f), ErrorCode::InvalidArgument, "non-finite feature");
  for (double o : opacity_logits)
    SNP_CHECK(std::isfinite(o), ErrorCode::InvalidArgument, "non-finite opacity logit");
}

std::uint64_t FeaturizedPointCloud::fingerprint() const {
  std::uint64_t h = mix(0, positions.size());
  h = mix(h, static_cast<std::uint64_t>(feature_dim));
  h = mix(h, bits(radius));
  for (const auto& p : positions) {
    h = mix(h, bits(p.x()));
    h = mix(h, bits(p.y()));
    h = mix(h, bits(p.z()));
  }
  for (double f : features) h = mix(h, bits(f));
  for (double o : opacity_logits) h = mix(h, bits(o));
  return h;
}

DepthMap::DepthMap(const Camera& cam, int camera_index_, int scale_)
    : width(cam.width() / scale_),
      height(cam.height() / scale_),
      scale(scale_),
      camera_index(camera_index_),
      camera(cam),
      values(static_cast<std::size_t>(width) * height, 0.0),
      valid(static_cast<std::size_t>(width) * height, 0) {
  SNP_CHECK(scale_ >= 1, ErrorCode::InvalidArgument, "depth map scale must be >= 1");
  SNP_CHECK(width > 0 && height > 0, ErrorCode::InvalidArgument, "depth map is empty");
}

std::optional<double> DepthMap::lookup(double u, double v) const {
  const double col = std::round((u - 0.5 * (scale - 1)) / scale);
  const double row = std::round((v - 0.5 * (scale - 1)) / scale);
  if (!(col >= 0.0 && row >= 0.0 && col < width && row < height)) return std::nullopt;
  const auto i = index(static_cast<int>(col), static_cast<int>(row));
  if (!valid[i]) return std::nullopt;
  return values[i];
}

std::size_t DepthMap::valid_count() const {
  return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

void DepthMap::validate() const {
  SNP_CHECK(width == camera.width() / scale && height == camera.height() / scale,
            ErrorCode::ShapeMismatch, "depth map shape does not match camera / scale");
  SNP_CHECK(values.size() == static_cast<std::size_t>(width) * height && valid.size() == values.size(),
            ErrorCode::ShapeMismatch, "depth map buffers have the wrong size");
  for (std::size_t i = 0; i < values.size(); ++i)
    SNP_CHECK(!valid[i] || (values[i] > 0.0 && std::isfinite(values[i])), ErrorCode::InvalidArgument,
              "valid depth must be positive and finite");
}

FeaturizedPointCloud fuse_depth_maps(std::span<const DepthMap> maps, int feature_dim, double radius,
                                     double initial_logit) {
  SNP_CHECK(!maps.empty(), ErrorCode::EmptyInput, "no depth maps given");
  auto cloud = FeaturizedPointCloud::empty(feature_dim, radius);
  std::size_t total = 0;
  for (const auto& m : maps) {
    m.validate();
    total += m.valid_count();
  }
  SNP_CHECK(total > 0, ErrorCode::EmptyInput, "depth maps contain no valid pixels");
  cloud.positions.reserve(total);
  cloud.opacity_logits.reserve(total);
  cloud.features.reserve(total * feature_dim);
  for (const auto& m : maps)
    for (int row = 0; row < m.height; ++row)
      for (int col = 0; col < m.width; ++col)
        if (m.is_valid(col, row))
          cloud.push_back(unproject({m.pixel_u(col), m.pixel_v(row), m.value(col, row)}, m.camera),
                          initial_logit);
  cloud.validate();
  return cloud;
}

FeaturizedPointCloud merge(const FeaturizedPointCloud& a, const FeaturizedPointCloud& b) {
  SNP_CHECK(a.feature_dim == b.feature_dim, ErrorCode::DimMismatch,
            "cannot merge clouds with K=" + std::to_string(a.feature_dim) + " and K=" +
                std::to_string(b.feature_dim));
  FeaturizedPointCloud out = a;
  out.positions.insert(out.positions.end(), b.positions.begin(), b.positions.end());
  out.features.insert(out.features.end(), b.features.begin(), b.features.end());
  out.opacity_logits.insert(out.opacity_logits.end(), b.opacity_logits.begin(), b.opacity_logits.end());
  return out;
}

FeaturizedPointCloud transform_subset(const FeaturizedPointCloud& cloud,
                                      const PointSelector& selected, const RigidTransform& rigid) {
  const Mat3& R = rigid.rotation;
  SNP_CHECK((R * R.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() <= 1e-9,
            ErrorCode::InvalidArgument, "rotation must be orthonormal");
  FeaturizedPointCloud out = cloud;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (selected(i, cloud.positions[i])) out.positions[i] = R * cloud.positions[i] + rigid.translation;
  return out;
}

FeaturizedPointCloud erase(const FeaturizedPointCloud& cloud, const PointSelector& keep) {
  std::vector<std::uint8_t> mask(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) mask[i] = keep(i, cloud.positions[i]) ? 1 : 0;
  return select(cloud, mask);
}

FeaturizedPointCloud select(const FeaturizedPointCloud& cloud, std::span<const std::uint8_t> mask) {
  SNP_CHECK(mask.size() == cloud.size(), ErrorCode::DimMismatch, "mask size differs from N");
  auto out = FeaturizedPointCloud::empty(cloud.feature_dim, cloud.radius);
  const auto kept = static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](auto m) { return m != 0; }));
  out.positions.reserve(kept);
  out.opacity_logits.reserve(kept);
  out.features.reserve(kept * cloud.feature_dim);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (!mask[i]) continue;
    out.positions.push_back(cloud.positions[i]);
    out.opacity_logits.push_back(cloud.opacity_logits[i]);
    const auto row = cloud.feature_row(i);
    out.features.insert(out.features.end(), row.begin(), row.end());
  }
  return out;
}

FeaturizedPointCloud downsample(const FeaturizedPointCloud& cloud, std::size_t target_n,
                                std::uint64_t seed) {
  SNP_CHECK(target_n >= 1, ErrorCode::InvalidArgument, "target_n must be >= 1");
  if (cloud.size() <= target_n) return cloud;
  std::vector<std::size_t> all(cloud.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<std::size_t> picked;
  picked.reserve(target_n);
  std::mt19937_64 rng(seed);
  std::sample(all.begin(), all.end(), std::back_inserter(picked), target_n, rng);
  std::vector<std::uint8_t> mask(cloud.size(), 0);
  for (auto i : picked) mask[i] = 1;
  return select(cloud, mask);
}

}  // namespace snp
