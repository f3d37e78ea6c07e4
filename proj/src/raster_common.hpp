#pragma once

// Per-point and per-pixel math shared by the tiled kernel, the serial
// reference and the backward pass. Every path must go through these helpers so
// results agree bit-for-bit.

#include "snp/error.hpp"
#include "snp/rasterizer.hpp"
#include "snp/shading.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace snp::detail {

inline double log_sigmoid(double x) {
  return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

struct ProjectedPoint {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;
  double base_log_weight = 0.0;  // log sigmoid(logit) + closeness / gamma
  int x0 = 0, x1 = -1, y0 = 0, y1 = -1;  // inclusive pixel bbox; empty when x1 < x0

  bool visible() const { return x1 >= x0 && y1 >= y0; }
};

struct Candidate {
  std::uint32_t point;
  double log_weight;
  double dx;
  double dy;
  double depth;
};

struct RenderSetup {
  int width = 0;
  int height = 0;
  int channels = 0;
  double radius_px = 0.0;
  double gamma = 0.0;
  double z_near = 0.0;
  double z_far = 0.0;
  std::vector<double> background;
  ViewDirectionMode view_directions = ViewDirectionMode::PerPoint;
  Vec3 view_axis = Vec3::Zero();  // direction used in PerView mode
  Vec3 center = Vec3::Zero();
  int max_contributors = 32;
};

inline RenderSetup make_setup(const FeaturizedPointCloud& cloud, const Camera& camera,
                              const RenderConfig& config) {
  config.validate();
  SNP_CHECK(cloud.feature_dim > 0 && cloud.feature_dim % kShBasisSize == 0, ErrorCode::DimError,
            "feature_dim must be a positive multiple of 9");
  SNP_CHECK(cloud.features.size() == cloud.size() * cloud.feature_dim &&
                cloud.opacity_logits.size() == cloud.size(),
            ErrorCode::DimMismatch, "point arrays disagree on N");
  RenderSetup s;
  s.width = camera.width();
  s.height = camera.height();
  s.channels = cloud.feature_dim / kShBasisSize;
  const double radius = config.radius ? *config.radius : cloud.radius;
  SNP_CHECK(radius > 0.0, ErrorCode::InvalidArgument, "radius must be positive");
  s.radius_px = pixel_radius(radius, camera);
  s.gamma = config.gamma;
  s.z_near = config.z_near;
  s.z_far = config.z_far;
  s.background = config.background.empty() ? std::vector<double>(s.channels, 0.0) : config.background;
  SNP_CHECK(static_cast<int>(s.background.size()) == s.channels, ErrorCode::ShapeMismatch,
            "background has " + std::to_string(s.background.size()) + " values, expected " +
                std::to_string(s.channels));
  s.view_directions = config.view_directions;
  s.view_axis = -camera.rotation().row(2).transpose();
  s.center = camera.center();
  s.max_contributors = config.max_contributors;
  return s;
}

inline Vec3 view_direction(const RenderSetup& s, const Vec3& position) {
  if (s.view_directions == ViewDirectionMode::PerView) return s.view_axis;
  const Vec3 d = s.center - position;
  const double n = d.norm();
  return n > 0.0 ? Vec3(d / n) : s.view_axis;
}

inline ProjectedPoint project_point(const RenderSetup& s, const Camera& camera, const Vec3& p,
                                    double logit) {
  ProjectedPoint out;
  const Vec3 pc = camera.to_camera(p);
  const double z = pc.z();
  if (!(z > 0.0) || z < s.z_near || z > s.z_far) return out;
  const Vec3 h = camera.intrinsics() * pc;
  out.u = h.x() / h.z();
  out.v = h.y() / h.z();
  out.depth = z;
  out.base_log_weight = log_sigmoid(logit) + ((s.z_far - z) / (s.z_far - s.z_near)) / s.gamma;
  const double r = s.radius_px;
  const double fx0 = std::ceil(out.u - r), fx1 = std::floor(out.u + r);
  const double fy0 = std::ceil(out.v - r), fy1 = std::floor(out.v + r);
  if (!(fx1 >= 0.0 && fy1 >= 0.0 && fx0 <= s.width - 1 && fy0 <= s.height - 1)) return out;
  out.x0 = static_cast<int>(std::max(fx0, 0.0));
  out.x1 = static_cast<int>(std::min(fx1, double(s.width - 1)));
  out.y0 = static_cast<int>(std::max(fy0, 0.0));
  out.y1 = static_cast<int>(std::min(fy1, double(s.height - 1)));
  return out;
}

// Coverage test for one pixel; appends to `out` when the pixel is strictly
// inside the disc (coverage > 0).
inline void gather(const RenderSetup& s, std::uint32_t index, const ProjectedPoint& pp, int x, int y,
                   std::vector<Candidate>& out) {
  const double dx = x - pp.u;
  const double dy = y - pp.v;
  const double r2 = s.radius_px * s.radius_px;
  const double rho2 = dx * dx + dy * dy;
  if (rho2 > r2) return;
  const double coverage = 1.0 - rho2 / r2;
  if (!(coverage > 0.0)) return;
  out.push_back({index, pp.base_log_weight + std::log(coverage), dx, dy, pp.depth});
}

struct PixelResult {
  double weight_sum = 0.0;
  double background_weight = 1.0;
  double nearest_depth = std::numeric_limits<double>::infinity();
};

// Caps, normalizes and blends one pixel. `candidates` arrives in ascending
// point order and is left holding the kept contributors in that order.
// `colors` is N x channels (modulated features).
inline PixelResult resolve_pixel(const RenderSetup& s, std::vector<Candidate>& candidates,
                                 const std::vector<double>& colors, double* pixel_out,
                                 std::vector<Contributor>& contributors_out) {
  const auto cap = static_cast<std::size_t>(s.max_contributors);
  if (candidates.size() > cap) {
    auto heavier = [](const Candidate& a, const Candidate& b) {
      return a.log_weight != b.log_weight ? a.log_weight > b.log_weight : a.point < b.point;
    };
    std::nth_element(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(cap),
                     candidates.end(), heavier);
    candidates.resize(cap);
    std::sort(candidates.begin(), candidates.end(),
              [](const Candidate& a, const Candidate& b) { return a.point < b.point; });
  }
  PixelResult r;
  double m = 0.0;  // background log weight
  for (const auto& c : candidates) m = std::max(m, c.log_weight);
  const double e_bg = std::exp(-m);
  double total = e_bg;
  for (auto& c : candidates) {
    c.log_weight = std::exp(c.log_weight - m);  // reuse slot for the unnormalized weight
    total += c.log_weight;
  }
  r.background_weight = e_bg / total;
  for (int ch = 0; ch < s.channels; ++ch) pixel_out[ch] = r.background_weight * s.background[ch];
  for (const auto& c : candidates) {
    const double w = c.log_weight / total;
    const double* col = colors.data() + static_cast<std::size_t>(c.point) * s.channels;
    for (int ch = 0; ch < s.channels; ++ch) pixel_out[ch] += w * col[ch];
    r.weight_sum += w;
    r.nearest_depth = std::min(r.nearest_depth, c.depth);
    contributors_out.push_back({c.point, w, c.dx, c.dy});
  }
  return r;
}

inline void point_color(const RenderSetup& s, const FeaturizedPointCloud& cloud, std::size_t i,
                        double* out) {
  const ShBasis b = sh_basis_unchecked(view_direction(s, cloud.positions[i]));
  const double* f = cloud.features.data() + i * cloud.feature_dim;
  for (int c = 0; c < s.channels; ++c) {
    double acc = 0.0;
    for (int k = 0; k < kShBasisSize; ++k) acc += f[c * kShBasisSize + k] * b[k];
    out[c] = acc;
  }
}

inline bool is_active(std::span<const std::uint8_t> active, std::size_t i) {
  return active.empty() || active[i] != 0;
}

}  // namespace snp::detail
