#pragma once

// Central finite-difference oracle for the rasterizer's reverse pass. The
// scalar probed is L = sum(G * render(cloud)) for a fixed upstream image G, so
// its gradient equals backward(render, G).

#include "snp/image.hpp"
#include "snp/optimizer.hpp"
#include "snp/rasterizer.hpp"

#include <cmath>
#include <vector>

namespace snp::test {

inline double probe(const FeaturizedPointCloud& cloud, const Camera& cam, const RenderConfig& cfg,
                    const Image& g) {
  const Image img = rasterize(cloud, cam, cfg).image;
  double acc = 0.0;
  for (std::size_t i = 0; i < img.data.size(); ++i) acc += g.data[i] * img.data[i];
  return acc;
}

inline Gradients numeric_gradients(const FeaturizedPointCloud& cloud, const Camera& cam,
                                   const RenderConfig& cfg, const Image& g, double h_feat = 1e-6,
                                   double h_pos = 1e-7) {
  Gradients out = Gradients::zeros(cloud.size(), cloud.feature_dim);
  FeaturizedPointCloud c = cloud;
  auto central = [&](double& param, double h) {
    const double orig = param;
    param = orig + h;
    const double up = probe(c, cam, cfg, g);
    param = orig - h;
    const double down = probe(c, cam, cfg, g);
    param = orig;
    return (up - down) / (2.0 * h);
  };
  for (std::size_t k = 0; k < c.features.size(); ++k) out.d_features[k] = central(c.features[k], h_feat);
  for (std::size_t i = 0; i < c.size(); ++i) {
    out.d_opacity_logits[i] = central(c.opacity_logits[i], h_feat);
    for (int a = 0; a < 3; ++a) out.d_positions[i][a] = central(c.positions[i][a], h_pos);
  }
  return out;
}

// Points whose disc boundary passes within `band` pixels of some pixel center
// (or that sit near the depth clip planes) have a discontinuous position
// derivative; finite differences are meaningless for them.
inline std::vector<std::uint8_t> boundary_points(const FeaturizedPointCloud& cloud, const Camera& cam,
                                                 const RenderConfig& cfg, double band) {
  const double r = pixel_radius(cfg.radius ? *cfg.radius : cloud.radius, cam);
  std::vector<std::uint8_t> out(cloud.size(), 0);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const double z = depth_in_view(cloud.positions[i], cam);
    if (std::abs(z - cfg.z_near) < 1e-3 || std::abs(z - cfg.z_far) < 1e-3) {
      out[i] = 1;
      continue;
    }
    if (z < cfg.z_near || z > cfg.z_far) continue;
    const PixelDepth p = project(cloud.positions[i], cam);
    for (int y = static_cast<int>(std::floor(p.v - r)) - 1; y <= static_cast<int>(std::ceil(p.v + r)) + 1; ++y)
      for (int x = static_cast<int>(std::floor(p.u - r)) - 1; x <= static_cast<int>(std::ceil(p.u + r)) + 1;
           ++x) {
        if (x < 0 || y < 0 || x >= cam.width() || y >= cam.height()) continue;
        const double rho = std::hypot(x - p.u, y - p.v);
        if (std::abs(rho - r) < band) out[i] = 1;
      }
  }
  return out;
}

template <class Get>
double group_relative_error(std::size_t n, Get&& get_pair) {
  double diff = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto [a, b] = get_pair(i);
    diff += (a - b) * (a - b);
    ref += b * b;
  }
  return ref > 0.0 ? std::sqrt(diff / ref) : std::sqrt(diff);
}

}  // namespace snp::test
