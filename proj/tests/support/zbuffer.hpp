#pragma once

// Brute-force hard z-buffer: every pixel shows the nearest point whose disc
// strictly covers the pixel center, or the background.

#include "snp/image.hpp"
#include "snp/rasterizer.hpp"
#include "snp/shading.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace snp::test {

struct ZBuffer {
  Image image;
  std::vector<double> nearest;  // +inf when uncovered
  std::vector<double> second;   // depth of the runner-up, +inf when none
};

inline ZBuffer zbuffer_render(const FeaturizedPointCloud& cloud, const Camera& cam, const RenderConfig& cfg) {
  const int W = cam.width(), H = cam.height(), C = cloud.feature_dim / 9;
  const double r = pixel_radius(cfg.radius ? *cfg.radius : cloud.radius, cam);
  ZBuffer z;
  z.image = Image(W, H, C);
  const std::size_t n_pix = static_cast<std::size_t>(W) * H;
  z.nearest.assign(n_pix, std::numeric_limits<double>::infinity());
  z.second.assign(n_pix, std::numeric_limits<double>::infinity());
  std::vector<long> owner(n_pix, -1);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const double depth = depth_in_view(cloud.positions[i], cam);
    if (depth < cfg.z_near || depth > cfg.z_far) continue;
    const PixelDepth p = project(cloud.positions[i], cam);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const double rho2 = (x - p.u) * (x - p.u) + (y - p.v) * (y - p.v);
        if (!(rho2 < r * r)) continue;
        const std::size_t k = static_cast<std::size_t>(y) * W + x;
        if (depth < z.nearest[k]) {
          z.second[k] = z.nearest[k];
          z.nearest[k] = depth;
          owner[k] = static_cast<long>(i);
        } else if (depth < z.second[k]) {
          z.second[k] = depth;
        }
      }
  }
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const std::size_t k = static_cast<std::size_t>(y) * W + x;
      for (int c = 0; c < C; ++c)
        z.image.at(x, y, c) = cfg.background.empty() ? 0.0 : cfg.background[c];
      if (owner[k] < 0) continue;
      const auto i = static_cast<std::size_t>(owner[k]);
      const Vec3 v = (cam.center() - cloud.positions[i]).normalized();
      const auto s = modulate(cloud.feature_row(i), v);
      for (int c = 0; c < C; ++c) z.image.at(x, y, c) = s[c];
    }
  return z;
}

}  // namespace snp::test
