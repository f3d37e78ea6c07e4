#include "snp/rasterizer.hpp"

#include "raster_common.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace snp {

void RenderConfig::validate() const {
  SNP_CHECK(std::isfinite(z_near) && z_near > 0.0 && z_near < z_far, ErrorCode::InvalidBounds,
            "need 0 < z_near < z_far (got " + std::to_string(z_near) + ", " + std::to_string(z_far) + ")");
  SNP_CHECK(std::isfinite(z_far), ErrorCode::InvalidBounds, "z_far must be finite for rendering");
  SNP_CHECK(gamma > 0.0, ErrorCode::InvalidArgument, "gamma must be positive");
  SNP_CHECK(dropout_rate >= 0.0 && dropout_rate < 1.0, ErrorCode::InvalidArgument,
            "dropout rate must be in [0, 1)");
  SNP_CHECK(subsets >= 1, ErrorCode::InvalidArgument, "subsets must be >= 1");
  SNP_CHECK(max_contributors >= 1, ErrorCode::InvalidArgument, "max_contributors must be >= 1");
  SNP_CHECK(tile_size >= 1, ErrorCode::InvalidArgument, "tile_size must be >= 1");
  SNP_CHECK(!radius || *radius > 0.0, ErrorCode::InvalidArgument, "radius must be positive");
}

double pixel_radius(double radius, const Camera& camera) {
  return radius * std::min(camera.width(), camera.height()) / 2.0;
}

Footprint splat_footprint(const Vec3& point, const Camera& camera, double radius) {
  const PixelDepth p = project(point, camera);
  return {p.u, p.v, pixel_radius(radius, camera), p.depth};
}

std::vector<std::pair<int, int>> covered_pixels(const Footprint& fp, int width, int height) {
  std::vector<std::pair<int, int>> out;
  const double r = fp.radius_px;
  const int y0 = std::max(0, static_cast<int>(std::ceil(fp.v - r)));
  const int y1 = std::min(height - 1, static_cast<int>(std::floor(fp.v + r)));
  const int x0 = std::max(0, static_cast<int>(std::ceil(fp.u - r)));
  const int x1 = std::min(width - 1, static_cast<int>(std::floor(fp.u + r)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double dx = x - fp.u, dy = y - fp.v;
      if (dx * dx + dy * dy <= r * r) out.emplace_back(x, y);
    }
  return out;
}

RenderOutput rasterize(const FeaturizedPointCloud& cloud, const Camera& camera,
                       const RenderConfig& config, std::span<const std::uint8_t> active) {
  using namespace detail;
  const RenderSetup s = make_setup(cloud, camera, config);
  SNP_CHECK(active.empty() || active.size() == cloud.size(), ErrorCode::DimMismatch,
            "active mask size differs from N");
  const auto n = static_cast<std::int64_t>(cloud.size());
  const int W = s.width, H = s.height, C = s.channels;
  const int T = config.tile_size;
  const int tiles_x = (W + T - 1) / T, tiles_y = (H + T - 1) / T;
  const int n_tiles = tiles_x * tiles_y;

  // 1. Project active points and evaluate their SH colors.
  std::vector<ProjectedPoint> projected(cloud.size());
  std::vector<double> colors(cloud.size() * C);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    if (!is_active(active, i)) continue;
    projected[i] = project_point(s, camera, cloud.positions[i], cloud.opacity_logits[i]);
    if (projected[i].visible()) point_color(s, cloud, i, colors.data() + i * C);
  }

  // 2. Bin points into tiles. Counting sort in point order keeps each tile's
  //    list ascending, which fixes the per-pixel gather order.
  std::vector<std::uint64_t> tile_offsets(n_tiles + 1, 0);
  for (std::int64_t i = 0; i < n; ++i) {
    const auto& p = projected[i];
    if (!p.visible()) continue;
    for (int ty = p.y0 / T; ty <= p.y1 / T; ++ty)
      for (int tx = p.x0 / T; tx <= p.x1 / T; ++tx) ++tile_offsets[ty * tiles_x + tx + 1];
  }
  std::partial_sum(tile_offsets.begin(), tile_offsets.end(), tile_offsets.begin());
  std::vector<std::uint32_t> tile_points(tile_offsets.back());
  {
    std::vector<std::uint64_t> cursor(tile_offsets.begin(), tile_offsets.end() - 1);
    for (std::int64_t i = 0; i < n; ++i) {
      const auto& p = projected[i];
      if (!p.visible()) continue;
      for (int ty = p.y0 / T; ty <= p.y1 / T; ++ty)
        for (int tx = p.x0 / T; tx <= p.x1 / T; ++tx)
          tile_points[cursor[ty * tiles_x + tx]++] = static_cast<std::uint32_t>(i);
    }
  }

  // 3. Resolve pixels tile by tile.
  RenderOutput out;
  out.image = Image(W, H, C);
  const std::size_t n_pix = static_cast<std::size_t>(W) * H;
  out.weight_sums.assign(n_pix, 0.0);
  out.background_weights.assign(n_pix, 1.0);
  out.nearest_depth.assign(n_pix, std::numeric_limits<double>::infinity());
  std::vector<std::uint32_t> pixel_counts(n_pix, 0);
  std::vector<std::vector<Contributor>> tile_contribs(n_tiles);

#pragma omp parallel
  {
    std::vector<std::vector<Candidate>> lists(static_cast<std::size_t>(T) * T);
#pragma omp for schedule(dynamic, 1)
    for (int t = 0; t < n_tiles; ++t) {
      const int tx = t % tiles_x, ty = t / tiles_x;
      const int px0 = tx * T, py0 = ty * T;
      const int px1 = std::min(W, px0 + T) - 1, py1 = std::min(H, py0 + T) - 1;
      for (auto& l : lists) l.clear();
      for (std::uint64_t k = tile_offsets[t]; k < tile_offsets[t + 1]; ++k) {
        const std::uint32_t i = tile_points[k];
        const auto& p = projected[i];
        const int ya = std::max(p.y0, py0), yb = std::min(p.y1, py1);
        const int xa = std::max(p.x0, px0), xb = std::min(p.x1, px1);
        for (int y = ya; y <= yb; ++y)
          for (int x = xa; x <= xb; ++x) gather(s, i, p, x, y, lists[(y - py0) * T + (x - px0)]);
      }
      auto& contribs = tile_contribs[t];
      contribs.clear();
      for (int y = py0; y <= py1; ++y)
        for (int x = px0; x <= px1; ++x) {
          const std::size_t pix = static_cast<std::size_t>(y) * W + x;
          auto& cands = lists[(y - py0) * T + (x - px0)];
          const std::size_t before = contribs.size();
          const PixelResult r = resolve_pixel(s, cands, colors, out.image.data.data() + pix * C, contribs);
          out.weight_sums[pix] = r.weight_sum;
          out.background_weights[pix] = r.background_weight;
          out.nearest_depth[pix] = r.nearest_depth;
          pixel_counts[pix] = static_cast<std::uint32_t>(contribs.size() - before);
        }
    }
  }

  // 4. Scatter tile-local contributor runs into row-major pixel order.
  out.pixel_offsets.assign(n_pix + 1, 0);
  for (std::size_t p = 0; p < n_pix; ++p) out.pixel_offsets[p + 1] = out.pixel_offsets[p] + pixel_counts[p];
  out.contributors.resize(out.pixel_offsets.back());
#pragma omp parallel for schedule(static)
  for (int t = 0; t < n_tiles; ++t) {
    const int tx = t % tiles_x, ty = t / tiles_x;
    const int px0 = tx * T, py0 = ty * T;
    const int px1 = std::min(W, px0 + T) - 1, py1 = std::min(H, py0 + T) - 1;
    std::size_t src = 0;
    for (int y = py0; y <= py1; ++y)
      for (int x = px0; x <= px1; ++x) {
        const std::size_t pix = static_cast<std::size_t>(y) * W + x;
        std::copy_n(tile_contribs[t].begin() + static_cast<std::ptrdiff_t>(src), pixel_counts[pix],
                    out.contributors.begin() + static_cast<std::ptrdiff_t>(out.pixel_offsets[pix]));
        src += pixel_counts[pix];
      }
  }
  out.cloud_fingerprint = cloud.fingerprint();
  out.radius_px = s.radius_px;
  return out;
}

std::vector<std::vector<std::uint8_t>> sample_subsets(std::size_t n_points, double dropout_rate,
                                                      int subsets, std::uint64_t seed) {
  SNP_CHECK(dropout_rate >= 0.0 && dropout_rate < 1.0, ErrorCode::InvalidArgument,
            "dropout rate must be in [0, 1)");
  SNP_CHECK(subsets >= 1, ErrorCode::InvalidArgument, "subsets must be >= 1");
  const double keep = 1.0 - dropout_rate;
  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::uint8_t>> masks(subsets, std::vector<std::uint8_t>(n_points));
  for (auto& mask : masks)
    for (auto& m : mask) {
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      m = u < keep ? 1 : 0;
    }
  return masks;
}

RenderOutput rasterize_ensemble(const FeaturizedPointCloud& cloud, const Camera& camera,
                                const RenderConfig& config) {
  config.validate();
  const auto masks = sample_subsets(cloud.size(), config.dropout_rate, config.subsets, config.seed);
  RenderOutput first = rasterize(cloud, camera, config, masks[0]);
  // Running mean: identical renders average to themselves exactly.
  for (int l = 1; l < config.subsets; ++l) {
    const RenderOutput next = rasterize(cloud, camera, config, masks[l]);
    const double inv = 1.0 / (l + 1);
    for (std::size_t i = 0; i < first.image.data.size(); ++i)
      first.image.data[i] += (next.image.data[i] - first.image.data[i]) * inv;
  }
  return first;
}

}  // namespace snp
