#include "snp/reference/rasterize_serial.hpp"

#include "../raster_common.hpp"

#include <limits>

namespace snp::reference {

RenderOutput rasterize_serial(const FeaturizedPointCloud& cloud, const Camera& camera,
                              const RenderConfig& config, std::span<const std::uint8_t> active) {
  using namespace detail;
  const RenderSetup s = make_setup(cloud, camera, config);
  SNP_CHECK(active.empty() || active.size() == cloud.size(), ErrorCode::DimMismatch,
            "active mask size differs from N");
  const int W = s.width, H = s.height, C = s.channels;
  const std::size_t n_pix = static_cast<std::size_t>(W) * H;

  std::vector<std::vector<Candidate>> lists(n_pix);
  std::vector<double> colors(cloud.size() * C);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (!is_active(active, i)) continue;
    const ProjectedPoint p = project_point(s, camera, cloud.positions[i], cloud.opacity_logits[i]);
    if (!p.visible()) continue;
    point_color(s, cloud, i, colors.data() + i * C);
    for (int y = p.y0; y <= p.y1; ++y)
      for (int x = p.x0; x <= p.x1; ++x)
        gather(s, static_cast<std::uint32_t>(i), p, x, y, lists[static_cast<std::size_t>(y) * W + x]);
  }

  RenderOutput out;
  out.image = Image(W, H, C);
  out.weight_sums.assign(n_pix, 0.0);
  out.background_weights.assign(n_pix, 1.0);
  out.nearest_depth.assign(n_pix, std::numeric_limits<double>::infinity());
  out.pixel_offsets.assign(n_pix + 1, 0);
  for (std::size_t pix = 0; pix < n_pix; ++pix) {
    const PixelResult r = resolve_pixel(s, lists[pix], colors, out.image.data.data() + pix * C, out.contributors);
    out.weight_sums[pix] = r.weight_sum;
    out.background_weights[pix] = r.background_weight;
    out.nearest_depth[pix] = r.nearest_depth;
    out.pixel_offsets[pix + 1] = out.contributors.size();
  }
  out.cloud_fingerprint = cloud.fingerprint();
  out.radius_px = s.radius_px;
  return out;
}

}  // namespace snp::reference
