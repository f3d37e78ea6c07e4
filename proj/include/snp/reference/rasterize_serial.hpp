#pragma once

#include "snp/rasterizer.hpp"

namespace snp::reference {

// Single-threaded, untiled splat-and-resolve. Kept as the reference the tiled
// kernel is tested against (bit-for-bit) and benchmarked with.
RenderOutput rasterize_serial(const FeaturizedPointCloud& cloud, const Camera& camera,
                              const RenderConfig& config, std::span<const std::uint8_t> active = {});

}  // namespace snp::reference
