#pragma once

#include "snp/image.hpp"

#include <cstdint>
#include <span>

namespace snp {

// Reported for identical images (PSNR is +inf there).
inline constexpr double kPsnrSentinel = 99.0;

// 10 log10(1 / MSE) over all pixels and channels, peak 1.0. Throws ShapeMismatch.
double psnr(const Image& a, const Image& b);

// Single-scale SSIM: 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03,
// dynamic range 1; mean over valid window positions and channels.
// Throws ShapeMismatch, or TooSmall when either side is < 11.
double ssim(const Image& a, const Image& b);

// Mean absolute error over the pixels where mask != 0 (all channels).
double masked_l1(const Image& a, const Image& b, std::span<const std::uint8_t> mask);

// Checkerboard of 0 / 1 squares, `period` pixels per full cycle in x and y.
Image checkerboard(int width, int height, int channels, int period);

// Circular shift by `dx` columns.
Image shift_columns(const Image& image, int dx);

// (1 - alpha) * image + alpha * gray.
Image gray_blend(const Image& image, double alpha, double gray = 0.5);

struct ShiftSensitivityReport {
  double psnr_shift = 0.0;
  double ssim_shift = 0.0;
  double psnr_blend = 0.0;
  double ssim_blend = 0.0;
  bool degenerate = false;  // shift left the image unchanged; comparison skipped
  bool shift_worse = false; // psnr_shift < psnr_blend
};

// Compares a 1-pixel shift against a gray blend of strength `blend_alpha`.
ShiftSensitivityReport shift_sensitivity_experiment(const Image& texture, double blend_alpha = 0.5);

}  // namespace snp
