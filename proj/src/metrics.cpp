#include "snp/metrics.hpp"

#include "snp/error.hpp"

#include <array>
#include <cmath>

namespace snp {

namespace {

void check_shapes(const Image& a, const Image& b) {
  SNP_CHECK(a.same_shape(b), ErrorCode::ShapeMismatch, "image shapes differ");
  SNP_CHECK(!a.data.empty(), ErrorCode::ShapeMismatch, "empty image");
}

constexpr int kWin = 11;

std::array<double, kWin * kWin> gaussian_window() {
  std::array<double, kWin * kWin> w{};
  double sum = 0.0;
  for (int y = 0; y < kWin; ++y)
    for (int x = 0; x < kWin; ++x) {
      const double dx = x - kWin / 2, dy = y - kWin / 2;
      sum += w[y * kWin + x] = std::exp(-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5));
    }
  for (double& v : w) v /= sum;
  return w;
}

}  // namespace

double psnr(const Image& a, const Image& b) {
  check_shapes(a, b);
  double se = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) se += (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
  const double mse = se / static_cast<double>(a.data.size());
  if (mse == 0.0) return kPsnrSentinel;
  return std::min(kPsnrSentinel, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Image& a, const Image& b) {
  check_shapes(a, b);
  SNP_CHECK(a.width >= kWin && a.height >= kWin, ErrorCode::TooSmall,
            "SSIM needs both sides >= 11 (got " + std::to_string(a.width) + "x" + std::to_string(a.height) + ")");
  static const auto w = gaussian_window();
  constexpr double C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;
  const int nx = a.width - kWin + 1, ny = a.height - kWin + 1;
  double total = 0.0;
  for (int c = 0; c < a.channels; ++c) {
    double channel = 0.0;
#pragma omp parallel for reduction(+ : channel) schedule(static)
    for (int y0 = 0; y0 < ny; ++y0)
      for (int x0 = 0; x0 < nx; ++x0) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int dy = 0; dy < kWin; ++dy)
          for (int dx = 0; dx < kWin; ++dx) {
            const double g = w[dy * kWin + dx];
            const double va = a.at(x0 + dx, y0 + dy, c), vb = b.at(x0 + dx, y0 + dy, c);
            ma += g * va;
            mb += g * vb;
            saa += g * va * va;
            sbb += g * vb * vb;
            sab += g * va * vb;
          }
        const double var_a = saa - ma * ma, var_b = sbb - mb * mb, cov = sab - ma * mb;
        channel += ((2 * ma * mb + C1) * (2 * cov + C2)) / ((ma * ma + mb * mb + C1) * (var_a + var_b + C2));
      }
    total += channel / (static_cast<double>(nx) * ny);
  }
  return total / a.channels;
}

double masked_l1(const Image& a, const Image& b, std::span<const std::uint8_t> mask) {
  check_shapes(a, b);
  SNP_CHECK(mask.size() == a.pixel_count(), ErrorCode::ShapeMismatch, "mask size differs from image");
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t p = 0; p < mask.size(); ++p) {
    if (!mask[p]) continue;
    for (int c = 0; c < a.channels; ++c) acc += std::abs(a.data[p * a.channels + c] - b.data[p * a.channels + c]);
    n += a.channels;
  }
  return n ? acc / static_cast<double>(n) : 0.0;
}

Image checkerboard(int width, int height, int channels, int period) {
  SNP_CHECK(period >= 2 && period % 2 == 0, ErrorCode::InvalidArgument, "period must be even and >= 2");
  Image img(width, height, channels);
  const int half = period / 2;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < channels; ++c) img.at(x, y, c) = ((x / half + y / half) % 2) ? 1.0 : 0.0;
  return img;
}

Image shift_columns(const Image& image, int dx) {
  Image out(image.width, image.height, image.channels);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) {
      const int src = ((x - dx) % image.width + image.width) % image.width;
      for (int c = 0; c < image.channels; ++c) out.at(x, y, c) = image.at(src, y, c);
    }
  return out;
}

Image gray_blend(const Image& image, double alpha, double gray) {
  Image out = image;
  for (double& v : out.data) v = (1.0 - alpha) * v + alpha * gray;
  return out;
}

ShiftSensitivityReport shift_sensitivity_experiment(const Image& texture, double blend_alpha) {
  const Image shifted = shift_columns(texture, 1);
  const Image blended = gray_blend(texture, blend_alpha);
  ShiftSensitivityReport r;
  r.psnr_shift = psnr(texture, shifted);
  r.psnr_blend = psnr(texture, blended);
  const bool ssim_ok = texture.width >= 11 && texture.height >= 11;
  r.ssim_shift = ssim_ok ? ssim(texture, shifted) : 0.0;
  r.ssim_blend = ssim_ok ? ssim(texture, blended) : 0.0;
  r.degenerate = shifted.data == texture.data;
  r.shift_worse = !r.degenerate && r.psnr_shift < r.psnr_blend;
  return r;
}

}  // namespace snp
