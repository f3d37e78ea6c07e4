#include "snp/error.hpp"
#include "snp/metrics.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace snp;

namespace {

Image noise(int w, int h, int c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image img(w, h, c);
  for (double& x : img.data) x = u(rng);
  return img;
}

Image swap_channels(const Image& img) {
  Image out(img.width, img.height, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = img.at(x, y, img.channels - 1 - c);
  return out;
}

template <ErrorCode C, typename F>
void check_throws(F&& f) {
  try {
    f();
    FAIL("expected an exception");
  } catch (const Error& e) {
    CHECK(e.code() == C);
  }
}

}  // namespace

TEST_CASE("psnr examples") {
  const Image a(16, 16, 3, 0.2);
  CHECK(psnr(a, a) == kPsnrSentinel);
  CHECK(psnr(a, Image(16, 16, 3, 0.3)) == doctest::Approx(20.0).epsilon(1e-9));
  CHECK(psnr(Image(8, 8, 1, 0.0), Image(8, 8, 1, 1.0)) == doctest::Approx(0.0));
  check_throws<ErrorCode::ShapeMismatch>([&] { psnr(a, Image(16, 15, 3)); });
}

TEST_CASE("psnr is symmetric and channel-permutation invariant") {
  const Image a = noise(20, 12, 3, 1), b = noise(20, 12, 3, 2);
  CHECK(psnr(a, b) == psnr(b, a));
  CHECK(psnr(swap_channels(a), swap_channels(b)) == doctest::Approx(psnr(a, b)).epsilon(1e-14));
}

TEST_CASE("ssim examples") {
  const Image a = noise(32, 32, 3, 3);
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-14));

  const Image board = checkerboard(32, 32, 3, 4);
  Image neg = board;
  for (double& x : neg.data) x = 1.0 - x;
  CHECK(ssim(board, neg) < 0.2);

  // Constant images: the structure term is C2 / C2, leaving the luminance term.
  const double c1 = 0.01 * 0.01, x = 0.25, y = 0.75;
  const double expect = (2 * x * y + c1) / (x * x + y * y + c1);
  CHECK(ssim(Image(16, 16, 3, x), Image(16, 16, 3, y)) == doctest::Approx(expect).epsilon(1e-12));

  check_throws<ErrorCode::TooSmall>([] { ssim(Image(10, 32, 1), Image(10, 32, 1)); });
  check_throws<ErrorCode::ShapeMismatch>([&] { ssim(a, Image(32, 32, 1)); });
  CHECK(ssim(swap_channels(a), swap_channels(board)) == doctest::Approx(ssim(a, board)).epsilon(1e-12));
}

TEST_CASE("masked l1") {
  const Image a(4, 4, 3, 0.0), b(4, 4, 3, 0.5);
  std::vector<std::uint8_t> mask(16, 0);
  mask[3] = 1;
  CHECK(masked_l1(a, b, mask) == 0.5);
  Image c = b;
  c.at(0, 0, 1) = 3.0;  // outside the mask
  CHECK(masked_l1(a, c, mask) == 0.5);
}

TEST_CASE("checkerboard shift and gray blend closed forms") {
  const Image board = checkerboard(32, 32, 3, 2);
  // A 1-pixel shift inverts every pixel: MSE 1.
  CHECK(psnr(board, shift_columns(board, 1)) == doctest::Approx(0.0));
  // A 50% gray blend moves every pixel by 0.25: MSE 1/16.
  CHECK(psnr(board, gray_blend(board, 0.5)) == doctest::Approx(10 * std::log10(16.0)).epsilon(1e-12));
  const auto r = shift_sensitivity_experiment(board);
  CHECK(r.psnr_blend == doctest::Approx(20 * std::log10(4.0)).epsilon(1e-12));
  CHECK(r.psnr_shift < r.psnr_blend);
  CHECK(r.shift_worse);
  CHECK_FALSE(r.degenerate);
}

TEST_CASE("shift sensitivity on constant and noise textures") {
  const auto flat = shift_sensitivity_experiment(Image(16, 16, 3, 0.4));
  CHECK(flat.degenerate);
  CHECK(flat.psnr_shift == kPsnrSentinel);
  CHECK_FALSE(flat.shift_worse);
  for (std::uint64_t seed = 0; seed < 10; ++seed) CHECK(shift_sensitivity_experiment(noise(32, 32, 3, seed)).shift_worse);
}
