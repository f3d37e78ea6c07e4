#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace snp {

// Row-major H x W x C image of doubles.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, int c, double fill = 0.0)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  std::size_t index(int x, int y, int c = 0) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  double& at(int x, int y, int c = 0) { return data[index(x, y, c)]; }
  double at(int x, int y, int c = 0) const { return data[index(x, y, c)]; }
  std::span<double> pixel(int x, int y) { return {data.data() + index(x, y), std::size_t(channels)}; }
  std::span<const double> pixel(int x, int y) const {
    return {data.data() + index(x, y), std::size_t(channels)};
  }
  bool same_shape(const Image& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
};

// Portable Float Map. One channel -> "Pf", three -> "PF"; always little-endian
// (negative scale). Rows are stored bottom-to-top as the format requires.
void write_pfm(const std::filesystem::path& path, const Image& image);
Image read_pfm(const std::filesystem::path& path);

// 8-bit PNG: values clamped to [0, 1] then rounded to 0..255.
void write_png(const std::filesystem::path& path, const Image& image);
Image read_png(const std::filesystem::path& path);

// Reads .pfm or .png by extension.
Image read_image(const std::filesystem::path& path);

}  // namespace snp
