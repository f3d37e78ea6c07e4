#include "snp/error.hpp"
#include "snp/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

namespace snp {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

void write_pfm(const std::filesystem::path& path, const Image& image) {
  SNP_CHECK(image.channels == 1 || image.channels == 3, ErrorCode::ShapeMismatch,
            "PFM supports 1 or 3 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << (image.channels == 3 ? "PF" : "Pf") << '\n'
      << image.width << ' ' << image.height << '\n'
      << "-1.0" << '\n';
  std::vector<float> row(static_cast<std::size_t>(image.width) * image.channels);
  for (int y = image.height - 1; y >= 0; --y) {
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < image.channels; ++c)
        row[static_cast<std::size_t>(x) * image.channels + c] = static_cast<float>(image.at(x, y, c));
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!out) throw Error(ErrorCode::Io, "short write to " + path.string());
}

Image read_pfm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::string magic;
  int w = 0, h = 0;
  double scale = 0.0;
  in >> magic >> w >> h >> scale;
  if (!in || (magic != "PF" && magic != "Pf") || w <= 0 || h <= 0)
    throw ParseError(static_cast<std::size_t>(std::max<std::streamoff>(0, in.tellg())),
                     path.string() + ": bad PFM header");
  in.get();  // single whitespace byte before raster
  SNP_CHECK(scale < 0.0, ErrorCode::UnsupportedProperty,
            path.string() + ": big-endian PFM is not supported");
  const int channels = magic == "PF" ? 3 : 1;
  Image image(w, h, channels);
  std::vector<float> row(static_cast<std::size_t>(w) * channels);
  for (int y = h - 1; y >= 0; --y) {
    const auto offset = static_cast<std::size_t>(in.tellg());
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (!in) throw ParseError(offset, path.string() + ": truncated PFM raster");
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c)
        image.at(x, y, c) = row[static_cast<std::size_t>(x) * channels + c];
  }
  return image;
}

void write_png(const std::filesystem::path& path, const Image& image) {
  SNP_CHECK(image.channels == 1 || image.channels == 3, ErrorCode::ShapeMismatch,
            "PNG export supports 1 or 3 channels");
  FilePtr fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) throw Error(ErrorCode::Io, "cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::Io, "libpng initialization failed");
  }
  std::vector<std::uint8_t> bytes(image.data.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const double v = std::clamp(image.data[i], 0.0, 1.0);
    bytes[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  std::vector<png_bytep> rows(image.height);
  for (int y = 0; y < image.height; ++y)
    rows[y] = bytes.data() + static_cast<std::size_t>(y) * image.width * image.channels;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::Io, "libpng write failed for " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, image.width, image.height, 8,
               image.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image read_png(const std::filesystem::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.string().c_str()))
    throw Error(ErrorCode::Io, "cannot read PNG " + path.string());
  img.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&img);
    throw Error(ErrorCode::Io, "cannot decode PNG " + path.string());
  }
  Image out(static_cast<int>(img.width), static_cast<int>(img.height), 3);
  for (std::size_t i = 0; i < buf.size(); ++i) out.data[i] = buf[i] / 255.0;
  return out;
}

Image read_image(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".png" || ext == ".PNG") return read_png(path);
  return read_pfm(path);
}

}  // namespace snp
