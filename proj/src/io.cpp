#include "snp/io.hpp"

#include "snp/error.hpp"
#include "snp/image.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <optional>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

namespace snp {

static_assert(std::endian::native == std::endian::little, "PLY writer assumes a little-endian host");

namespace {

enum class PlyType { I8, U8, I16, U16, I32, U32, F32, F64 };

std::optional<PlyType> parse_type(const std::string& s) {
  if (s == "char" || s == "int8") return PlyType::I8;
  if (s == "uchar" || s == "uint8") return PlyType::U8;
  if (s == "short" || s == "int16") return PlyType::I16;
  if (s == "ushort" || s == "uint16") return PlyType::U16;
  if (s == "int" || s == "int32") return PlyType::I32;
  if (s == "uint" || s == "uint32") return PlyType::U32;
  if (s == "float" || s == "float32") return PlyType::F32;
  if (s == "double" || s == "float64") return PlyType::F64;
  return std::nullopt;
}

std::size_t type_size(PlyType t) {
  switch (t) {
    case PlyType::I8:
    case PlyType::U8: return 1;
    case PlyType::I16:
    case PlyType::U16: return 2;
    case PlyType::I32:
    case PlyType::U32:
    case PlyType::F32: return 4;
    case PlyType::F64: return 8;
  }
  return 0;
}

template <typename T>
T load(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

double load_as_double(PlyType t, const char* p) {
  switch (t) {
    case PlyType::I8: return load<std::int8_t>(p);
    case PlyType::U8: return load<std::uint8_t>(p);
    case PlyType::I16: return load<std::int16_t>(p);
    case PlyType::U16: return load<std::uint16_t>(p);
    case PlyType::I32: return load<std::int32_t>(p);
    case PlyType::U32: return load<std::uint32_t>(p);
    case PlyType::F32: return load<float>(p);
    case PlyType::F64: return load<double>(p);
  }
  return 0.0;
}

struct Property {
  std::string name;
  PlyType type;
};

enum class Slot { X, Y, Z, Opacity, Feature, Ignore };

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::vector<char> encode_ply(const FeaturizedPointCloud& cloud) {
  cloud.validate();
  std::ostringstream header;
  header << "ply\n"
         << "format binary_little_endian 1.0\n"
         << "comment snp feature_dim " << cloud.feature_dim << "\n"
         << "comment snp radius " << format_double(cloud.radius) << "\n"
         << "element vertex " << cloud.size() << "\n"
         << "property float x\nproperty float y\nproperty float z\n"
         << "property float opacity_logit\n";
  for (int k = 0; k < cloud.feature_dim; ++k) header << "property float f_" << k << "\n";
  header << "end_header\n";
  const std::string h = header.str();
  const std::size_t stride = 4 + static_cast<std::size_t>(cloud.feature_dim);
  std::vector<char> out(h.begin(), h.end());
  const std::size_t base = out.size();
  out.resize(base + cloud.size() * stride * sizeof(float));
  char* dst = out.data() + base;
  std::vector<float> row(stride);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.positions[i];
    row[0] = static_cast<float>(p.x());
    row[1] = static_cast<float>(p.y());
    row[2] = static_cast<float>(p.z());
    row[3] = static_cast<float>(cloud.opacity_logits[i]);
    const auto f = cloud.feature_row(i);
    for (int k = 0; k < cloud.feature_dim; ++k) row[4 + k] = static_cast<float>(f[k]);
    std::memcpy(dst, row.data(), stride * sizeof(float));
    dst += stride * sizeof(float);
  }
  return out;
}

FeaturizedPointCloud decode_ply(const std::vector<char>& bytes, const PlyReadOptions& opts) {
  std::size_t pos = 0;
  auto next_line = [&]() -> std::string {
    const auto start = pos;
    while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    if (pos >= bytes.size()) throw ParseError(start, "unterminated PLY header");
    std::string line(bytes.data() + start, pos - start);
    ++pos;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  };

  if (next_line() != "ply") throw ParseError(0, "missing 'ply' magic");
  bool binary = false;
  bool have_format = false;
  std::size_t vertex_count = 0;
  bool in_vertex = false;
  bool have_vertex = false;
  std::vector<Property> props;
  std::optional<int> comment_k;
  std::optional<double> comment_radius;

  while (true) {
    const std::size_t line_start = pos;
    const std::string line = next_line();
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "end_header") break;
    if (kw.empty() || kw == "obj_info") continue;
    if (kw == "comment") {
      std::string tag, key;
      ls >> tag >> key;
      if (tag == "snp" && key == "feature_dim") {
        int k = 0;
        if (!(ls >> k)) throw ParseError(line_start, "bad feature_dim comment");
        comment_k = k;
      } else if (tag == "snp" && key == "radius") {
        double r = 0;
        if (!(ls >> r)) throw ParseError(line_start, "bad radius comment");
        comment_radius = r;
      }
      continue;
    }
    if (kw == "format") {
      std::string fmt, ver;
      ls >> fmt >> ver;
      if (fmt == "binary_little_endian") binary = true;
      else if (fmt == "ascii") binary = false;
      else throw Error(ErrorCode::UnsupportedProperty, "PLY format '" + fmt + "' is not supported");
      have_format = true;
      continue;
    }
    if (kw == "element") {
      std::string name;
      long long count = -1;
      ls >> name >> count;
      if (count < 0) throw ParseError(line_start, "bad element line");
      if (name != "vertex")
        throw Error(ErrorCode::UnsupportedProperty, "unknown PLY element '" + name + "'");
      if (have_vertex) throw ParseError(line_start, "duplicate vertex element");
      vertex_count = static_cast<std::size_t>(count);
      in_vertex = have_vertex = true;
      continue;
    }
    if (kw == "property") {
      if (!in_vertex) throw ParseError(line_start, "property outside an element");
      std::string type, name;
      ls >> type;
      if (type == "list")
        throw Error(ErrorCode::UnsupportedProperty, "list properties are not supported");
      ls >> name;
      const auto t = parse_type(type);
      if (!t) throw ParseError(line_start, "unknown property type '" + type + "'");
      props.push_back({name, *t});
      continue;
    }
    throw ParseError(line_start, "unexpected header keyword '" + kw + "'");
  }
  if (!have_format) throw ParseError(0, "missing format line");
  if (!have_vertex) throw ParseError(0, "missing vertex element");

  // Map properties to slots.
  int max_feature = -1;
  std::vector<Slot> slots(props.size(), Slot::Ignore);
  std::vector<int> feature_index(props.size(), -1);
  bool hx = false, hy = false, hz = false;
  for (std::size_t i = 0; i < props.size(); ++i) {
    const auto& n = props[i].name;
    if (n == "x") slots[i] = Slot::X, hx = true;
    else if (n == "y") slots[i] = Slot::Y, hy = true;
    else if (n == "z") slots[i] = Slot::Z, hz = true;
    else if (n == "opacity_logit") slots[i] = Slot::Opacity;
    else if (n.rfind("f_", 0) == 0) {
      int k = -1;
      const auto* b = n.data() + 2;
      const auto* e = n.data() + n.size();
      const auto res = std::from_chars(b, e, k);
      if (res.ec == std::errc() && res.ptr == e && k >= 0) {
        slots[i] = Slot::Feature;
        feature_index[i] = k;
        max_feature = std::max(max_feature, k);
      }
    }
  }
  if (!(hx && hy && hz)) throw ParseError(0, "vertex element lacks x/y/z");
  const int K = comment_k ? *comment_k : (max_feature >= 0 ? max_feature + 1 : opts.default_feature_dim);
  if (max_feature >= K)
    throw ParseError(0, "feature property f_" + std::to_string(max_feature) + " exceeds K");

  auto cloud = FeaturizedPointCloud::empty(K, comment_radius ? *comment_radius : opts.default_radius);
  cloud.positions.resize(vertex_count, Vec3::Zero());
  cloud.opacity_logits.assign(vertex_count, opts.default_opacity_logit);
  cloud.features.assign(vertex_count * static_cast<std::size_t>(std::max(K, 0)), 0.0);

  auto assign = [&](std::size_t v, std::size_t p, double value) {
    switch (slots[p]) {
      case Slot::X: cloud.positions[v].x() = value; break;
      case Slot::Y: cloud.positions[v].y() = value; break;
      case Slot::Z: cloud.positions[v].z() = value; break;
      case Slot::Opacity: cloud.opacity_logits[v] = value; break;
      case Slot::Feature: cloud.features[v * K + feature_index[p]] = value; break;
      case Slot::Ignore: break;
    }
  };

  if (binary) {
    std::size_t stride = 0;
    for (const auto& p : props) stride += type_size(p.type);
    const std::size_t need = vertex_count * stride;
    if (bytes.size() - pos < need)
      throw ParseError(bytes.size(), "truncated vertex data: expected " + std::to_string(need) +
                                         " bytes after header, found " +
                                         std::to_string(bytes.size() - pos));
    const char* src = bytes.data() + pos;
    for (std::size_t v = 0; v < vertex_count; ++v)
      for (std::size_t p = 0; p < props.size(); ++p) {
        assign(v, p, load_as_double(props[p].type, src));
        src += type_size(props[p].type);
      }
  } else {
    for (std::size_t v = 0; v < vertex_count; ++v)
      for (std::size_t p = 0; p < props.size(); ++p) {
        while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
        const std::size_t start = pos;
        while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
        if (start == pos) throw ParseError(start, "truncated ASCII vertex data");
        double value = 0.0;
        const auto res = std::from_chars(bytes.data() + start, bytes.data() + pos, value);
        if (res.ec != std::errc() || res.ptr != bytes.data() + pos)
          throw ParseError(start, "bad number in ASCII vertex data");
        assign(v, p, value);
      }
  }
  cloud.validate();
  return cloud;
}

void write_ply(const std::filesystem::path& path, const FeaturizedPointCloud& cloud) {
  const auto bytes = encode_ply(cloud);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::Io, "short write to " + path.string());
}

FeaturizedPointCloud read_ply(const std::filesystem::path& path, const PlyReadOptions& opts) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_ply(bytes, opts);
  } catch (const ParseError& e) {
    throw ParseError(e.byte_offset(), path.string() + ": " + e.what());
  }
}

void write_depth_map(const std::filesystem::path& pfm_path, const DepthMap& map) {
  Image img(map.width, map.height, 1);
  for (int r = 0; r < map.height; ++r)
    for (int c = 0; c < map.width; ++c) img.at(c, r) = map.is_valid(c, r) ? map.value(c, r) : 0.0;
  write_pfm(pfm_path, img);
  nlohmann::json side{{"camera", map.camera_index}, {"scale", map.scale}};
  auto json_path = pfm_path;
  json_path.replace_extension(".json");
  std::ofstream out(json_path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + json_path.string());
  out << side.dump() << '\n';
}

DepthMap read_depth_map(const std::filesystem::path& pfm_path, const std::vector<Camera>& cameras) {
  auto json_path = pfm_path;
  json_path.replace_extension(".json");
  std::ifstream in(json_path);
  if (!in) throw Error(ErrorCode::Io, "missing depth sidecar " + json_path.string());
  nlohmann::json side;
  try {
    in >> side;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, json_path.string() + ": " + e.what());
  }
  const int cam = side.value("camera", -1);
  const int scale = side.value("scale", 1);
  SNP_CHECK(cam >= 0 && static_cast<std::size_t>(cam) < cameras.size(), ErrorCode::InvalidArgument,
            json_path.string() + ": camera index out of range");
  const Image img = read_pfm(pfm_path);
  SNP_CHECK(img.channels == 1, ErrorCode::ShapeMismatch, pfm_path.string() + ": depth must be 1 channel");
  DepthMap map(cameras[cam], cam, scale);
  SNP_CHECK(img.width == map.width && img.height == map.height, ErrorCode::ShapeMismatch,
            pfm_path.string() + ": size does not match camera / scale");
  for (int r = 0; r < map.height; ++r)
    for (int c = 0; c < map.width; ++c) {
      const double d = img.at(c, r);
      if (d > 0.0 && std::isfinite(d)) map.set(c, r, d);
    }
  return map;
}

std::vector<DepthMap> read_depth_dir(const std::filesystem::path& dir, const std::vector<Camera>& cameras) {
  if (!std::filesystem::is_directory(dir))
    throw Error(ErrorCode::Io, "depth directory not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.path().extension() == ".pfm") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<DepthMap> maps;
  for (const auto& f : files) maps.push_back(read_depth_map(f, cameras));
  return maps;
}

}  // namespace snp
