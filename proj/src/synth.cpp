#include "snp/synth.hpp"

#include "snp/error.hpp"
#include "snp/shading.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace snp {

std::string to_string(SceneKind kind) {
  switch (kind) {
    case SceneKind::LambertianSphere: return "lambertian-sphere";
    case SceneKind::SpecularSphere: return "specular-sphere";
    case SceneKind::PlaneAndBox: return "plane-and-box";
  }
  return "unknown";
}

SceneKind scene_kind_from_string(const std::string& name) {
  for (SceneKind k : {SceneKind::LambertianSphere, SceneKind::SpecularSphere, SceneKind::PlaneAndBox})
    if (to_string(k) == name) return k;
  throw Error(ErrorCode::InvalidArgument, "unknown scene kind '" + name + "'");
}

SceneSpec SceneSpec::preset(SceneKind kind) {
  SceneSpec s;
  s.kind = kind;
  switch (kind) {
    case SceneKind::LambertianSphere:
      s.fov_deg = 50.0;
      s.backdrop_radius = 8.0;
      // Same ring height as training: a higher ring would look at backdrop
      // that the sphere hides from every training view.
      s.heldout_elevation_deg = s.elevation_deg;
      s.bounds = {2.5, 12.5, 100, DepthSampling::Linear};
      break;
    case SceneKind::SpecularSphere:
      // Narrow field of view: the sphere fills the whole frame.
      s.fov_deg = 18.0;
      s.point_radius = 0.05;
      break;
    case SceneKind::PlaneAndBox:
      s.fov_deg = 55.0;
      s.elevation_deg = 30.0;
      s.heldout_elevation_deg = 38.0;
      s.bounds = {1.0, 9.0, 100, DepthSampling::Linear};
      break;
  }
  return s;
}

void SceneSpec::validate() const {
  SNP_CHECK(n_cameras >= 2, ErrorCode::InvalidArgument, "need at least 2 training cameras");
  SNP_CHECK(n_heldout >= 0, ErrorCode::InvalidArgument, "n_heldout must be >= 0");
  SNP_CHECK(width > 0 && height > 0, ErrorCode::InvalidArgument, "image size must be positive");
  SNP_CHECK(depth_scale >= 1 && width % depth_scale == 0 && height % depth_scale == 0,
            ErrorCode::InvalidArgument, "depth_scale must divide the image size");
  SNP_CHECK(fov_deg > 0.0 && fov_deg < 180.0, ErrorCode::InvalidArgument, "fov must be in (0, 180)");
  SNP_CHECK(ring_radius > 1.5, ErrorCode::InvalidArgument, "cameras must sit outside the scene");
  SNP_CHECK(point_radius > 0.0, ErrorCode::InvalidArgument, "point_radius must be positive");
  SNP_CHECK(backdrop_radius == 0.0 || backdrop_radius > ring_radius, ErrorCode::InvalidArgument,
            "backdrop must enclose the cameras");
  bounds.validate();
  SNP_CHECK(std::isfinite(bounds.z_far), ErrorCode::InvalidBounds, "synthetic scenes need a finite z_far");
}

namespace {

constexpr double kSphereRadius = 1.0;
constexpr double kPlaneY = -0.5;
constexpr double kPlaneHalf = 2.5;
const Vec3 kBoxMin(-0.45, -0.5, -0.45);
const Vec3 kBoxMax(0.45, 0.3, 0.45);

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

double lattice(std::uint64_t seed, std::int64_t x, std::int64_t y, std::int64_t z) {
  std::uint64_t h = mix64(seed);
  h = mix64(h ^ static_cast<std::uint64_t>(x));
  h = mix64(h ^ static_cast<std::uint64_t>(y));
  h = mix64(h ^ static_cast<std::uint64_t>(z));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

// Smooth trilinear value noise in [0, 1).
double value_noise(std::uint64_t seed, const Vec3& p, double freq) {
  const Vec3 q = p * freq;
  const double fx = std::floor(q.x()), fy = std::floor(q.y()), fz = std::floor(q.z());
  const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy),
             iz = static_cast<std::int64_t>(fz);
  auto smooth = [](double t) { return t * t * (3.0 - 2.0 * t); };
  const double tx = smooth(q.x() - fx), ty = smooth(q.y() - fy), tz = smooth(q.z() - fz);
  double acc = 0.0;
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) {
        const double w = (dx ? tx : 1.0 - tx) * (dy ? ty : 1.0 - ty) * (dz ? tz : 1.0 - tz);
        acc += w * lattice(seed, ix + dx, iy + dy, iz + dz);
      }
  return acc;
}

// Two octaves, both well below the Nyquist rate of a 64 px view of the
// unit sphere.
Vec3 albedo(std::uint64_t seed, const Vec3& p) {
  Vec3 a;
  for (int c = 0; c < 3; ++c) {
    const double n = 0.6 * value_noise(seed * 31 + c, p, 2.0) + 0.4 * value_noise(seed * 31 + c + 7, p, 4.0);
    a[c] = 0.15 + 0.75 * n;
  }
  return a;
}

const Vec3& light_dir() {
  static const Vec3 l = Vec3(0.3, 0.85, -0.4).normalized();
  return l;
}

Vec3 lambert(const Vec3& a, const Vec3& normal) {
  return a * (0.35 + 0.6 * std::max(0.0, normal.dot(light_dir())));
}

// Diffuse color at a surface point (view independent part).
Vec3 diffuse_color(const SceneSpec& spec, const Vec3& p, const Vec3& n) {
  if (spec.backdrop_radius > 0.0 && p.norm() > 0.5 * (spec.backdrop_radius + kSphereRadius * 2.0))
    return 0.2 + 0.6 * albedo(spec.texture_seed + 2, p * 0.1).array();
  switch (spec.kind) {
    case SceneKind::LambertianSphere: return lambert(albedo(spec.texture_seed, p), n);
    case SceneKind::SpecularSphere: return Vec3(0.55, 0.5, 0.45);
    case SceneKind::PlaneAndBox: {
      if (p.y() <= kPlaneY + 1e-9 && std::abs(n.y() - 1.0) < 1e-12) {
        const int check = (static_cast<int>(std::floor(p.x() * 2.0)) + static_cast<int>(std::floor(p.z() * 2.0))) & 1;
        const Vec3 a = (check ? 0.75 : 0.3) * Vec3(0.9, 0.85, 0.8) + 0.1 * albedo(spec.texture_seed, p);
        return lambert(a, n);
      }
      return lambert(albedo(spec.texture_seed + 1, p), n);
    }
  }
  return Vec3::Zero();
}

Vec3 ray_direction(const Camera& cam, double u, double v) {
  // K^{-1} [u, v, 1] by back-substitution; camera-frame z is 1, so the ray
  // parameter equals camera depth.
  const Mat3& K = cam.intrinsics();
  const double y = (v - K(1, 2)) / K(1, 1);
  const double x = (u - K(0, 2) - K(0, 1) * y) / K(0, 0);
  return cam.rotation().transpose() * Vec3(x, y, 1.0);
}

std::optional<double> hit_sphere(const Vec3& o, const Vec3& d) {
  const double a = d.dot(d), b = o.dot(d), c = o.dot(o) - kSphereRadius * kSphereRadius;
  const double disc = b * b - a * c;
  if (disc < 0.0) return std::nullopt;
  const double s = std::sqrt(disc);
  const double t0 = (-b - s) / a, t1 = (-b + s) / a;
  if (t0 > 0.0) return t0;
  if (t1 > 0.0) return t1;
  return std::nullopt;
}

std::optional<std::pair<double, Vec3>> hit_box(const Vec3& o, const Vec3& d) {
  double t_in = -std::numeric_limits<double>::infinity(), t_out = std::numeric_limits<double>::infinity();
  int axis_in = 0;
  double sign_in = 1.0;
  for (int a = 0; a < 3; ++a) {
    if (d[a] == 0.0) {
      if (o[a] < kBoxMin[a] || o[a] > kBoxMax[a]) return std::nullopt;
      continue;
    }
    double t0 = (kBoxMin[a] - o[a]) / d[a], t1 = (kBoxMax[a] - o[a]) / d[a];
    double s = -1.0;
    if (t0 > t1) {
      std::swap(t0, t1);
      s = 1.0;
    }
    if (t0 > t_in) {
      t_in = t0;
      axis_in = a;
      sign_in = s;
    }
    t_out = std::min(t_out, t1);
  }
  if (t_in > t_out || !(t_in > 0.0)) return std::nullopt;
  Vec3 n = Vec3::Zero();
  n[axis_in] = sign_in;
  return std::pair{t_in, n};
}

}  // namespace

std::optional<SurfaceHit> trace(const SceneSpec& spec, const Camera& camera, double u, double v) {
  const Vec3 o = camera.center();
  const Vec3 d = ray_direction(camera, u, v);
  std::optional<SurfaceHit> best;
  auto consider = [&](double t, const Vec3& n) {
    if (best && t >= best->depth) return;
    best = SurfaceHit{t, o + t * d, n};
  };
  if (spec.kind == SceneKind::PlaneAndBox) {
    if (d.y() != 0.0) {
      const double t = (kPlaneY - o.y()) / d.y();
      const Vec3 p = o + t * d;
      if (t > 0.0 && std::abs(p.x()) <= kPlaneHalf && std::abs(p.z()) <= kPlaneHalf) consider(t, Vec3::UnitY());
    }
    if (auto h = hit_box(o, d)) consider(h->first, h->second);
  } else if (auto t = hit_sphere(o, d)) {
    const Vec3 p = o + *t * d;
    consider(*t, p.normalized());
  }
  if (spec.backdrop_radius > 0.0 && !best) {
    // Inside the dome: the far root is the only positive one.
    const double a = d.dot(d), b = o.dot(d), c = o.dot(o) - spec.backdrop_radius * spec.backdrop_radius;
    const double t = (-b + std::sqrt(b * b - a * c)) / a;
    const Vec3 p = o + t * d;
    consider(t, -p.normalized());
  }
  return best;
}

namespace {

Vec3 shade(const GroundTruth& truth, const SurfaceHit& hit, const Vec3& eye) {
  Vec3 c = diffuse_color(truth.spec, hit.point, hit.normal);
  if (truth.spec.kind == SceneKind::SpecularSphere) {
    const ShBasis b = sh_basis_unchecked((eye - hit.point).normalized());
    for (int ch = 0; ch < 3; ++ch)
      for (int k = 1; k < kShBasisSize; ++k) c[ch] += truth.lobe[ch * kShBasisSize + k] * b[k];
  }
  return c;
}

Camera ring_camera(const SceneSpec& spec, double azimuth, double elevation_deg) {
  const double e = elevation_deg * std::numbers::pi / 180.0;
  const Vec3 eye = spec.ring_radius * Vec3(std::cos(e) * std::sin(azimuth), std::sin(e), -std::cos(e) * std::cos(azimuth));
  const double focal = 0.5 * spec.width / std::tan(0.5 * spec.fov_deg * std::numbers::pi / 180.0);
  return Camera::look_at(eye, Vec3::Zero(), Vec3::UnitY(), focal, spec.width, spec.height);
}

void add_surface_point(GroundTruth& t, const Vec3& p, const Vec3& n) {
  t.surface.push_back(p);
  const Vec3 c = diffuse_color(t.spec, p, n);
  auto row = t.surface.feature_row(t.surface.size() - 1);
  for (int ch = 0; ch < 3; ++ch) {
    row[ch * kShBasisSize] = c[ch] / sh::kY00;
    for (int k = 1; k < kShBasisSize; ++k) row[ch * kShBasisSize + k] = t.lobe[ch * kShBasisSize + k];
  }
}

void sample_surface(GroundTruth& t, std::uint64_t seed) {
  const std::size_t n = t.spec.surface_samples;
  if (t.spec.kind != SceneKind::PlaneAndBox) {
    // Fibonacci lattice: near-uniform area density.
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (std::size_t i = 0; i < n; ++i) {
      const double y = 1.0 - 2.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(n);
      const double r = std::sqrt(std::max(0.0, 1.0 - y * y));
      const double phi = golden * static_cast<double>(i);
      const Vec3 p(r * std::cos(phi), y, r * std::sin(phi));
      add_surface_point(t, kSphereRadius * p, p);
    }
    return;
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Vec3 ext = kBoxMax - kBoxMin;
  const double plane_area = 4.0 * kPlaneHalf * kPlaneHalf;
  const double faces[3] = {ext.y() * ext.z(), ext.x() * ext.z(), ext.x() * ext.y()};
  const double total = plane_area + 2.0 * (faces[0] + faces[1] + faces[2]);
  for (std::size_t i = 0; i < n; ++i) {
    double pick = unit(rng) * total;
    const double a = unit(rng), b = unit(rng);
    if (pick < plane_area) {
      const Vec3 p(-kPlaneHalf + 2 * kPlaneHalf * a, kPlaneY, -kPlaneHalf + 2 * kPlaneHalf * b);
      if (p.x() > kBoxMin.x() && p.x() < kBoxMax.x() && p.z() > kBoxMin.z() && p.z() < kBoxMax.z()) continue;
      add_surface_point(t, p, Vec3::UnitY());
      continue;
    }
    pick -= plane_area;
    for (int axis = 0; axis < 3; ++axis) {
      if (pick >= 2.0 * faces[axis]) {
        pick -= 2.0 * faces[axis];
        continue;
      }
      const bool high = pick >= faces[axis];
      const int u_axis = (axis + 1) % 3, v_axis = (axis + 2) % 3;
      Vec3 p;
      p[axis] = high ? kBoxMax[axis] : kBoxMin[axis];
      p[u_axis] = kBoxMin[u_axis] + a * ext[u_axis];
      p[v_axis] = kBoxMin[v_axis] + b * ext[v_axis];
      Vec3 nrm = Vec3::Zero();
      nrm[axis] = high ? 1.0 : -1.0;
      if (!(axis == 1 && !high)) add_surface_point(t, p, nrm);  // bottom face rests on the plane
      break;
    }
  }
}

}  // namespace

Image render_oracle(const GroundTruth& truth, const Camera& camera) {
  Image img(camera.width(), camera.height(), 3);
  const Vec3 eye = camera.center();
#pragma omp parallel for schedule(static)
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      if (auto hit = trace(truth.spec, camera, x, y)) {
        const Vec3 c = shade(truth, *hit, eye);
        for (int ch = 0; ch < 3; ++ch) img.at(x, y, ch) = c[ch];
      }
  return img;
}

SynthScene generate(const SceneSpec& spec, std::uint64_t seed) {
  spec.validate();
  SynthScene scene;
  GroundTruth& t = scene.truth;
  t.spec = spec;
  if (spec.kind == SceneKind::SpecularSphere) {
    // Random degree-1/2 lobe, scaled so colors stay inside [0, 1].
    std::mt19937_64 rng(seed ^ 0x5eedull);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int ch = 0; ch < 3; ++ch) {
      double norm1 = 0.0;
      for (int k = 1; k < kShBasisSize; ++k) norm1 += std::abs(t.lobe[ch * kShBasisSize + k] = u(rng));
      // |b_k| <= 1.1 for every non-constant basis function.
      for (int k = 1; k < kShBasisSize; ++k) t.lobe[ch * kShBasisSize + k] *= 0.3 / (1.1 * norm1);
    }
  }
  t.surface = FeaturizedPointCloud::empty(27, spec.point_radius);
  sample_surface(t, seed);

  const double step = 2.0 * std::numbers::pi / spec.n_cameras;
  for (int i = 0; i < spec.n_cameras; ++i) t.train_cameras.push_back(ring_camera(spec, i * step, spec.elevation_deg));
  for (int i = 0; i < spec.n_heldout; ++i)
    t.heldout_cameras.push_back(
        ring_camera(spec, 2.0 * std::numbers::pi * (i + 0.5) / spec.n_heldout + 0.1, spec.heldout_elevation_deg));
  for (const auto& c : t.train_cameras) t.train_images.push_back(render_oracle(t, c));
  for (const auto& c : t.heldout_cameras) t.heldout_images.push_back(render_oracle(t, c));

  for (std::size_t i = 0; i < t.train_cameras.size(); ++i) {
    DepthMap m(t.train_cameras[i], static_cast<int>(i), spec.depth_scale);
#pragma omp parallel for schedule(static)
    for (int row = 0; row < m.height; ++row)
      for (int col = 0; col < m.width; ++col) {
        const auto hit = trace(spec, m.camera, m.pixel_u(col), m.pixel_v(row));
        if (hit) m.set(col, row, hit->depth);
        else m.invalidate(col, row);
      }
    if (spec.edge_mask_ratio > 0.0) mask_depth_edges(m, spec.edge_mask_ratio);
    t.depth_maps.push_back(std::move(m));
  }
  scene.initial = fuse_depth_maps(t.depth_maps, 27, spec.point_radius);
  return scene;
}

void mask_depth_edges(DepthMap& map, double ratio) {
  std::vector<std::size_t> drop;
  for (int row = 0; row < map.height; ++row)
    for (int col = 0; col < map.width; ++col) {
      if (!map.is_valid(col, row)) continue;
      const double d = map.value(col, row);
      bool edge = false;
      for (int dy = -1; dy <= 1 && !edge; ++dy)
        for (int dx = -1; dx <= 1 && !edge; ++dx) {
          const int c = col + dx, r = row + dy;
          if (c < 0 || r < 0 || c >= map.width || r >= map.height || !map.is_valid(c, r)) continue;
          edge = map.value(c, r) < ratio * d;
        }
      if (edge) drop.push_back(map.index(col, row));
    }
  for (std::size_t i : drop) {
    map.values[i] = 0.0;
    map.valid[i] = 0;
  }
}

std::vector<std::uint8_t> ball_mask(const SceneSpec& spec, const Camera& camera, const Vec3& center,
                                    double radius) {
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(camera.width()) * camera.height(), 0);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < camera.height(); ++y)
    for (int x = 0; x < camera.width(); ++x) {
      const auto hit = trace(spec, camera, x, y);
      if (hit && (hit->point - center).norm() <= radius) mask[static_cast<std::size_t>(y) * camera.width() + x] = 1;
    }
  return mask;
}

namespace {

std::vector<MapPixel> valid_pixels(std::span<const DepthMap> maps) {
  std::vector<MapPixel> out;
  for (std::size_t m = 0; m < maps.size(); ++m)
    for (int row = 0; row < maps[m].height; ++row)
      for (int col = 0; col < maps[m].width; ++col)
        if (maps[m].is_valid(col, row)) out.push_back({static_cast<int>(m), col, row});
  return out;
}

std::vector<MapPixel> pick_pixels(std::span<const DepthMap> maps, int n, std::uint64_t seed) {
  SNP_CHECK(n >= 0, ErrorCode::InvalidArgument, "floater count must be >= 0");
  const auto all = valid_pixels(maps);
  std::vector<MapPixel> picked;
  std::mt19937_64 rng(seed);
  std::sample(all.begin(), all.end(), std::back_inserter(picked), static_cast<std::size_t>(n), rng);
  return picked;
}

}  // namespace

CorruptedMaps inject_floaters(std::span<const DepthMap> maps, int n, double depth_factor, std::uint64_t seed) {
  SNP_CHECK(depth_factor > 0.0, ErrorCode::InvalidArgument, "depth_factor must be positive");
  CorruptedMaps out{{maps.begin(), maps.end()}, pick_pixels(maps, n, seed)};
  for (const auto& p : out.changed) {
    DepthMap& m = out.maps[p.map];
    m.set(p.col, p.row, depth_factor * m.value(p.col, p.row));
  }
  return out;
}

CorruptedMaps carve_hole(std::span<const DepthMap> maps, const Vec3& center, double radius) {
  CorruptedMaps out{{maps.begin(), maps.end()}, {}};
  for (std::size_t mi = 0; mi < out.maps.size(); ++mi) {
    DepthMap& m = out.maps[mi];
    for (int row = 0; row < m.height; ++row)
      for (int col = 0; col < m.width; ++col) {
        if (!m.is_valid(col, row)) continue;
        const Vec3 p = unproject({m.pixel_u(col), m.pixel_v(row), m.value(col, row)}, m.camera);
        if ((p - center).norm() <= radius) {
          m.invalidate(col, row);
          out.changed.push_back({static_cast<int>(mi), col, row});
        }
      }
  }
  return out;
}

std::vector<std::uint8_t> fused_labels(std::span<const DepthMap> maps, std::span<const MapPixel> pixels) {
  std::vector<std::vector<std::uint8_t>> marks(maps.size());
  for (std::size_t m = 0; m < maps.size(); ++m) marks[m].assign(maps[m].values.size(), 0);
  for (const auto& p : pixels) marks[p.map][maps[p.map].index(p.col, p.row)] = 1;
  std::vector<std::uint8_t> out;
  for (std::size_t m = 0; m < maps.size(); ++m)
    for (std::size_t i = 0; i < marks[m].size(); ++i)
      if (maps[m].valid[i]) out.push_back(marks[m][i]);
  return out;
}

CorruptedCloud inject_floaters(const FeaturizedPointCloud& cloud, std::span<const DepthMap> maps, int n,
                               double depth_factor, std::uint64_t seed) {
  SNP_CHECK(depth_factor > 0.0, ErrorCode::InvalidArgument, "depth_factor must be positive");
  CorruptedCloud out{cloud, std::vector<std::uint8_t>(cloud.size(), 0), 0};
  for (const auto& p : pick_pixels(maps, n, seed)) {
    const DepthMap& m = maps[p.map];
    out.cloud.push_back(unproject({m.pixel_u(p.col), m.pixel_v(p.row), depth_factor * m.value(p.col, p.row)}, m.camera));
    out.injected.push_back(1);
  }
  return out;
}

CorruptedCloud carve_hole(const FeaturizedPointCloud& cloud, const Vec3& center, double radius) {
  CorruptedCloud out;
  out.cloud = erase(cloud, [&](std::size_t, const Vec3& p) { return (p - center).norm() > radius; });
  out.injected.assign(out.cloud.size(), 0);
  out.removed = cloud.size() - out.cloud.size();
  return out;
}

}  // namespace snp
