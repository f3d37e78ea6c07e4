#include "snp/error.hpp"
#include "snp/shading.hpp"
#include "snp/synth.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace snp;

namespace {

// Independent ray-sphere root (unit sphere at the origin, or the inside of a
// sphere of radius R for the backdrop). The ray is parameterized by camera depth.
std::optional<double> sphere_depth(const Camera& cam, double u, double v, double R, bool inside) {
  const Vec3 o = cam.center();
  const Vec3 d = unproject({u, v, 1.0}, cam) - o;
  const double a = d.squaredNorm(), b = 2 * o.dot(d), c = o.squaredNorm() - R * R;
  const double disc = b * b - 4 * a * c;
  if (disc < 0) return std::nullopt;
  const double t = inside ? (-b + std::sqrt(disc)) / (2 * a) : (-b - std::sqrt(disc)) / (2 * a);
  if (t <= 0) return std::nullopt;
  return t;
}

SceneSpec small(SceneKind kind, int cameras) {
  auto s = SceneSpec::preset(kind);
  s.width = s.height = 32;
  s.n_cameras = cameras;
  s.n_heldout = 2;
  return s;
}

}  // namespace

TEST_CASE("lambertian depth maps match the analytic ray-sphere distance") {
  const auto spec = small(SceneKind::LambertianSphere, 2);
  const auto truth = generate(spec, 0).truth;
  REQUIRE(truth.depth_maps.size() == 2);
  std::size_t sphere = 0, dome = 0;
  for (const auto& m : truth.depth_maps)
    for (int r = 0; r < m.height; ++r)
      for (int c = 0; c < m.width; ++c) {
        if (!m.is_valid(c, r)) continue;
        const auto s = sphere_depth(m.camera, m.pixel_u(c), m.pixel_v(r), 1.0, false);
        const auto expect = s ? s : sphere_depth(m.camera, m.pixel_u(c), m.pixel_v(r), spec.backdrop_radius, true);
        REQUIRE(expect.has_value());
        CHECK(std::abs(m.value(c, r) - *expect) < 1e-9);
        ++(s ? sphere : dome);
      }
  CHECK(sphere > 100);
  CHECK(dome > 100);
}

TEST_CASE("specular colors are the SH lobe at the view direction") {
  const auto spec = small(SceneKind::SpecularSphere, 3);
  const auto truth = generate(spec, 5).truth;
  const auto row = truth.surface.feature_row(0);
  const std::vector<double> f(row.begin(), row.end());
  std::size_t checked = 0;
  for (std::size_t i = 0; i < truth.train_cameras.size(); ++i) {
    const Camera& cam = truth.train_cameras[i];
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) {
        const auto t = sphere_depth(cam, x, y, 1.0, false);
        if (!t) continue;
        const Vec3 p = unproject({double(x), double(y), *t}, cam);
        const auto s = modulate(f, (cam.center() - p).normalized());
        for (int c = 0; c < 3; ++c) CHECK(std::abs(truth.train_images[i].at(x, y, c) - s[c]) < 1e-9);
        ++checked;
      }
  }
  CHECK(checked > 100);
  // Every surface point carries the same lobe and the constant diffuse term.
  for (std::size_t i = 1; i < truth.surface.size(); i += 997) {
    const auto other = truth.surface.feature_row(i);
    CHECK(std::equal(other.begin(), other.end(), f.begin()));
  }
}

TEST_CASE("generation is deterministic per seed") {
  const auto spec = small(SceneKind::PlaneAndBox, 3);
  const auto a = generate(spec, 7), b = generate(spec, 7);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(a.truth.train_images[i].data == b.truth.train_images[i].data);
    CHECK(a.truth.depth_maps[i].values == b.truth.depth_maps[i].values);
  }
  CHECK(a.truth.surface.positions == b.truth.surface.positions);
  CHECK(a.initial.positions == b.initial.positions);
  CHECK(a.truth.heldout_images[1].data == b.truth.heldout_images[1].data);
}

TEST_CASE("every scene kind renders inside [0, 1]") {
  for (auto kind : {SceneKind::LambertianSphere, SceneKind::SpecularSphere, SceneKind::PlaneAndBox}) {
    const auto truth = generate(small(kind, 2), 1).truth;
    for (const auto& img : truth.train_images)
      for (double v : img.data) CHECK((v >= 0.0 && v <= 1.0));
    CHECK(scene_kind_from_string(to_string(kind)) == kind);
  }
  CHECK_THROWS_AS(scene_kind_from_string("teapot"), Error);
}

TEST_CASE("floater injection") {
  const auto sc = generate(small(SceneKind::LambertianSphere, 4), 2);
  const auto& maps = sc.truth.depth_maps;
  const auto c = inject_floaters(sc.initial, maps, 100, 0.5, 9);
  CHECK(c.cloud.size() == sc.initial.size() + 100);
  CHECK(std::count(c.injected.begin(), c.injected.end(), 1) == 100);
  for (std::size_t i = sc.initial.size(); i < c.cloud.size(); ++i) {
    CHECK(c.injected[i] == 1);
    // Some view sees the point at half its stored depth.
    bool found = false;
    for (const auto& m : maps) {
      const double z = depth_in_view(c.cloud.positions[i], m.camera);
      if (z <= 0) continue;
      const auto p = project(c.cloud.positions[i], m.camera);
      const auto d = m.lookup(p.u, p.v);
      if (d && std::abs(z - 0.5 * *d) < 1e-9) found = true;
    }
    CHECK(found);
  }

  const auto moved = inject_floaters(maps, 50, 0.5, 9);
  CHECK(moved.changed.size() == 50);
  for (const auto& p : moved.changed)
    CHECK(moved.maps[p.map].value(p.col, p.row) == 0.5 * maps[p.map].value(p.col, p.row));
  const auto labels = fused_labels(moved.maps, moved.changed);
  CHECK(std::count(labels.begin(), labels.end(), 1) == 50);
}

TEST_CASE("hole carving") {
  const auto sc = generate(small(SceneKind::LambertianSphere, 4), 2);
  const auto none = carve_hole(sc.initial, Vec3(0, 50, 0), 0.5);
  CHECK(none.removed == 0);
  CHECK(none.cloud.positions == sc.initial.positions);
  const auto none_maps = carve_hole(sc.truth.depth_maps, Vec3(0, 50, 0), 0.5);
  CHECK(none_maps.changed.empty());

  // A ball of radius r centred on the unit sphere cuts a cap of area pi r^2.
  const Vec3 center(0.6, 0.0, -0.8);
  const double r = 0.4;
  const auto cap = carve_hole(sc.truth.surface, center, r);
  const double expect = sc.truth.surface.size() * (r * r / 4.0);
  CHECK(std::abs(static_cast<double>(cap.removed) - expect) < 0.02 * expect);
  std::size_t inside = 0;
  for (const auto& p : sc.truth.surface.positions) inside += (p - center).norm() <= r;
  CHECK(cap.removed == inside);

  const auto holed = carve_hole(sc.truth.depth_maps, center, r);
  CHECK(!holed.changed.empty());
  for (const auto& p : holed.changed) CHECK_FALSE(holed.maps[p.map].is_valid(p.col, p.row));
}

TEST_CASE("edge masking drops only the far side of a depth step") {
  Mat3 K;
  K << 4, 0, 2, 0, 4, 2, 0, 0, 1;
  DepthMap m(Camera(K, Mat3::Identity(), Vec3::Zero(), 6, 1), 0, 1);
  for (int c = 0; c < 6; ++c) m.set(c, 0, c < 3 ? 2.0 : 5.0);
  mask_depth_edges(m, 0.9);
  for (int c = 0; c < 6; ++c) CHECK(m.is_valid(c, 0) == (c != 3));
}
