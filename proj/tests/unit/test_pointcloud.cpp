#include "snp/error.hpp"
#include "snp/image.hpp"
#include "snp/io.hpp"
#include "snp/pointcloud.hpp"
#include "support/scenes.hpp"

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>
#include <string>

using namespace snp;
namespace fs = std::filesystem;

namespace {

Camera unit_camera(int w, int h) {
  Mat3 K;
  K << 1, 0, 0, 0, 1, 0, 0, 0, 1;
  return Camera(K, Mat3::Identity(), Vec3::Zero(), w, h);
}

FeaturizedPointCloud random_cloud(std::size_t n, int K, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  auto c = FeaturizedPointCloud::empty(K, 0.03);
  for (std::size_t i = 0; i < n; ++i) c.push_back(Vec3(g(rng), g(rng), g(rng)), g(rng));
  for (double& f : c.features) f = g(rng);
  return c;
}

// Cloud with every field already representable in float32.
FeaturizedPointCloud float_cloud(std::size_t n, int K, std::uint64_t seed) {
  auto c = random_cloud(n, K, seed);
  for (auto& p : c.positions)
    for (int k = 0; k < 3; ++k) p[k] = static_cast<float>(p[k]);
  for (double& f : c.features) f = static_cast<float>(f);
  for (double& o : c.opacity_logits) o = static_cast<float>(o);
  return c;
}

bool same_cloud(const FeaturizedPointCloud& a, const FeaturizedPointCloud& b) {
  if (a.size() != b.size() || a.feature_dim != b.feature_dim || a.radius != b.radius) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a.positions[i] != b.positions[i]) return false;
  return a.features == b.features && a.opacity_logits == b.opacity_logits;
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

fs::path temp(const std::string& name) { return fs::temp_directory_path() / ("snp_test_" + name); }

}  // namespace

TEST_CASE("fusing a 2x2 map unprojects every pixel") {
  const Camera cam = unit_camera(2, 2);
  DepthMap m(cam, 0, 1);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) m.set(c, r, 1.0);
  const auto cloud = fuse_depth_maps(std::span(&m, 1), 27, 0.01);
  REQUIRE(cloud.size() == 4);
  std::size_t i = 0;
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c, ++i) {
      CHECK((cloud.positions[i] - unproject({double(c), double(r), 1.0}, cam)).norm() == 0.0);
      for (double f : cloud.feature_row(i)) CHECK(f == 0.0);
      CHECK(cloud.opacity_logits[i] == kInitialOpacityLogit);
    }
  const std::vector<DepthMap> twice{m, m};
  CHECK(fuse_depth_maps(twice, 27, 0.01).size() == 8);
}

TEST_CASE("fusion counts valid pixels and rejects empty input") {
  const Camera cam = unit_camera(4, 3);
  DepthMap a(cam, 0, 1), b(cam, 1, 1);
  a.set(1, 1, 2.0);
  a.set(3, 2, 5.0);
  b.set(0, 0, 1.5);
  const std::vector<DepthMap> maps{a, b};
  CHECK(fuse_depth_maps(maps, 9, 0.01).size() == a.valid_count() + b.valid_count());
  DepthMap empty(cam, 0, 1);
  check_throws<ErrorCode::EmptyInput>([&] { fuse_depth_maps(std::span(&empty, 1), 27, 0.01); });
}

TEST_CASE("strided maps place points at scaled pixel centers") {
  const Camera cam = Camera::look_at(Vec3(0, 0, -3), Vec3::Zero(), Vec3::UnitY(), 40, 16, 12);
  DepthMap m(cam, 0, 4);
  CHECK(m.width == 4);
  CHECK(m.height == 3);
  m.set(2, 1, 3.0);
  const auto cloud = fuse_depth_maps(std::span(&m, 1), 27, 0.01);
  REQUIRE(cloud.size() == 1);
  CHECK((cloud.positions[0] - unproject({4 * 2 + 1.5, 4 * 1 + 1.5, 3.0}, cam)).norm() < 1e-12);
}

TEST_CASE("merge concatenates and checks feature dims") {
  const auto a = random_cloud(3, 27, 1), b = random_cloud(5, 27, 2);
  const auto m = merge(a, b);
  CHECK(m.size() == 8);
  for (std::size_t i = 0; i < 3; ++i) CHECK(m.positions[i] == a.positions[i]);
  CHECK(m.radius == a.radius);
  CHECK(same_cloud(merge(a, FeaturizedPointCloud::empty(27, 0.5)), a));
  check_throws<ErrorCode::DimMismatch>([&] { merge(a, random_cloud(2, 36, 3)); });
  // Associative.
  const auto c = random_cloud(4, 27, 4);
  CHECK(same_cloud(merge(merge(a, b), c), merge(a, merge(b, c))));
}

TEST_CASE("transform_subset moves only the selected rows") {
  const auto cloud = random_cloud(10, 27, 5);
  CHECK(same_cloud(transform_subset(cloud, [](std::size_t, const Vec3&) { return true; }, {}), cloud));

  RigidTransform shift;
  shift.translation = Vec3(1, 0, 0);
  const auto moved = transform_subset(cloud, [](std::size_t, const Vec3&) { return true; }, shift);
  for (std::size_t i = 0; i < 10; ++i) CHECK(moved.positions[i] == cloud.positions[i] + Vec3(1, 0, 0));

  RigidTransform rot;
  rot.rotation = Eigen::AngleAxisd(M_PI / 2, Vec3::UnitZ()).toRotationMatrix();
  const auto half = transform_subset(cloud, [](std::size_t i, const Vec3&) { return i % 2 == 0; }, rot);
  for (std::size_t i = 0; i < 10; ++i) {
    const Vec3 expect = i % 2 == 0 ? Vec3(rot.rotation * cloud.positions[i]) : cloud.positions[i];
    CHECK((half.positions[i] - expect).norm() == 0.0);
  }
  CHECK(half.features == cloud.features);
  CHECK(half.opacity_logits == cloud.opacity_logits);
}

TEST_CASE("erase keeps predicate rows in order") {
  auto cloud = FeaturizedPointCloud::empty(9, 0.1);
  for (double z : {1.0, -1.0, 2.0, -0.5, 3.0}) cloud.push_back(Vec3(0, 0, z));
  CHECK(same_cloud(erase(cloud, [](std::size_t, const Vec3&) { return true; }), cloud));
  const auto above = erase(cloud, [](std::size_t, const Vec3& p) { return p.z() >= 0; });
  REQUIRE(above.size() == 3);
  CHECK(above.positions[0].z() == 1.0);
  CHECK(above.positions[1].z() == 2.0);
  CHECK(above.positions[2].z() == 3.0);
  CHECK(erase(cloud, [](std::size_t, const Vec3&) { return false; }).size() == 0);
}

TEST_CASE("erase after merge with disjoint selectors commutes") {
  const auto a = random_cloud(20, 27, 6), b = random_cloud(30, 27, 7);
  const auto pos_x = [](std::size_t, const Vec3& p) { return p.x() > 0; };
  CHECK(same_cloud(erase(merge(a, b), pos_x), merge(erase(a, pos_x), erase(b, pos_x))));
}

TEST_CASE("downsample") {
  const auto small = random_cloud(10, 27, 8);
  CHECK(same_cloud(downsample(small, 20, 1), small));
  const auto big = random_cloud(1000, 27, 9);
  const auto d1 = downsample(big, 100, 42), d2 = downsample(big, 100, 42);
  CHECK(d1.size() == 100);
  CHECK(same_cloud(d1, d2));
  std::size_t j = 0;
  for (std::size_t i = 0; i < big.size() && j < d1.size(); ++i)
    if (big.positions[i] == d1.positions[j]) ++j;
  CHECK(j == d1.size());  // an ordered subset of the originals
  check_throws<ErrorCode::InvalidArgument>([&] { downsample(big, 0, 1); });
}

TEST_CASE("cloud validation") {
  auto c = random_cloud(3, 27, 10);
  c.features.pop_back();
  CHECK_THROWS_AS(c.validate(), Error);
  auto d = random_cloud(3, 27, 11);
  d.positions[1].x() = std::nan("");
  CHECK_THROWS_AS(d.validate(), Error);
  auto e = random_cloud(3, 27, 12);
  e.feature_dim = 26;
  CHECK_THROWS_AS(e.validate(), Error);
}

TEST_CASE("PLY round trip is bit exact at float precision") {
  const auto cloud = float_cloud(100, 27, 13);
  const auto path = temp("round.ply");
  write_ply(path, cloud);
  CHECK(same_cloud(read_ply(path), cloud));
  const auto big_k = float_cloud(7, 36, 14);
  CHECK(same_cloud(decode_ply(encode_ply(big_k)), big_k));
  fs::remove(path);
}

TEST_CASE("truncated PLY reports a byte offset") {
  auto bytes = encode_ply(float_cloud(10, 27, 15));
  bytes.resize(bytes.size() - 7);
  try {
    decode_ply(bytes);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.code() == ErrorCode::ParseError);
    CHECK(e.byte_offset() == bytes.size());
  }
  const std::string junk = "ply\nformat binary_little_endian 1.0\nelement vertex 1\n";
  CHECK_THROWS_AS(decode_ply(std::vector<char>(junk.begin(), junk.end())), ParseError);
}

TEST_CASE("xyz-only PLY from another tool") {
  std::string text =
      "ply\nformat ascii 1.0\ncomment written by hand\nelement vertex 2\n"
      "property float x\nproperty float y\nproperty float z\nproperty uchar red\nend_header\n"
      "1 2 3 255\n-1 0.5 4 0\n";
  const auto c = decode_ply(std::vector<char>(text.begin(), text.end()));
  REQUIRE(c.size() == 2);
  CHECK(c.feature_dim == 27);
  CHECK(c.positions[1] == Vec3(-1, 0.5, 4));
  for (double f : c.features) CHECK(f == 0.0);
  CHECK(c.opacity_logits[0] == kInitialOpacityLogit);

  std::string bin = "ply\nformat binary_little_endian 1.0\nelement vertex 1\nproperty float x\nproperty float y\n"
                    "property float z\nend_header\n";
  const float xyz[3] = {0.25f, -2.0f, 8.0f};
  bin.append(reinterpret_cast<const char*>(xyz), sizeof xyz);
  const auto b = decode_ply(std::vector<char>(bin.begin(), bin.end()));
  CHECK(b.positions[0] == Vec3(0.25, -2.0, 8.0));
}

TEST_CASE("unknown PLY elements are unsupported") {
  const std::string text =
      "ply\nformat ascii 1.0\nelement vertex 0\nproperty float x\nproperty float y\nproperty float z\n"
      "element face 0\nproperty list uchar int vertex_indices\nend_header\n";
  check_throws<ErrorCode::UnsupportedProperty>([&] { decode_ply(std::vector<char>(text.begin(), text.end())); });
}

TEST_CASE("depth map PFM round trip with sidecar") {
  const Camera cam = Camera::look_at(Vec3(0, 0, -3), Vec3::Zero(), Vec3::UnitY(), 40, 8, 6);
  DepthMap m(cam, 1, 2);
  m.set(0, 0, 2.5);
  m.set(3, 2, 3.25);
  const auto dir = temp("depth");
  fs::create_directories(dir);
  write_depth_map(dir / "d.pfm", m);
  CHECK(fs::exists(dir / "d.json"));
  const std::vector<Camera> cams{cam, cam};
  const auto back = read_depth_map(dir / "d.pfm", cams);
  CHECK(back.scale == 2);
  CHECK(back.camera_index == 1);
  CHECK(back.values == m.values);
  CHECK(back.valid == m.valid);
  CHECK(read_depth_dir(dir, cams).size() == 1);
  fs::remove_all(dir);
}

TEST_CASE("image files") {
  Image img(5, 4, 3);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<float>(i / 60.0);
  const auto pfm = temp("img.pfm"), png = temp("img.png");
  write_pfm(pfm, img);
  CHECK(read_pfm(pfm).data == img.data);
  write_png(png, img);
  const auto q = read_png(png);
  REQUIRE(q.same_shape(img));
  for (std::size_t i = 0; i < img.data.size(); ++i) CHECK(std::abs(q.data[i] - img.data[i]) <= 0.5 / 255 + 1e-12);
  CHECK(read_image(pfm).data == img.data);
  fs::remove(pfm);
  fs::remove(png);
}
