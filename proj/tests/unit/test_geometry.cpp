#include "snp/error.hpp"
#include "snp/geometry.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <random>

using namespace snp;

namespace {

Camera simple_camera() {
  Mat3 K;
  K << 100, 0, 32, 0, 100, 32, 0, 0, 1;
  return Camera(K, Mat3::Identity(), Vec3::Zero(), 64, 64);
}

Camera random_camera(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const Mat3 R = Eigen::Quaterniond(u(rng), u(rng), u(rng), u(rng)).normalized().toRotationMatrix();
  Mat3 K;
  K << 300 + 100 * u(rng), 0.5 * u(rng), 64 + 5 * u(rng), 0, 280 + 100 * u(rng), 48 + 5 * u(rng), 0, 0, 1;
  return Camera(K, R, Vec3(u(rng), u(rng), u(rng)), 128, 96);
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

TEST_CASE("projection of the principal ray and an offset point") {
  const Camera cam = simple_camera();
  const auto a = project(Vec3(0, 0, 2), cam);
  CHECK(a.u == 32.0);
  CHECK(a.v == 32.0);
  CHECK(a.depth == 2.0);
  // u = (100 * 1 + 32 * 2) / 2
  const auto b = project(Vec3(1, 0, 2), cam);
  CHECK(b.u == doctest::Approx(82.0).epsilon(1e-15));
  CHECK(b.v == doctest::Approx(32.0).epsilon(1e-15));
  CHECK(b.depth == 2.0);
}

TEST_CASE("points behind or on the camera plane are rejected") {
  const Camera cam = simple_camera();
  check_throws<ErrorCode::BehindCamera>([&] { project(Vec3(0, 0, -1), cam); });
  check_throws<ErrorCode::BehindCamera>([&] { project(Vec3(1, 1, 0), cam); });
}

TEST_CASE("unprojection inverts the worked examples") {
  const Camera cam = simple_camera();
  CHECK((unproject({32, 32, 2}, cam) - Vec3(0, 0, 2)).norm() < 1e-15);
  CHECK((unproject({82, 32, 2}, cam) - Vec3(1, 0, 2)).norm() < 1e-12);
}

TEST_CASE("depth in view") {
  CHECK(depth_in_view(Vec3(5, -2, 7), simple_camera()) == 7.0);
  Mat3 K = simple_camera().intrinsics();
  CHECK(depth_in_view(Vec3(0, 0, 4), Camera(K, Mat3::Identity(), Vec3(0, 0, 3), 64, 64)) == 7.0);
  // 90 degrees about x: (0, 1, 0) -> (0, 0, 1).
  const Mat3 Rx = Eigen::AngleAxisd(M_PI / 2, Vec3::UnitX()).toRotationMatrix();
  CHECK(depth_in_view(Vec3(0, 1, 0), Camera(K, Rx, Vec3::Zero(), 64, 64)) == doctest::Approx(1.0));
  CHECK(depth_in_view(Vec3(0, 0, -3), simple_camera()) == -3.0);
}

TEST_CASE("round trips are identities under random cameras") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int c = 0; c < 20; ++c) {
    const Camera cam = random_camera(rng);
    for (int i = 0; i < 500; ++i) {
      const PixelDepth px{u01(rng) * 128, u01(rng) * 96, 0.1 + 99.9 * u01(rng)};
      const Vec3 p = unproject(px, cam);
      const auto back = project(p, cam);
      CHECK(std::abs(back.u - px.u) < 1e-9);
      CHECK(std::abs(back.v - px.v) < 1e-9);
      CHECK(std::abs(back.depth - px.depth) < 1e-9);
      CHECK(std::abs(depth_in_view(p, cam) - px.depth) < 1e-9);
    }
  }
}

TEST_CASE("scaling the camera-frame point keeps the pixel and scales depth") {
  std::mt19937_64 rng(3);
  const Camera cam = random_camera(rng);
  const Vec3 p = unproject({40.5, 30.25, 3.0}, cam);
  const Vec3 pc = cam.to_camera(p);
  for (double lambda : {0.5, 2.0, 17.0}) {
    const Vec3 q = cam.rotation().transpose() * (lambda * pc - cam.translation());
    const auto a = project(q, cam);
    CHECK(a.u == doctest::Approx(40.5).epsilon(1e-12));
    CHECK(a.v == doctest::Approx(30.25).epsilon(1e-12));
    CHECK(a.depth == doctest::Approx(3.0 * lambda).epsilon(1e-12));
  }
}

TEST_CASE("camera validation") {
  const Mat3 K = simple_camera().intrinsics();
  Mat3 skewed = Mat3::Identity();
  skewed(0, 1) = 1e-3;
  check_throws<ErrorCode::InvalidCamera>([&] { Camera(K, skewed, Vec3::Zero(), 64, 64); });
  check_throws<ErrorCode::InvalidCamera>([&] { Camera(K, -Mat3::Identity(), Vec3::Zero(), 64, 64); });
  Mat3 bad_k = K;
  bad_k(1, 0) = 2.0;
  check_throws<ErrorCode::InvalidCamera>([&] { Camera(bad_k, Mat3::Identity(), Vec3::Zero(), 64, 64); });
  check_throws<ErrorCode::InvalidCamera>([&] { Camera(K, Mat3::Identity(), Vec3::Zero(), 0, 64); });
}

TEST_CASE("look_at puts the target on the principal ray") {
  const Camera cam = Camera::look_at(Vec3(1, 2, -5), Vec3(0.5, 0, 0), Vec3::UnitY(), 80, 64, 48);
  const auto px = project(Vec3(0.5, 0, 0), cam);
  CHECK(px.u == doctest::Approx(31.5));
  CHECK(px.v == doctest::Approx(23.5));
  CHECK((cam.center() - Vec3(1, 2, -5)).norm() < 1e-12);
  // Image rows grow downwards: a point above the target projects to a smaller v.
  CHECK(project(Vec3(0.5, 0.5, 0), cam).v < px.v);
}

TEST_CASE("camera JSON round trip") {
  std::mt19937_64 rng(5);
  std::vector<Camera> cams{random_camera(rng), random_camera(rng)};
  const auto path = std::filesystem::temp_directory_path() / "snp_test_cameras.json";
  write_cameras(path, cams);
  const auto back = read_cameras(path);
  REQUIRE(back.size() == 2);
  for (int i = 0; i < 2; ++i) {
    CHECK((back[i].intrinsics() - cams[i].intrinsics()).norm() == 0.0);
    CHECK((back[i].rotation() - cams[i].rotation()).norm() == 0.0);
    CHECK((back[i].translation() - cams[i].translation()).norm() == 0.0);
    CHECK(back[i].width() == 128);
  }
  const auto j = camera_to_json(cams[0]);
  CHECK(j.at("K").size() == 9);
  CHECK(j.at("R").size() == 9);
  CHECK(j.at("t").size() == 3);
  std::filesystem::remove(path);
  check_throws<ErrorCode::Io>([] { read_cameras("/nonexistent/cameras.json"); });
}
