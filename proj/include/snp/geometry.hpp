#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <nlohmann/json_fwd.hpp>

#include <filesystem>
#include <vector>

namespace snp {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Continuous pixel coordinates (u = column, v = row; origin at the center of
// the top-left pixel) plus camera-frame depth.
struct PixelDepth {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;
};

// Pinhole camera. rotation/translation map world -> camera: Pc = R * P + t.
class Camera {
 public:
  Camera() = default;
  // Validates: R orthonormal with det +1 (1e-9), K upper triangular with
  // positive focal entries and last row (0, 0, 1), positive image size.
  Camera(const Mat3& intrinsics, const Mat3& rotation, const Vec3& translation, int width,
         int height);

  // World -> camera rotation built from a position and a look-at target.
  // Camera axes: x right, y down, z forward.
  static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal,
                        int width, int height);

  const Mat3& intrinsics() const { return K_; }
  const Mat3& rotation() const { return R_; }
  const Vec3& translation() const { return t_; }
  int width() const { return width_; }
  int height() const { return height_; }

  // Camera center in world coordinates (-R^T t).
  Vec3 center() const { return -R_.transpose() * t_; }
  Vec3 to_camera(const Vec3& world) const { return R_ * world + t_; }

 private:
  Mat3 K_ = Mat3::Identity();
  Mat3 R_ = Mat3::Identity();
  Vec3 t_ = Vec3::Zero();
  int width_ = 1;
  int height_ = 1;
};

// Perspective projection. Throws BehindCamera when camera-frame z <= 0.
PixelDepth project(const Vec3& point, const Camera& camera);

// Inverse projection of a pixel at a given camera-frame depth.
// Throws SingularIntrinsics if K cannot be inverted.
Vec3 unproject(const PixelDepth& pixel, const Camera& camera);

// z component of R * P + t; may be negative.
double depth_in_view(const Vec3& point, const Camera& camera);

// Camera JSON: {"K": [9], "R": [9], "t": [3], "width": W, "height": H}.
nlohmann::json camera_to_json(const Camera& camera);
Camera camera_from_json(const nlohmann::json& j);
std::vector<Camera> read_cameras(const std::filesystem::path& path);
void write_cameras(const std::filesystem::path& path, const std::vector<Camera>& cameras);

}  // namespace snp
