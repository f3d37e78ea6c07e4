#include "snp/geometry.hpp"

#include "snp/error.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>

namespace snp {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::BehindCamera: return "BehindCamera";
    case ErrorCode::SingularIntrinsics: return "SingularIntrinsics";
    case ErrorCode::InvalidCamera: return "InvalidCamera";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::DimError: return "DimError";
    case ErrorCode::NotUnit: return "NotUnit";
    case ErrorCode::InvalidBounds: return "InvalidBounds";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::StaleGraph: return "StaleGraph";
    case ErrorCode::OutOfImage: return "OutOfImage";
    case ErrorCode::TooSmall: return "TooSmall";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::UnsupportedProperty: return "UnsupportedProperty";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "IoError";
  }
  return "Unknown";
}

Camera::Camera(const Mat3& intrinsics, const Mat3& rotation, const Vec3& translation, int width,
               int height)
    : K_(intrinsics), R_(rotation), t_(translation), width_(width), height_(height) {
  SNP_CHECK(width > 0 && height > 0, ErrorCode::InvalidCamera, "image size must be positive");
  SNP_CHECK(R_.allFinite() && K_.allFinite() && t_.allFinite(), ErrorCode::InvalidCamera,
            "camera parameters must be finite");
  const double ortho_err = (R_ * R_.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff();
  SNP_CHECK(ortho_err <= 1e-9 && std::abs(R_.determinant() - 1.0) <= 1e-9,
            ErrorCode::InvalidCamera, "rotation must be orthonormal with determinant +1");
  SNP_CHECK(K_(0, 0) > 0.0 && K_(1, 1) > 0.0, ErrorCode::InvalidCamera,
            "focal lengths must be positive");
  SNP_CHECK(K_(1, 0) == 0.0 && K_(2, 0) == 0.0 && K_(2, 1) == 0.0, ErrorCode::InvalidCamera,
            "intrinsics must be upper triangular");
  SNP_CHECK(K_(2, 2) == 1.0, ErrorCode::InvalidCamera, "intrinsics K[2][2] must be 1");
}

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal,
                       int width, int height) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 right = forward.cross(up);
  if (right.norm() < 1e-12) right = forward.cross(Vec3::UnitX());
  right.normalize();
  const Vec3 down = forward.cross(right);
  Mat3 R;
  R.row(0) = right.transpose();
  R.row(1) = down.transpose();
  R.row(2) = forward.transpose();
  // Re-orthonormalize so the 1e-9 check holds after floating point products.
  Eigen::JacobiSVD<Mat3> svd(R, Eigen::ComputeFullU | Eigen::ComputeFullV);
  R = svd.matrixU() * svd.matrixV().transpose();
  Mat3 K = Mat3::Identity();
  K(0, 0) = focal;
  K(1, 1) = focal;
  K(0, 2) = 0.5 * (width - 1);
  K(1, 2) = 0.5 * (height - 1);
  return Camera(K, R, -R * eye, width, height);
}

PixelDepth project(const Vec3& point, const Camera& camera) {
  const Vec3 pc = camera.to_camera(point);
  if (!(pc.z() > 0.0)) throw Error(ErrorCode::BehindCamera, "point has non-positive depth");
  const Vec3 h = camera.intrinsics() * pc;
  return {h.x() / h.z(), h.y() / h.z(), pc.z()};
}

Vec3 unproject(const PixelDepth& pixel, const Camera& camera) {
  const Mat3& K = camera.intrinsics();
  const double det = K.determinant();
  if (!std::isfinite(det) || std::abs(det) < 1e-300)
    throw Error(ErrorCode::SingularIntrinsics, "intrinsics matrix is not invertible");
  // K is upper triangular with K22 = 1; back-substitute instead of a general inverse.
  const double y = (pixel.v - K(1, 2)) / K(1, 1);
  const double x = (pixel.u - K(0, 2) - K(0, 1) * y) / K(0, 0);
  const Vec3 pc(x * pixel.depth, y * pixel.depth, pixel.depth);
  return camera.rotation().transpose() * (pc - camera.translation());
}

double depth_in_view(const Vec3& point, const Camera& camera) {
  return camera.rotation().row(2).dot(point) + camera.translation().z();
}

nlohmann::json camera_to_json(const Camera& camera) {
  nlohmann::json j;
  std::vector<double> K(9), R(9);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      K[r * 3 + c] = camera.intrinsics()(r, c);
      R[r * 3 + c] = camera.rotation()(r, c);
    }
  j["K"] = K;
  j["R"] = R;
  j["t"] = {camera.translation().x(), camera.translation().y(), camera.translation().z()};
  j["width"] = camera.width();
  j["height"] = camera.height();
  return j;
}

Camera camera_from_json(const nlohmann::json& j) {
  try {
    const auto K = j.at("K").get<std::vector<double>>();
    const auto R = j.at("R").get<std::vector<double>>();
    const auto t = j.at("t").get<std::vector<double>>();
    SNP_CHECK(K.size() == 9 && R.size() == 9 && t.size() == 3, ErrorCode::InvalidCamera,
              "camera needs 9 K, 9 R and 3 t entries");
    Mat3 Km, Rm;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) {
        Km(r, c) = K[r * 3 + c];
        Rm(r, c) = R[r * 3 + c];
      }
    return Camera(Km, Rm, Vec3(t[0], t[1], t[2]), j.at("width").get<int>(),
                  j.at("height").get<int>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidCamera, std::string("malformed camera JSON: ") + e.what());
  }
}

std::vector<Camera> read_cameras(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open camera file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidCamera, path.string() + ": " + e.what());
  }
  SNP_CHECK(j.is_array(), ErrorCode::InvalidCamera, path.string() + ": expected a JSON array");
  std::vector<Camera> cameras;
  cameras.reserve(j.size());
  for (const auto& item : j) cameras.push_back(camera_from_json(item));
  return cameras;
}

void write_cameras(const std::filesystem::path& path, const std::vector<Camera>& cameras) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& c : cameras) j.push_back(camera_to_json(c));
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write camera file " + path.string());
  out << j.dump(1) << '\n';
}

}  // namespace snp
