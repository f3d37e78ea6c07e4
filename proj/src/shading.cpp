#include "snp/shading.hpp"

#include "snp/error.hpp"

#include <cmath>
#include <vector>

namespace snp {

ShBasis sh_basis_unchecked(const Vec3& v) {
  const double x = v.x(), y = v.y(), z = v.z();
  return {sh::kY00,
          sh::kY1 * y,
          sh::kY1 * z,
          sh::kY1 * x,
          sh::kY2a * x * y,
          sh::kY2a * y * z,
          sh::kY20 * (2.0 * z * z - x * x - y * y),
          sh::kY2a * x * z,
          sh::kY22 * (x * x - y * y)};
}

ShBasis sh_basis(const Vec3& v) {
  const double n = v.norm();
  if (!(std::abs(n - 1.0) <= 1e-6))
    throw Error(ErrorCode::NotUnit, "view direction norm " + std::to_string(n) + " is not 1");
  return sh_basis_unchecked(v);
}

std::array<Vec3, kShBasisSize> sh_basis_jacobian(const Vec3& v) {
  const double x = v.x(), y = v.y(), z = v.z();
  return {Vec3::Zero(),
          Vec3(0.0, sh::kY1, 0.0),
          Vec3(0.0, 0.0, sh::kY1),
          Vec3(sh::kY1, 0.0, 0.0),
          sh::kY2a * Vec3(y, x, 0.0),
          sh::kY2a * Vec3(0.0, z, y),
          sh::kY20 * Vec3(-2.0 * x, -2.0 * y, 4.0 * z),
          sh::kY2a * Vec3(z, 0.0, x),
          sh::kY22 * Vec3(2.0 * x, -2.0 * y, 0.0)};
}

void modulate(std::span<const double> f, const ShBasis& b, std::span<double> out) {
  SNP_CHECK(f.size() % kShBasisSize == 0, ErrorCode::DimError,
            "feature length " + std::to_string(f.size()) + " is not a multiple of 9");
  SNP_CHECK(out.size() == f.size() / kShBasisSize, ErrorCode::DimError, "output has wrong length");
  for (std::size_t c = 0; c < out.size(); ++c) {
    const double* row = f.data() + c * kShBasisSize;
    double s = 0.0;
    for (int k = 0; k < kShBasisSize; ++k) s += row[k] * b[k];
    out[c] = s;
  }
}

std::vector<double> modulate(std::span<const double> f, const Vec3& v) {
  SNP_CHECK(f.size() % kShBasisSize == 0, ErrorCode::DimError,
            "feature length " + std::to_string(f.size()) + " is not a multiple of 9");
  std::vector<double> out(f.size() / kShBasisSize);
  modulate(f, sh_basis(v), out);
  return out;
}

}  // namespace snp
