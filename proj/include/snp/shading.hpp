#pragma once

#include "snp/geometry.hpp"

#include <array>
#include <span>

namespace snp {

inline constexpr int kShBasisSize = 9;

// Real spherical harmonics up to degree 2, ordered
// (0,0), (1,-1), (1,0), (1,1), (2,-2), (2,-1), (2,0), (2,1), (2,2).
using ShBasis = std::array<double, kShBasisSize>;

namespace sh {
inline constexpr double kY00 = 0.28209479177387814;  // 1 / (2 sqrt(pi))
inline constexpr double kY1 = 0.48860251190291992;   // sqrt(3 / (4 pi))
inline constexpr double kY2a = 1.0925484305920792;   // sqrt(15 / (4 pi))
inline constexpr double kY20 = 0.31539156525252005;  // sqrt(5 / (16 pi))
inline constexpr double kY22 = 0.54627421529603959;  // sqrt(15 / (16 pi))
}  // namespace sh

// Throws NotUnit when | |v| - 1 | > 1e-6.
ShBasis sh_basis(const Vec3& v);

// Same polynomials without the unit check, for hot loops that normalize
// themselves.
ShBasis sh_basis_unchecked(const Vec3& v);

// d b_k / d v_j of the polynomial forms, row k.
std::array<Vec3, kShBasisSize> sh_basis_jacobian(const Vec3& v);

// s[c] = sum_k f[9c + k] * b[k]. Throws DimError when f.size() % 9 != 0 or
// out.size() != f.size() / 9.
void modulate(std::span<const double> f, const ShBasis& b, std::span<double> out);
std::vector<double> modulate(std::span<const double> f, const Vec3& v);

}  // namespace snp
