#pragma once

#include <Eigen/Dense>

#include <complex>
#include <limits>

namespace fedst {

using Index = Eigen::Index;

/// Dense row-major matrix of the project's scalar type. Row-major storage is
/// part of the wire contract: payloads serialize in row order.
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = Mat<double>;
using Vector = Vec<double>;
using Complex = std::complex<double>;
using ComplexVector = Vec<Complex>;

/// Sentinel marking an excluded pair in an attention mask. Never produced by
/// mask arithmetic; rows containing only sentinels are rejected by softmax.
inline constexpr double kMasked = -std::numeric_limits<double>::infinity();

inline bool isMasked(double v) { return v == kMasked; }

}  // namespace fedst
