#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <limits>

namespace idg {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// Strictly sequential dot product (left to right). All cost identities in
/// this library are stated with a defined summation order so that stacked
/// and per-player evaluations agree bit for bit.
inline double sequential_dot(const Vector& a, const Vector& b) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

/// splitmix64, used to derive independent per-cell RNG streams from a master
/// seed and cell coordinates.
inline std::uint64_t split_seed(std::uint64_t seed) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::uint64_t combine_seed(std::uint64_t a, std::uint64_t b) {
  return split_seed(a ^ (0x9e3779b97f4a7c15ull + b + (a << 6) + (a >> 2)));
}

}  // namespace idg
