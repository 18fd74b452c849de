#pragma once

#include "gvimp/gaussian.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace gvimp::testing {

/// Small seeded generator for property tests.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }

  Vector vector(int n, double scale = 1.0) {
    Vector v(n);
    for (int i = 0; i < n; ++i) v(i) = scale * normal();
    return v;
  }

  Matrix matrix(int r, int c, double scale = 1.0) {
    Matrix m(r, c);
    for (int i = 0; i < r; ++i) {
      for (int j = 0; j < c; ++j) m(i, j) = scale * normal();
    }
    return m;
  }

  /// A Aᵀ + shift·I with A Gaussian.
  Matrix spd(int n, double shift = 0.5) {
    const Matrix a = matrix(n, n);
    return a * a.transpose() + shift * Matrix::Identity(n, n);
  }

  /// Random SPD block-tridiagonal matrix, made diagonally dominant by blocks.
  BlockTridiagonalMatrix spd_block_tridiagonal(int blocks, int n) {
    std::vector<Matrix> diag(blocks);
    std::vector<Matrix> upper(blocks - 1);
    std::vector<double> row_mass(blocks, 0.0);
    for (int i = 0; i + 1 < blocks; ++i) {
      upper[i] = matrix(n, n, 0.5);
      const double s = upper[i].norm();
      row_mass[i] += s;
      row_mass[i + 1] += s;
    }
    for (int i = 0; i < blocks; ++i) diag[i] = spd(n, 0.1) + (row_mass[i] + 0.1) * Matrix::Identity(n, n);
    return {diag, upper};
  }

 private:
  std::mt19937_64 engine_;
};

inline double rel_err(const Matrix& a, const Matrix& b) {
  const double scale = std::max(b.norm(), 1e-300);
  return (a - b).norm() / scale;
}

}  // namespace gvimp::testing
