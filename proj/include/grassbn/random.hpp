#pragma once

#include <cstdint>
#include <random>

#include "grassbn/numerics.hpp"

namespace grassbn {

using Rng = std::mt19937_64;

inline Vector gaussian_vector(Rng& rng, std::size_t n, double stddev = 1.0) {
  std::normal_distribution<double> dist(0.0, stddev);
  Vector v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

inline Matrix gaussian_matrix(Rng& rng, std::size_t rows, std::size_t cols,
                              double stddev = 1.0) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (double& x : m.span()) x = dist(rng);
  return m;
}

/// Uniformly distributed on the unit sphere (normalized Gaussian sample).
inline Vector random_unit_vector(Rng& rng, std::size_t n) {
  for (;;) {
    Vector v = gaussian_vector(rng, n);
    const double len = norm(v);
    if (len > 1e-12) return v * (1.0 / len);
  }
}

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace grassbn
