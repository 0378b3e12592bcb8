#pragma once

#include <cmath>

#include "grassbn/manifold.hpp"
#include "grassbn/random.hpp"

namespace grassbn::testing {

inline GrassmannPoint random_point(Rng& rng, std::size_t n) {
  return GrassmannPoint::normalized(gaussian_vector(rng, n));
}

/// Tangent vector at y with the given length and a uniformly random direction.
inline TangentVector random_tangent(Rng& rng, const GrassmannPoint& y, double length) {
  const TangentVector v = project_tangent(y, gaussian_vector(rng, y.dim()));
  return (length / v.norm()) * v;
}

inline double max_abs_diff(const Vector& a, const Vector& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace grassbn::testing
