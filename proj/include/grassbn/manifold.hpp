#pragma once

// Geometry of the Grassmann manifold G(1,n) of lines through the origin,
// using unit-norm representatives y (yᵀy = 1). With that representation the
// canonical metric is the ordinary dot product on tangent vectors, and the
// tangent space at y is {v : yᵀv = 0}.

#include <cmath>
#include <numbers>
#include <string>
#include <utility>

#include "grassbn/errors.hpp"
#include "grassbn/numerics.hpp"

namespace grassbn {

/// Steps with |h| below this are treated as zero; the closed-form operators
/// divide by |h|.
inline constexpr double kDegenerateStep = 1e-12;

/// Tolerance on | |y| - 1 | accepted when wrapping an existing unit vector.
inline constexpr double kUnitTolerance = 1e-9;

class GrassmannPoint {
 public:
  /// Wraps a vector that is already unit-norm. Throws PreconditionError if
  /// the dimension is below 2 or the norm is off by more than kUnitTolerance.
  static GrassmannPoint from_unit(Vector y) {
    if (y.size() < 2) {
      throw PreconditionError("GrassmannPoint: dimension must be at least 2");
    }
    const double len = norm(y);
    if (!(std::abs(len - 1.0) <= kUnitTolerance)) {
      throw PreconditionError("GrassmannPoint: representative has norm " +
                              std::to_string(len));
    }
    return GrassmannPoint(std::move(y));
  }

  /// Any nonzero vector names a point; it is scaled to unit length.
  static GrassmannPoint normalized(Vector w) {
    if (w.size() < 2) {
      throw PreconditionError("GrassmannPoint: dimension must be at least 2");
    }
    const double len = norm(w);
    if (!(len > 0.0) || !std::isfinite(len)) {
      throw NumericalError("GrassmannPoint: cannot normalize a vector of norm " +
                           std::to_string(len));
    }
    return GrassmannPoint(std::move(w) * (1.0 / len));
  }

  std::size_t dim() const { return y_.size(); }
  const Vector& vec() const { return y_; }
  double operator[](std::size_t i) const { return y_[i]; }

 private:
  explicit GrassmannPoint(Vector y) : y_(std::move(y)) {}
  Vector y_;
};

/// A vector in the tangent space at some point. The base point is not stored;
/// callers keep track of it. Tangency is asserted when GRASSBN_VALIDATE_TANGENTS
/// is defined (test builds) and trusted otherwise.
class TangentVector {
 public:
  TangentVector() = default;
  explicit TangentVector(Vector v) : v_(std::move(v)) {}

  /// Tangent vector at `base`.
  TangentVector(const GrassmannPoint& base, Vector v) : v_(std::move(v)) {
#ifdef GRASSBN_VALIDATE_TANGENTS
    if (v_.size() != base.dim()) {
      throw DimensionError("TangentVector: dimension differs from base point");
    }
    const double off = std::abs(dot(base.vec(), v_));
    if (off > 1e-9 * (1.0 + grassbn::norm(v_))) {
      throw PreconditionError("TangentVector: |yᵀv| = " + std::to_string(off));
    }
#else
    (void)base;
#endif
  }

  static TangentVector zero(std::size_t n) { return TangentVector(Vector(n)); }

  std::size_t dim() const { return v_.size(); }
  const Vector& vec() const { return v_; }
  double operator[](std::size_t i) const { return v_[i]; }
  double norm() const { return grassbn::norm(v_); }

  friend TangentVector operator*(double s, const TangentVector& t) {
    return TangentVector(s * t.v_);
  }
  friend TangentVector operator+(const TangentVector& a, const TangentVector& b) {
    return TangentVector(a.v_ + b.v_);
  }
  friend TangentVector operator-(const TangentVector& a, const TangentVector& b) {
    return TangentVector(a.v_ - b.v_);
  }

 private:
  Vector v_;
};

/// Riemannian gradient from a Euclidean one: h = g - (yᵀg) y.
inline TangentVector project_tangent(const GrassmannPoint& y, const Vector& g) {
  if (g.size() != y.dim()) {
    throw DimensionError("project_tangent: gradient length " +
                         std::to_string(g.size()) + " vs point dimension " +
                         std::to_string(y.dim()));
  }
  const double radial = dot(y.vec(), g);
  Vector h = g;
  axpy(-radial, y.vec(), h);
  return TangentVector(y, std::move(h));
}

/// Point reached in unit time along the geodesic from y with velocity h:
/// y cos|h| + (h/|h|) sin|h|, renormalized.
inline GrassmannPoint exp_map(const GrassmannPoint& y, const TangentVector& h) {
  if (h.dim() != y.dim()) throw DimensionError("exp_map: dimension mismatch");
  const double len = h.norm();
  if (len < kDegenerateStep) return y;
  Vector out = y.vec() * std::cos(len);
  axpy(std::sin(len) / len, h.vec(), out);
  return GrassmannPoint::normalized(std::move(out));
}

/// Transport of delta along the geodesic with initial velocity h, unit time.
inline TangentVector parallel_translate(const GrassmannPoint& y,
                                        const TangentVector& delta,
                                        const TangentVector& h) {
  if (delta.dim() != y.dim() || h.dim() != y.dim()) {
    throw DimensionError("parallel_translate: dimension mismatch");
  }
  const double len = h.norm();
  if (len < kDegenerateStep) return delta;
  const Vector u = h.vec() * (1.0 / len);
  const double u_delta = dot(u, delta.vec());
  Vector out = delta.vec();
  axpy(-(1.0 - std::cos(len)) * u_delta, u, out);
  axpy(-std::sin(len) * u_delta, y.vec(), out);
  return TangentVector(std::move(out));
}

/// Transport of h along its own geodesic: h cos|h| - y |h| sin|h|.
inline TangentVector parallel_translate_self(const GrassmannPoint& y,
                                             const TangentVector& h) {
  if (h.dim() != y.dim()) {
    throw DimensionError("parallel_translate_self: dimension mismatch");
  }
  const double len = h.norm();
  if (len < kDegenerateStep) return h;
  Vector out = h.vec() * std::cos(len);
  axpy(-len * std::sin(len), y.vec(), out);
  return TangentVector(std::move(out));
}

/// nu·h/|h| if |h| > nu, else h.
inline TangentVector norm_clip(const TangentVector& h, double nu) {
  if (!(nu > 0.0)) throw PreconditionError("norm_clip: threshold must be positive");
  const double len = h.norm();
  if (len > nu) return (nu / len) * h;
  return h;
}

inline double tangent_inner(const TangentVector& a, const TangentVector& b) {
  if (a.dim() != b.dim()) throw DimensionError("tangent_inner: dimension mismatch");
  return dot(a.vec(), b.vec());
}

/// Angle in [0, π/2] between the lines spanned by y1 and y2. Uses the
/// half-chord form 2·atan2(|y1 - s·y2|, |y1 + s·y2|), s = sign(y1ᵀy2), which
/// equals arccos|y1ᵀy2| but keeps full precision for tiny angles.
inline double geodesic_angle(const GrassmannPoint& y1, const GrassmannPoint& y2) {
  if (y1.dim() != y2.dim()) throw DimensionError("geodesic_angle: dimension mismatch");
  const double s = dot(y1.vec(), y2.vec()) < 0.0 ? -1.0 : 1.0;
  double diff = 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < y1.dim(); ++i) {
    const double a = y1[i];
    const double b = s * y2[i];
    diff += (a - b) * (a - b);
    sum += (a + b) * (a + b);
  }
  const double angle = 2.0 * std::atan2(std::sqrt(diff), std::sqrt(sum));
  return std::min(angle, std::numbers::pi / 2.0);
}

}  // namespace grassbn
