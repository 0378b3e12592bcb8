#include <cmath>
#include <numbers>

#include "gtest/gtest.h"

#include "grassbn/manifold.hpp"
#include "test_util.hpp"

namespace grassbn {
namespace {

using testing::max_abs_diff;
using testing::random_point;
using testing::random_tangent;

constexpr double kPi = std::numbers::pi;
constexpr int kTrials = 1000;
const std::size_t kDims[] = {2, 3, 16, 257};

GrassmannPoint e1() { return GrassmannPoint::from_unit(Vector{1, 0}); }

TEST(GrassmannPoint, RejectsNonUnitAndTooSmall) {
  EXPECT_THROW(GrassmannPoint::from_unit(Vector{1, 1}), PreconditionError);
  EXPECT_THROW(GrassmannPoint::from_unit(Vector{1}), PreconditionError);
  EXPECT_THROW(GrassmannPoint::normalized(Vector{0, 0}), NumericalError);
  EXPECT_NEAR(norm(GrassmannPoint::normalized(Vector{3, 4}).vec()), 1.0, 1e-15);
}

TEST(ProjectTangent, Examples) {
  EXPECT_EQ(project_tangent(e1(), Vector{5, 0}).vec(), (Vector{0, 0}));
  EXPECT_EQ(project_tangent(e1(), Vector{-2.5, 7}).vec(), (Vector{0, 7}));
  EXPECT_THROW(project_tangent(e1(), Vector{1, 2, 3}), DimensionError);
}

TEST(ProjectTangent, ReconstructsGradient) {
  Rng rng(11);
  const GrassmannPoint y = random_point(rng, 16);
  const Vector g = gaussian_vector(rng, 16);
  const TangentVector h = project_tangent(y, g);
  EXPECT_LT(std::abs(dot(y.vec(), h.vec())), 1e-12);
  Vector rebuilt = h.vec();
  axpy(dot(y.vec(), g), y.vec(), rebuilt);
  EXPECT_LT(max_abs_diff(rebuilt, g), 1e-12);
}

TEST(ExpMap, Examples) {
  EXPECT_EQ(exp_map(e1(), TangentVector::zero(2)).vec(), e1().vec());
  const GrassmannPoint q = exp_map(e1(), TangentVector(Vector{0, kPi / 2}));
  EXPECT_NEAR(q[0], 0.0, 1e-15);
  EXPECT_NEAR(q[1], 1.0, 1e-15);
}

TEST(ExpMap, DegenerateStepReturnsBasePoint) {
  Rng rng(12);
  const GrassmannPoint y = random_point(rng, 5);
  EXPECT_EQ(exp_map(y, random_tangent(rng, y, 1e-13)).vec(), y.vec());
}

TEST(ParallelTranslate, Examples) {
  Rng rng(13);
  const GrassmannPoint y = random_point(rng, 6);
  const TangentVector delta = random_tangent(rng, y, 0.7);
  EXPECT_EQ(parallel_translate(y, delta, TangentVector::zero(6)).vec(), delta.vec());

  const TangentVector self = parallel_translate_self(e1(), TangentVector(Vector{0, kPi / 2}));
  EXPECT_NEAR(self[0], -kPi / 2, 1e-15);
  EXPECT_NEAR(self[1], 0.0, 1e-15);
  EXPECT_EQ(parallel_translate_self(e1(), TangentVector::zero(2)).vec(), (Vector{0, 0}));
}

TEST(NormClip, Examples) {
  const TangentVector small(Vector{0, 0.05});
  EXPECT_EQ(norm_clip(small, 0.1).vec(), small.vec());
  const TangentVector big(Vector{0, 0.12, 0.16});  // |h| = 0.2
  const TangentVector clipped = norm_clip(big, 0.1);
  EXPECT_NEAR(clipped.norm(), 0.1, 1e-16);
  EXPECT_LT(max_abs_diff(clipped.vec(), 0.5 * big.vec()), 1e-16);
  EXPECT_EQ(norm_clip(TangentVector::zero(3), 0.1).vec(), (Vector{0, 0, 0}));
  EXPECT_THROW(norm_clip(small, 0.0), PreconditionError);
}

TEST(TangentInner, Examples) {
  Rng rng(14);
  const GrassmannPoint y = random_point(rng, 9);
  const TangentVector a = random_tangent(rng, y, 1.3);
  const TangentVector b = random_tangent(rng, y, 0.4);
  EXPECT_NEAR(tangent_inner(a, a), 1.3 * 1.3, 1e-14);
  EXPECT_DOUBLE_EQ(tangent_inner(a, b), dot(a.vec(), b.vec()));
  EXPECT_EQ(tangent_inner(TangentVector(Vector{0, 1, 0}), TangentVector(Vector{0, 0, 2})), 0.0);
  EXPECT_THROW(tangent_inner(a, TangentVector::zero(3)), DimensionError);
}

TEST(GeodesicAngle, Examples) {
  Rng rng(15);
  const GrassmannPoint y = random_point(rng, 7);
  EXPECT_EQ(geodesic_angle(y, y), 0.0);
  EXPECT_EQ(geodesic_angle(y, GrassmannPoint::from_unit(-1.0 * y.vec())), 0.0);
  EXPECT_NEAR(geodesic_angle(e1(), GrassmannPoint::from_unit(Vector{0, 1})), kPi / 2, 1e-15);
}

#ifdef GRASSBN_VALIDATE_TANGENTS
TEST(TangentVector, ValidatedConstructorRejectsNonTangent) {
  EXPECT_THROW(TangentVector(e1(), Vector{1, 0}), PreconditionError);
  EXPECT_NO_THROW(TangentVector(e1(), Vector{0, 3}));
}
#endif

// ---- properties over n ∈ {2, 3, 16, 257}, 1000 instances each ----

TEST(ManifoldProperty, Tangency) {
  Rng rng(21);
  for (std::size_t n : kDims) {
    for (int t = 0; t < kTrials; ++t) {
      const GrassmannPoint y = random_point(rng, n);
      const Vector g = gaussian_vector(rng, n, std::exp(uniform(rng, -5, 5)));
      const TangentVector h = project_tangent(y, g);
      ASSERT_LT(std::abs(dot(y.vec(), h.vec())), 1e-12 * (1.0 + norm(g))) << "n=" << n;
    }
  }
}

TEST(ManifoldProperty, UnitNormClosure) {
  Rng rng(22);
  for (std::size_t n : kDims) {
    for (int t = 0; t < kTrials; ++t) {
      const GrassmannPoint y = random_point(rng, n);
      const TangentVector h = random_tangent(rng, y, uniform(rng, 0.0, kPi));
      ASSERT_LT(std::abs(norm(exp_map(y, h).vec()) - 1.0), 1e-12) << "n=" << n;
    }
  }
}

TEST(ManifoldProperty, Periodicity) {
  Rng rng(23);
  for (std::size_t n : kDims) {
    for (int t = 0; t < kTrials; ++t) {
      const GrassmannPoint y = random_point(rng, n);
      const TangentVector h = random_tangent(rng, y, uniform(rng, 0.01, kPi));
      const TangentVector wrapped = (1.0 + 2.0 * kPi / h.norm()) * h;
      ASSERT_LT(max_abs_diff(exp_map(y, h).vec(), exp_map(y, wrapped).vec()), 1e-9) << "n=" << n;
    }
  }
}

TEST(ManifoldProperty, TranslationIsometryAndTangency) {
  Rng rng(24);
  for (std::size_t n : kDims) {
    for (int t = 0; t < kTrials; ++t) {
      const GrassmannPoint y = random_point(rng, n);
      const TangentVector delta = random_tangent(rng, y, std::exp(uniform(rng, -4, 2)));
      const TangentVector h = random_tangent(rng, y, uniform(rng, 0.0, kPi));
      const TangentVector moved = parallel_translate(y, delta, h);
      ASSERT_LT(std::abs(moved.norm() - delta.norm()), 1e-12 * (1.0 + delta.norm()));
      const GrassmannPoint y2 = exp_map(y, h);
      ASSERT_LT(std::abs(dot(y2.vec(), moved.vec())), 1e-9);
    }
  }
}

TEST(ManifoldProperty, SelfTranslationMatchesGeneralForm) {
  Rng rng(25);
  for (std::size_t n : kDims) {
    for (int t = 0; t < kTrials; ++t) {
      const GrassmannPoint y = random_point(rng, n);
      const TangentVector h = random_tangent(rng, y, uniform(rng, 0.0, kPi));
      ASSERT_LT(max_abs_diff(parallel_translate_self(y, h).vec(), parallel_translate(y, h, h).vec()),
                1e-12);
    }
  }
}

TEST(ManifoldProperty, GeodesicConsistency) {
  Rng rng(26);
  for (std::size_t n : kDims) {
    for (int t = 0; t < kTrials; ++t) {
      const GrassmannPoint y = random_point(rng, n);
      const double len = std::exp(uniform(rng, std::log(1e-10), std::log(kPi / 2 * 0.999)));
      const TangentVector h = random_tangent(rng, y, len);
      ASSERT_NEAR(geodesic_angle(y, exp_map(y, h)), len, 1e-9) << "len=" << len;
    }
  }
}

}  // namespace
}  // namespace grassbn
