#include <algorithm>
#include <cmath>
#include <numbers>

#include "gtest/gtest.h"

#include "grassbn/optim.hpp"
#include "test_util.hpp"

namespace grassbn {
namespace {

using testing::max_abs_diff;
using testing::random_point;
using testing::random_tangent;

GrassmannPoint e1() { return GrassmannPoint::from_unit(Vector{1, 0}); }

// Cyclic Jacobi eigenvalue iteration; test-only oracle for symmetric matrices.
Vector jacobi_eigenvalues(Matrix a) {
  const std::size_t n = a.rows();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
  }
  Vector eig(n);
  for (std::size_t i = 0; i < n; ++i) eig[i] = a(i, i);
  std::sort(eig.begin(), eig.end());
  return eig;
}

TEST(SgdG, ZeroGradientIsAFixedPoint) {
  Rng rng(31);
  const GrassmannPoint y = random_point(rng, 6);
  const SgdGResult r = sgdg_step(y, Vector(6), SgdGState::zero(6), 0.2);
  EXPECT_EQ(r.point.vec(), y.vec());
  EXPECT_EQ(r.state.tau.vec(), Vector(6));
}

TEST(SgdG, FirstStepComposesProjectionClipAndExpMap) {
  const SgdGResult r = sgdg_step(e1(), Vector{0, 1}, SgdGState::zero(2, {0.2, 0.9, 0.1}), 0.2);
  EXPECT_NEAR(r.point[0], std::cos(0.02), 1e-15);
  EXPECT_NEAR(r.point[1], -std::sin(0.02), 1e-15);
  EXPECT_NEAR(r.report.clipped_norm, 0.1, 1e-15);
  EXPECT_NEAR(r.report.step_norm, 0.02, 1e-15);
  // momentum is d transported along itself: d cos|d| - y |d| sin|d|
  EXPECT_NEAR(r.state.tau[0], -0.02 * std::sin(0.02), 1e-15);
  EXPECT_NEAR(r.state.tau[1], -0.02 * std::cos(0.02), 1e-15);
}

// One clipped gradient followed by zero gradients travels
// η·ν·(1 + γ + γ² + …) = η·ν/(1-γ) = 0.2 rad along a single geodesic.
TEST(SgdG, SingleGradientTravelsAtMostEtaNuOverOneMinusGamma) {
  Rng rng(32);
  const GrassmannPoint start = random_point(rng, 5);
  GrassmannPoint y = start;
  SgdGState state = SgdGState::zero(5, {0.2, 0.9, 0.1});
  Vector g = 10.0 * random_tangent(rng, y, 1.0).vec();
  double travelled = 0.0;
  for (int t = 0; t < 400; ++t) {
    SgdGResult r = sgdg_step(y, t == 0 ? g : Vector(5), state, 0.2);
    travelled += r.report.step_norm;
    y = r.point;
    state = r.state;
  }
  EXPECT_NEAR(travelled, 0.2, 1e-12);
  EXPECT_NEAR(geodesic_angle(start, y), 0.2, 1e-9);
}

TEST(SgdG, RejectsBadInputs) {
  EXPECT_THROW(sgdg_step(e1(), Vector{1, 2, 3}, SgdGState::zero(2), 0.1), DimensionError);
  EXPECT_THROW(sgdg_step(e1(), Vector{0, 1}, SgdGState::zero(2), 0.0), PreconditionError);
  EXPECT_THROW(sgdg_step(e1(), Vector{0, std::nan("")}, SgdGState::zero(2), 0.1),
               NumericalError);
  EXPECT_THROW(adamg_step(e1(), Vector{0, INFINITY}, AdamGState::zero(2), 0.1), NumericalError);
}

TEST(SgdGProperty, InvariantsOverTenThousandSteps) {
  Rng rng(33);
  const std::size_t n = 12;
  GrassmannPoint y = random_point(rng, n);
  SgdGState state = SgdGState::zero(n);
  double worst_unit = 0.0, worst_tangent = 0.0, worst_rotation_excess = -1.0;
  for (int t = 0; t < 10000; ++t) {
    const Vector g = gaussian_vector(rng, n, std::exp(uniform(rng, -6, 2)));
    const double bound = state.hyper.gamma * state.tau.norm() + 0.2 * state.hyper.nu;
    SgdGResult r = sgdg_step(y, g, state, 0.2);
    worst_rotation_excess = std::max(worst_rotation_excess, geodesic_angle(y, r.point) - bound);
    y = std::move(r.point);
    state = std::move(r.state);
    worst_unit = std::max(worst_unit, std::abs(norm(y.vec()) - 1.0));
    worst_tangent =
        std::max(worst_tangent, std::abs(dot(y.vec(), state.tau.vec())) / (1.0 + state.tau.norm()));
  }
  EXPECT_LT(worst_unit, 1e-9);
  EXPECT_LT(worst_tangent, 1e-9);
  EXPECT_LE(worst_rotation_excess, 1e-12);
}

TEST(SgdGProperty, UnclippedStepsFollowTheSameGeodesicUnderGradientScaling) {
  Rng rng(34);
  for (int trial = 0; trial < 200; ++trial) {
    const GrassmannPoint y = random_point(rng, 8);
    const Vector g = random_tangent(rng, y, 0.02).vec() + 0.3 * y.vec();
    const double c = uniform(rng, 0.1, 4.9);  // |c·h| ≤ 0.098 < ν
    const SgdGResult a = sgdg_step(y, g, SgdGState::zero(8), 0.2);
    const SgdGResult b = sgdg_step(y, c * g, SgdGState::zero(8), 0.2);
    auto direction = [&](const GrassmannPoint& q) {
      Vector v = q.vec();
      axpy(-dot(y.vec(), v), y.vec(), v);
      return v * (1.0 / norm(v));
    };
    EXPECT_LT(max_abs_diff(direction(a.point), direction(b.point)), 1e-9);
  }
}

TEST(SgdGProperty, ClippedStepsAreScaleInvariant) {
  Rng rng(35);
  for (int trial = 0; trial < 200; ++trial) {
    const GrassmannPoint y = random_point(rng, 8);
    const Vector g = gaussian_vector(rng, 8);  // |h| ~ 2.6 > ν
    const double c = uniform(rng, 1.0, 100.0);
    const SgdGResult a = sgdg_step(y, g, SgdGState::zero(8), 0.2);
    const SgdGResult b = sgdg_step(y, c * g, SgdGState::zero(8), 0.2);
    EXPECT_LT(max_abs_diff(a.point.vec(), b.point.vec()), 1e-14);
  }
}

TEST(SgdGProperty, RayleighQuotientDescentReachesSmallestEigenvalue) {
  Rng rng(36);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix q = orthonormalize_columns(gaussian_matrix(rng, 8, 8));
    Matrix diag(8, 8);
    diag(0, 0) = -2.0;
    for (std::size_t i = 1; i < 8; ++i) diag(i, i) = uniform(rng, 2.0, 4.0);
    const Matrix a = matmul(matmul(q, diag), transpose(q));
    const double lambda_min = jacobi_eigenvalues(a)[0];
    ASSERT_NEAR(lambda_min, -2.0, 1e-10);

    GrassmannPoint y = random_point(rng, 8);
    SgdGState state = SgdGState::zero(8, {0.01, 0.0, 1e3});
    auto f = [&](const Vector& v) { return dot(v, matmul(a, Matrix(8, 1, v.values())).col(0)); };
    for (int t = 0; t < 200; ++t) {
      const Vector grad = 2.0 * matmul(a, Matrix(8, 1, y.vec().values())).col(0);
      SgdGResult r = sgdg_step(y, grad, state, 0.01);
      y = std::move(r.point);
      state = std::move(r.state);
    }
    EXPECT_LT(f(y.vec()) - lambda_min, 1e-6) << "trial " << trial;
  }
}

TEST(AdamG, ZeroGradientsNeverMove) {
  Rng rng(41);
  const GrassmannPoint start = random_point(rng, 7);
  GrassmannPoint y = start;
  AdamGState state = AdamGState::zero(7);
  for (int t = 0; t < 50; ++t) {
    AdamGResult r = adamg_step(y, Vector(7), state, 0.05);
    y = r.point;
    state = r.state;
  }
  EXPECT_EQ(y.vec(), start.vec());
  EXPECT_EQ(state.t, 50);
  EXPECT_EQ(state.v, 0.0);
}

// First step from zero state, checked against the closed form
// |d| = η₁(1-β₁)|ĥ| / sqrt((1-β₂)|ĥ|² + ε) with η₁ = lr·sqrt(1-β₂)/(1-β₁).
TEST(AdamG, FirstStepClosedForm) {
  Rng rng(42);
  for (double scale : {1e-6, 1e-3, 0.05, 0.5, 20.0}) {
    const GrassmannPoint y = random_point(rng, 9);
    const Vector g = random_tangent(rng, y, scale).vec();
    const double lr = 0.05;
    const AdamGResult r = adamg_step(y, g, AdamGState::zero(9), lr);
    const double hh = std::min(scale, 0.1);
    const double eta1 = lr * std::sqrt(1 - 0.99) / (1 - 0.9);
    const double expected = eta1 * (1 - 0.9) * hh / std::sqrt((1 - 0.99) * hh * hh + 1e-8);
    EXPECT_NEAR(r.report.step_norm, expected, 1e-15) << "scale " << scale;
    EXPECT_LE(r.report.step_norm, lr * (1 - 0.9) / std::sqrt(1 - 0.99) + 1e-15);
    EXPECT_NEAR(r.state.v, (1 - 0.99) * hh * hh, 1e-18);
    EXPECT_EQ(r.state.t, 1);
    // τ₁ is m₁ = (1-β₁)ĥ transported along d; its norm is preserved
    EXPECT_NEAR(r.state.tau.norm(), 0.1 * hh, 1e-15);
  }
}

TEST(AdamGProperty, InvariantsOverTenThousandSteps) {
  Rng rng(43);
  const std::size_t n = 10;
  GrassmannPoint y = random_point(rng, n);
  AdamGState state = AdamGState::zero(n);
  double worst_unit = 0.0, worst_tangent = 0.0, max_step = 0.0;
  for (int t = 0; t < 10000; ++t) {
    // gradients large enough that clipping keeps |ĥ| = ν: the stationary regime
    const Vector g = gaussian_vector(rng, n, uniform(rng, 0.5, 3.0));
    AdamGResult r = adamg_step(y, g, state, 0.05);
    ASSERT_EQ(r.state.t, state.t + 1);
    ASSERT_GE(r.state.v, 0.0);
    max_step = std::max(max_step, r.report.step_norm);
    y = std::move(r.point);
    state = std::move(r.state);
    worst_unit = std::max(worst_unit, std::abs(norm(y.vec()) - 1.0));
    worst_tangent =
        std::max(worst_tangent, std::abs(dot(y.vec(), state.tau.vec())) / (1.0 + state.tau.norm()));
  }
  EXPECT_LT(worst_unit, 1e-9);
  EXPECT_LT(worst_tangent, 1e-9);
  EXPECT_LE(max_step, 0.05 + 1e-6);
}

TEST(EuclideanSgd, ZeroGradientNoDecayIsAFixedPoint) {
  const Vector w{1.5, -2.0};
  const auto r = euclidean_sgd_step(w, Vector(2), EuclideanSgdState::zero(2), 0.1, false);
  EXPECT_EQ(r.w, w);
}

TEST(EuclideanSgd, WeightDecayEntersAsGradient) {
  const Vector w{2.0, -4.0};
  const double lr = 0.1;
  const auto r = euclidean_sgd_step(w, Vector(2), EuclideanSgdState::zero(2), lr, true);
  for (std::size_t i = 0; i < 2; ++i) {
    const double g_eff = 0.0005 * w[i];
    EXPECT_DOUBLE_EQ(r.state.velocity[i], g_eff);
    EXPECT_DOUBLE_EQ(r.w[i], w[i] - lr * (g_eff + 0.9 * g_eff));  // Nesterov
  }
}

TEST(EuclideanSgd, QuadraticMatchesScalarRecurrence) {
  for (double momentum : {0.0, 0.5, 0.9}) {
    EuclideanSgdState state = EuclideanSgdState::zero(1, {0.1, momentum, 0.0, true});
    Vector w{1.0};
    double w_ref = 1.0, v_ref = 0.0;
    double prev = 0.5;
    bool monotone = true;
    for (int t = 0; t < 100; ++t) {
      euclidean_sgd_update(w.span(), Vector{w[0]}.span(), state, 0.1, false);
      v_ref = momentum * v_ref + w_ref;
      w_ref -= 0.1 * (w_ref + momentum * v_ref);
      ASSERT_DOUBLE_EQ(w[0], w_ref);
      const double f = 0.5 * w[0] * w[0];
      monotone = monotone && f < prev;
      prev = f;
    }
    if (momentum <= 0.5) {
      EXPECT_TRUE(monotone) << "momentum " << momentum;
    }
    EXPECT_LT(prev, 1e-8);
  }
}

TEST(EuclideanSgd, ShapeAndFiniteChecks) {
  EuclideanSgdState state = EuclideanSgdState::zero(2);
  Vector w{1, 2};
  EXPECT_THROW(euclidean_sgd_update(w.span(), Vector{1}.span(), state, 0.1, true), DimensionError);
  EXPECT_THROW(euclidean_sgd_update(w.span(), Vector{1, NAN}.span(), state, 0.1, true),
               NumericalError);
}

TEST(Schedule, Examples) {
  const LrSchedule s{0.1, {60, 120, 160}, 0.2};
  EXPECT_DOUBLE_EQ(schedule_lr(s, 0), 0.1);
  EXPECT_DOUBLE_EQ(schedule_lr(s, 59), 0.1);
  EXPECT_DOUBLE_EQ(schedule_lr(s, 60), 0.1 * 0.2);
  EXPECT_NEAR(schedule_lr(s, 199), 8e-4, 1e-18);
  EXPECT_THROW(schedule_lr(s, -1), PreconditionError);
  EXPECT_THROW((LrSchedule{0.1, {60, 60}, 0.2}.validate()), PreconditionError);
  EXPECT_THROW((LrSchedule{0.1, {}, 1.5}.validate()), PreconditionError);
}

}  // namespace
}  // namespace grassbn
