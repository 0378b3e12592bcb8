#include <cmath>
#include <numbers>

#include "gtest/gtest.h"

#include "grassbn/gradcheck.hpp"
#include "grassbn/regularizer.hpp"
#include "test_util.hpp"

namespace grassbn {
namespace {

Matrix unit_columns(Rng& rng, std::size_t n, std::size_t p) {
  Matrix y = gaussian_matrix(rng, n, p);
  for (std::size_t c = 0; c < p; ++c) {
    const Vector col = y.col(c);
    y.set_col(c, col * (1.0 / norm(col)));
  }
  return y;
}

Matrix orthonormal(Rng& rng, std::size_t n, std::size_t p) {
  return orthonormalize_columns(gaussian_matrix(rng, n, p));
}

TEST(LayerColumns, Preconditions) {
  EXPECT_THROW(LayerColumns(Matrix::identity(3), 0.1), PreconditionError);
  EXPECT_THROW(LayerColumns(Matrix(4, 2), 0.1), PreconditionError);  // zero columns
  Rng rng(50);
  const Matrix y = unit_columns(rng, 5, 2);
  EXPECT_THROW(LayerColumns(y, 0.0), PreconditionError);
  EXPECT_THROW(LayerColumns(y, 0.1, -1.0), PreconditionError);
  EXPECT_THROW(LayerColumns(y * 1.01, 0.1), PreconditionError);
}

TEST(OrthoLoss, Examples) {
  Rng rng(51);
  EXPECT_LT(ortho_loss(LayerColumns(orthonormal(rng, 6, 3), 0.1)), 1e-28);

  Matrix twin(4, 2);
  const Vector u = gaussian_vector(rng, 4);
  twin.set_col(0, u * (1.0 / norm(u)));
  twin.set_col(1, u * (1.0 / norm(u)));
  EXPECT_NEAR(ortho_loss(LayerColumns(twin, 0.1)), 0.1, 1e-15);
}

TEST(OrthoLoss, MatchesElementwiseFrobenius) {
  Rng rng(52);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix y = unit_columns(rng, 8, 3);
    double sum = 0.0;
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) {
        double g = 0.0;
        for (std::size_t r = 0; r < 8; ++r) g += y(r, i) * y(r, j);
        const double d = g - (i == j ? 1.0 : 0.0);
        sum += d * d;
      }
    EXPECT_NEAR(ortho_loss(LayerColumns(y, 0.3)), 0.15 * sum, 1e-14);
  }
}

TEST(OrthoGrad, VanishesAtOrthonormalColumns) {
  Rng rng(53);
  const Matrix g = ortho_grad(LayerColumns(orthonormal(rng, 7, 4), 0.1));
  EXPECT_LT(frobenius_norm(g), 1e-14);
}

TEST(OrthoGrad, ColumnIdentityWithComplementColumns) {
  Rng rng(54);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 5 + trial % 6;
    const std::size_t p = 2 + trial % 3;
    const Matrix y = unit_columns(rng, n, p);
    const Matrix g = ortho_grad(LayerColumns(y, 0.1));
    for (std::size_t j = 0; j < p; ++j) {
      const Vector yj = y.col(j);
      Vector expected(n);
      for (std::size_t k = 0; k < p; ++k) {
        if (k == j) continue;
        const Vector xk = y.col(k);
        axpy(2.0 * 0.1 * dot(xk, yj), xk, expected);
      }
      EXPECT_LT(testing::max_abs_diff(g.col(j), expected), 1e-12);
    }
  }
}

// Finite differences treat Y as a free matrix; unit-norm validation is only a
// constructor check, so the objective is evaluated on the raw perturbed matrix.
TEST(OrthoGrad, MatchesFiniteDifferences) {
  Rng rng(55);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix y = unit_columns(rng, 6, 3);
    const double alpha = 0.1;
    auto f = [&](const Vector& flat) {
      const Matrix m(6, 3, flat.values());
      const Matrix d = detail::gram_minus_identity(m);
      const double fr = frobenius_norm(d);
      return 0.5 * alpha * fr * fr;
    };
    const Vector flat(y.span());
    const Vector numeric = fd_gradient(f, flat, 1e-6);
    const Matrix analytic = ortho_grad(LayerColumns(y, alpha));
    const Vector a(analytic.span());
    const FdReport report = compare_gradients(a, numeric, "Y");
    EXPECT_LT(report.max_rel_error, 1e-6) << report.worst_index;
  }
}

TEST(ComplexityLoss, RankOneSpectrum) {
  Rng rng(56);
  const double alpha = 0.1;
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix y = unit_columns(rng, 2, 1);
    const double value = complexity_loss(LayerColumns(y, alpha, 0.1));
    EXPECT_NEAR(value, alpha / 2 * (1.0 / 1.01 + 1.0 / 0.01), 1e-12);
  }
}

TEST(ComplexityLoss, OrthonormalSpectrum) {
  Rng rng(57);
  const double alpha = 0.1, s2 = 1e-4;
  const double value = complexity_loss(LayerColumns(orthonormal(rng, 6, 2), alpha, 1e-2));
  const double expected = alpha / 2 * (2.0 / (1.0 + s2) + 4.0 / s2);
  EXPECT_NEAR(value, expected, 1e-12 * expected);
}

TEST(ComplexityLoss, AgreesWithEigenvaluesOfFullCovariance) {
  // tr((σ²I + YYᵀ)⁻¹) computed from the n×n matrix directly.
  Rng rng(58);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix y = unit_columns(rng, 7, 3);
    const double sigma = 0.2;
    Matrix c0 = matmul_nt(y, y);
    for (std::size_t i = 0; i < 7; ++i) c0(i, i) += sigma * sigma;
    const double direct = 0.05 * trace(solve_spd(c0, Matrix::identity(7)));
    EXPECT_NEAR(complexity_loss(LayerColumns(y, 0.1, sigma)), direct, 1e-11 * direct);
  }
}

TEST(ComplexityLossFull, IdenticalGaussiansGiveZero) {
  const double alpha = 0.25;
  const double value = complexity_loss_full(LayerColumns(Matrix(5, 0), alpha, std::sqrt(alpha)));
  EXPECT_NEAR(value, 0.0, 1e-13);
}

TEST(ComplexityLossFull, ConstantTermsMatch) {
  Rng rng(59);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 4 + trial % 5;
    const std::size_t p = 1 + trial % (n - 1);
    const double sigma = 0.3, alpha = 0.1;
    const LayerColumns layer(unit_columns(rng, n, p), alpha, sigma);
    const double constant =
        (sigma * sigma * static_cast<double>(n) + static_cast<double>(p)) / (2 * alpha) -
        static_cast<double>(n);
    const double diff = complexity_loss_full(layer) - complexity_loss(layer);
    EXPECT_NEAR(diff, constant, 1e-10 * (1.0 + std::abs(complexity_loss(layer))));
  }
}

TEST(ComplexityLossFull, OrdersInstancesLikeComplexityLoss) {
  Rng rng(60);
  for (int trial = 0; trial < 100; ++trial) {
    const LayerColumns a(unit_columns(rng, 6, 3), 0.1, 0.05);
    const LayerColumns b(unit_columns(rng, 6, 3), 0.1, 0.05);
    const double full = complexity_loss_full(a) - complexity_loss_full(b);
    const double reduced = complexity_loss(a) - complexity_loss(b);
    if (std::abs(reduced) < 1e-9) continue;
    EXPECT_EQ(full > 0, reduced > 0);
  }
}

// Random unit-column Y and its Gram-Schmidt orthonormalization span the same
// subspace; the orthonormal one must have the smaller complexity loss.
TEST(ComplexityLossProperty, MinimizedByOrthonormalColumns) {
  Rng rng(61);
  for (double sigma : {1e-2, 1e-3, 1e-4}) {
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t n = 4 + trial % 9;
      const std::size_t p = 1 + trial % (n - 1);
      const Matrix y = unit_columns(rng, n, p);
      const double before = complexity_loss(LayerColumns(y, 0.1, sigma));
      const double after = complexity_loss(LayerColumns(orthonormalize_columns(y), 0.1, sigma));
      ASSERT_LE(after, before) << "sigma=" << sigma << " trial=" << trial;
      if (frobenius_norm(detail::gram_minus_identity(y)) > 1e-3) {
        ASSERT_LT(after, before);
      }
    }
  }
}

TEST(DescentCheck, ZeroAtOrthonormalColumns) {
  Rng rng(62);
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_NEAR(descent_check(LayerColumns(orthonormal(rng, 8, 3), 0.1), j), 0.0, 1e-8);
  }
}

TEST(DescentCheck, PositiveForColumnsAt45Degrees) {
  const double s = std::numbers::sqrt2 / 2;
  const Matrix y{{1, s}, {0, s}, {0, 0}};
  const LayerColumns layer(y, 0.1);
  EXPECT_GT(descent_check(layer, 0), 0.0);
  EXPECT_GT(descent_check(layer, 1), 0.0);
}

TEST(DescentCheck, RejectsRankDeficiencyAndBadColumn) {
  const Matrix twin{{1, 1}, {0, 0}, {0, 0}};
  EXPECT_THROW(descent_check(LayerColumns(twin, 0.1), 0), PreconditionError);
  Rng rng(63);
  EXPECT_THROW(descent_check(LayerColumns(unit_columns(rng, 4, 2), 0.1), 2), PreconditionError);
}

TEST(DescentCheckProperty, NonNegativeOnRandomFullRankInstances) {
  Rng rng(64);
  int checked = 0;
  for (std::size_t n : {4u, 8u, 32u}) {
    for (int trial = 0; trial < 334; ++trial) {
      const std::size_t p = 1 + static_cast<std::size_t>(trial) % (n - 1);
      const LayerColumns layer(unit_columns(rng, n, p), 0.1);
      const std::size_t j = static_cast<std::size_t>(trial) % p;
      ASSERT_GE(descent_check(layer, j), -1e-8) << "n=" << n << " p=" << p;
      ++checked;
    }
  }
  EXPECT_GE(checked, 1000);
}

}  // namespace
}  // namespace grassbn
