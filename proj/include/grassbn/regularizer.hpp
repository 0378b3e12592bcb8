#pragma once

// Orthogonality regularization for the unit columns of an under-complete
// weight matrix, together with the factor-analyzer complexity loss it stands
// in for. The complexity loss is only used as a reference: the training path
// optimizes the orthogonality surrogate.

#include <cmath>
#include <string>
#include <utility>

#include "grassbn/errors.hpp"
#include "grassbn/numerics.hpp"

namespace grassbn {

/// Y (n×p, n > p) with unit columns, the regularization strength α and the
/// factor-analyzer noise level σ (σ only matters for the complexity loss).
class LayerColumns {
 public:
  static constexpr double kDefaultSigma = 1e-3;

  LayerColumns(Matrix y, double alpha, double sigma = kDefaultSigma)
      : y_(std::move(y)), alpha_(alpha), sigma_(sigma) {
    if (y_.rows() <= y_.cols()) {
      throw PreconditionError("LayerColumns: need n > p, got " +
                              std::to_string(y_.rows()) + "x" + std::to_string(y_.cols()));
    }
    if (!(alpha_ > 0.0)) throw PreconditionError("LayerColumns: alpha must be positive");
    if (!(sigma_ > 0.0)) throw PreconditionError("LayerColumns: sigma must be positive");
    for (std::size_t j = 0; j < y_.cols(); ++j) {
      double sq = 0.0;
      for (std::size_t i = 0; i < y_.rows(); ++i) sq += y_(i, j) * y_(i, j);
      if (std::abs(std::sqrt(sq) - 1.0) > 1e-9) {
        throw PreconditionError("LayerColumns: column " + std::to_string(j) +
                                " is not unit-norm");
      }
    }
  }

  const Matrix& y() const { return y_; }
  double alpha() const { return alpha_; }
  double sigma() const { return sigma_; }
  std::size_t n() const { return y_.rows(); }
  std::size_t p() const { return y_.cols(); }

 private:
  Matrix y_;
  double alpha_;
  double sigma_;
};

namespace detail {
inline Matrix gram_minus_identity(const Matrix& y) {
  Matrix g = matmul_tn(y, y);
  for (std::size_t i = 0; i < g.rows(); ++i) g(i, i) -= 1.0;
  return g;
}

/// tr((σ²I_p + YᵀY)⁻¹). Together with (n-p)/σ² this is tr((σ²I_n + YYᵀ)⁻¹),
/// since YYᵀ has the eigenvalues of YᵀY plus n-p zeros.
inline double reduced_inverse_trace(const Matrix& y, double sigma2) {
  Matrix g = matmul_tn(y, y);
  for (std::size_t i = 0; i < g.rows(); ++i) g(i, i) += sigma2;
  return trace(solve_spd(g, Matrix::identity(g.rows())));
}
}  // namespace detail

/// (α/2)·‖YᵀY - I‖_F²
inline double ortho_loss(const LayerColumns& layer) {
  const double f = frobenius_norm(detail::gram_minus_identity(layer.y()));
  return 0.5 * layer.alpha() * f * f;
}

/// Euclidean gradient of ortho_loss: 2α·Y·(YᵀY - I). For unit columns,
/// column j equals 2α·X_j·X_jᵀ·y_j where X_j is Y without column j.
inline Matrix ortho_grad(const LayerColumns& layer) {
  return matmul(layer.y(), detail::gram_minus_identity(layer.y())) * (2.0 * layer.alpha());
}

/// (α/2)·tr((σ²I + YYᵀ)⁻¹), the KL complexity loss without its constant terms.
/// Evaluated as (α/2)·((n-p)/σ² + tr((σ²I_p + YᵀY)⁻¹)); the n×n form is too
/// ill-conditioned at small σ to resolve the dependence on Y.
inline double complexity_loss(const LayerColumns& layer) {
  const double s2 = layer.sigma() * layer.sigma();
  const double null_part = static_cast<double>(layer.n() - layer.p()) / s2;
  return 0.5 * layer.alpha() * (null_part + detail::reduced_inverse_trace(layer.y(), s2));
}

/// Symmetric KL divergence between N(0, σ²I + YYᵀ) and N(0, αI), constants
/// included: ½·tr(C₁⁻¹C₀ + C₀⁻¹C₁) - n. Works on the full n×n covariances.
inline double complexity_loss_full(const LayerColumns& layer) {
  const std::size_t n = layer.n();
  const double s2 = layer.sigma() * layer.sigma();
  Matrix c0 = matmul_nt(layer.y(), layer.y());
  for (std::size_t i = 0; i < n; ++i) c0(i, i) += s2;
  const Matrix c1 = Matrix::identity(n) * layer.alpha();
  const double t1 = trace(solve_spd(c1, c0));
  const double t2 = trace(solve_spd(c0, c1));
  return 0.5 * (t1 + t2) - static_cast<double>(n);
}

/// Inner product between the gradient of the complexity loss with respect to
/// column j (central differences, column kept on the unit sphere) and column j
/// of ortho_grad. Non-negative when -ortho_grad is a descent direction of the
/// complexity loss; zero when column j is orthogonal to the others.
inline double descent_check(const LayerColumns& layer, std::size_t column,
                            double fd_step = 1e-6) {
  const std::size_t n = layer.n();
  const std::size_t p = layer.p();
  if (column >= p) throw PreconditionError("descent_check: column index out of range");
  {
    Matrix gram = matmul_tn(layer.y(), layer.y());
    try {
      const Matrix l = cholesky(gram);
      for (std::size_t i = 0; i < p; ++i) {
        if (l(i, i) < 1e-7) throw NumericalError("tiny pivot");
      }
    } catch (const NumericalError&) {
      throw PreconditionError("descent_check: Y is rank deficient");
    }
  }

  const double s2 = layer.sigma() * layer.sigma();
  const double half_alpha = 0.5 * layer.alpha();
  // Only the trace over the column space depends on Y; the (n-p)/σ² part is
  // constant and would just add rounding noise to the differences.
  auto objective = [&](const Matrix& y) {
    return half_alpha * detail::reduced_inverse_trace(y, s2);
  };
  auto with_column = [&](std::size_t i, double delta) {
    Matrix y = layer.y();
    y(i, column) += delta;
    double sq = 0.0;
    for (std::size_t r = 0; r < n; ++r) sq += y(r, column) * y(r, column);
    const double inv = 1.0 / std::sqrt(sq);
    for (std::size_t r = 0; r < n; ++r) y(r, column) *= inv;
    return y;
  };

  Vector fd(n);
  for (std::size_t i = 0; i < n; ++i) {
    fd[i] = (objective(with_column(i, fd_step)) - objective(with_column(i, -fd_step))) /
            (2.0 * fd_step);
  }
  const Vector og = ortho_grad(layer).col(column);
  return dot(fd, og);
}

}  // namespace grassbn
