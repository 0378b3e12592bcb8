#pragma once

// Optimizers for points on G(1,n) (SGD with momentum and Adam carried along
// geodesics) and the Euclidean SGD/Nesterov baseline used for everything that
// is not a scale-invariant weight vector.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "grassbn/errors.hpp"
#include "grassbn/manifold.hpp"
#include "grassbn/numerics.hpp"

namespace grassbn {

struct SgdGHyper {
  double eta = 0.2;    // initial learning rate; the per-step rate is passed in
  double gamma = 0.9;  // momentum
  double nu = 0.1;     // clipping threshold on the tangent gradient
};

struct SgdGState {
  TangentVector tau;  // momentum, tangent at the current point
  SgdGHyper hyper;

  static SgdGState zero(std::size_t n, SgdGHyper hyper = {}) {
    return {TangentVector::zero(n), hyper};
  }
};

struct AdamGHyper {
  double eta = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double nu = 0.1;
  double epsilon = 1e-8;
};

struct AdamGState {
  TangentVector tau;
  double v = 0.0;      // one second-moment scalar per point
  long long t = 0;     // completed steps
  AdamGHyper hyper;

  static AdamGState zero(std::size_t n, AdamGHyper hyper = {}) {
    return {TangentVector::zero(n), 0.0, 0, hyper};
  }
};

/// Per-step diagnostics.
struct StepReport {
  double grad_norm = 0.0;     // |h| before clipping
  double clipped_norm = 0.0;  // |ĥ|
  double step_norm = 0.0;     // |d|, i.e. the geodesic distance travelled
};

struct SgdGResult {
  GrassmannPoint point;
  SgdGState state;
  StepReport report;
};

struct AdamGResult {
  GrassmannPoint point;
  AdamGState state;
  StepReport report;
};

namespace detail {
inline void require_step_inputs(const GrassmannPoint& y, const Vector& g, double lr,
                                const char* who) {
  if (g.size() != y.dim()) {
    throw DimensionError(std::string(who) + ": gradient length " +
                         std::to_string(g.size()) + " vs dimension " +
                         std::to_string(y.dim()));
  }
  if (!(lr > 0.0)) throw PreconditionError(std::string(who) + ": lr must be positive");
  if (!all_finite(g.span())) throw NumericalError(std::string(who) + ": non-finite gradient");
}
}  // namespace detail

/// One step of SGD with momentum on G(1,n):
///   h = g - (yᵀg)y,  ĥ = clip(h, ν),  d = γτ - lr·ĥ,
///   y' = exp_y(d),   τ' = transport of d along itself.
inline SgdGResult sgdg_step(const GrassmannPoint& y, const Vector& g,
                            const SgdGState& state, double lr) {
  detail::require_step_inputs(y, g, lr, "sgdg_step");
  const auto& hp = state.hyper;
  const TangentVector h = project_tangent(y, g);
  const TangentVector h_hat = norm_clip(h, hp.nu);
  const TangentVector d = hp.gamma * state.tau - lr * h_hat;

  StepReport report{h.norm(), h_hat.norm(), d.norm()};
  GrassmannPoint next = exp_map(y, d);
  TangentVector tau = parallel_translate_self(y, d);
  return {std::move(next), SgdGState{std::move(tau), hp}, report};
}

/// One step of Adam on G(1,n) with a single adaptive rate per point.
inline AdamGResult adamg_step(const GrassmannPoint& y, const Vector& g,
                              const AdamGState& state, double lr) {
  detail::require_step_inputs(y, g, lr, "adamg_step");
  const auto& hp = state.hyper;
  const long long t = state.t + 1;
  const double bias = std::sqrt(1.0 - std::pow(hp.beta2, static_cast<double>(t))) /
                      (1.0 - std::pow(hp.beta1, static_cast<double>(t)));
  const double eta_t = lr * bias;

  const TangentVector h = project_tangent(y, g);
  const TangentVector h_hat = norm_clip(h, hp.nu);
  const TangentVector m = hp.beta1 * state.tau + (1.0 - hp.beta1) * h_hat;
  const double hh = h_hat.norm();
  const double v = hp.beta2 * state.v + (1.0 - hp.beta2) * hh * hh;
  const TangentVector d = (-eta_t / std::sqrt(v + hp.epsilon)) * m;

  StepReport report{h.norm(), hh, d.norm()};
  GrassmannPoint next = exp_map(y, d);
  TangentVector tau = parallel_translate(y, m, d);
  return {std::move(next), AdamGState{std::move(tau), v, t, hp}, report};
}

struct EuclideanSgdHyper {
  double eta = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  bool nesterov = true;
};

struct EuclideanSgdState {
  Vector velocity;
  EuclideanSgdHyper hyper;

  static EuclideanSgdState zero(std::size_t n, EuclideanSgdHyper hyper = {}) {
    return {Vector(n), hyper};
  }
};

/// In-place SGD step on a flat parameter block:
///   g_eff = g + λw (if decay applies),  v = μv + g_eff,
///   w -= lr·(g_eff + μv)  [Nesterov]  or  w -= lr·v.
inline void euclidean_sgd_update(std::span<double> w, std::span<const double> g,
                                 EuclideanSgdState& state, double lr,
                                 bool apply_weight_decay) {
  if (w.size() != g.size() || state.velocity.size() != w.size()) {
    throw DimensionError("euclidean_sgd_step: parameter, gradient and velocity sizes differ");
  }
  if (!all_finite(g)) throw NumericalError("euclidean_sgd_step: non-finite gradient");
  const auto& hp = state.hyper;
  const double decay = apply_weight_decay ? hp.weight_decay : 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double g_eff = g[i] + decay * w[i];
    double& v = state.velocity[i];
    v = hp.momentum * v + g_eff;
    w[i] -= lr * (hp.nesterov ? g_eff + hp.momentum * v : v);
  }
}

struct EuclideanSgdResult {
  Vector w;
  EuclideanSgdState state;
};

inline EuclideanSgdResult euclidean_sgd_step(const Vector& w, const Vector& g,
                                             const EuclideanSgdState& state, double lr,
                                             bool apply_weight_decay) {
  EuclideanSgdResult out{w, state};
  euclidean_sgd_update(out.w.span(), g.span(), out.state, lr, apply_weight_decay);
  return out;
}

/// Piecewise-constant schedule: initial · factor^(#milestones ≤ epoch).
struct LrSchedule {
  double initial = 0.1;
  std::vector<int> milestones;
  double factor = 0.2;

  void validate() const {
    if (!(initial >= 0.0)) throw PreconditionError("LrSchedule: initial rate must be non-negative");
    if (!(factor > 0.0 && factor <= 1.0)) {
      throw PreconditionError("LrSchedule: factor must lie in (0, 1]");
    }
    for (std::size_t i = 1; i < milestones.size(); ++i) {
      if (milestones[i] <= milestones[i - 1]) {
        throw PreconditionError("LrSchedule: milestones must be strictly increasing");
      }
    }
  }
};

inline double schedule_lr(const LrSchedule& s, int epoch) {
  if (epoch < 0) throw PreconditionError("schedule_lr: negative epoch");
  double lr = s.initial;
  for (int m : s.milestones) {
    if (m <= epoch) lr *= s.factor;
  }
  return lr;
}

}  // namespace grassbn
