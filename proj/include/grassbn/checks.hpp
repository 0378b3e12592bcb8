#pragma once

// Property suites run by `grassbn check` and the acceptance binary. Each
// suite reports how many instances it tried and the worst value it saw
// against its tolerance.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "grassbn/gradcheck.hpp"
#include "grassbn/layers.hpp"
#include "grassbn/manifold.hpp"
#include "grassbn/network.hpp"
#include "grassbn/optim.hpp"
#include "grassbn/regularizer.hpp"
#include "grassbn/trainer.hpp"
#include "grassbn/data.hpp"

namespace grassbn {

struct SuiteResult {
  std::string module;
  std::string property;
  std::size_t count = 0;
  double worst = 0.0;
  double tolerance = 0.0;
  bool passed = true;
  std::string note;

  std::string line() const {
    char buf[256];
    std::snprintf(buf, sizeof buf, "[%s] %s/%s count=%zu worst=%.3e tol=%.1e", passed ? "PASS" : "FAIL",
                  module.c_str(), property.c_str(), count, worst, tolerance);
    return note.empty() ? buf : std::string(buf) + " " + note;
  }
};

/// The exponential map used by the manifold suites, replaceable to verify
/// that the suites catch a broken implementation.
using ExpMapFn = std::function<Vector(const GrassmannPoint&, const TangentVector&)>;

inline Vector reference_exp_map(const GrassmannPoint& y, const TangentVector& h) {
  return exp_map(y, h).vec();
}

/// Fault model for mutation testing: the geodesic formula without the final
/// renormalization, with a small seeded multiplicative drift.
inline ExpMapFn drifting_exp_map(std::uint64_t seed) {
  auto rng = std::make_shared<Rng>(seed);
  return [rng](const GrassmannPoint& y, const TangentVector& h) {
    const double len = h.norm();
    Vector out = y.vec() * std::cos(len);
    if (len > kDegenerateStep) axpy(std::sin(len) / len, h.vec(), out);
    return out * (1.0 + uniform(*rng, 0.0, 1e-6));
  };
}

struct CheckOptions {
  std::uint64_t seed = 20240101;
  int trials = 1000;
  std::vector<std::size_t> dims{2, 3, 16, 257};
  ExpMapFn exp_map = reference_exp_map;
};

namespace detail {
class Tracker {
 public:
  Tracker(std::string module, std::string property, double tolerance)
      : r_{std::move(module), std::move(property), 0, -std::numeric_limits<double>::infinity(),
           tolerance, true, {}} {}

  /// Records a value that must not exceed the tolerance.
  void upper(double value) {
    ++r_.count;
    if (!(value <= r_.tolerance)) r_.passed = false;
    if (std::isnan(value) || value > r_.worst) r_.worst = value;
  }

  void annotate(const std::string& note) { r_.note = note; }

  void fail(const std::string& note) {
    r_.passed = false;
    r_.note = note;
  }

  SuiteResult done() { return r_; }

 private:
  SuiteResult r_;
};

inline GrassmannPoint random_point(Rng& rng, std::size_t n) {
  return GrassmannPoint::normalized(gaussian_vector(rng, n));
}

inline TangentVector random_tangent(Rng& rng, const GrassmannPoint& y, double length) {
  const TangentVector v = project_tangent(y, gaussian_vector(rng, y.dim()));
  return (length / v.norm()) * v;
}

inline Matrix unit_columns(Rng& rng, std::size_t n, std::size_t p) {
  Matrix y = gaussian_matrix(rng, n, p);
  for (std::size_t c = 0; c < p; ++c) {
    const Vector col = y.col(c);
    y.set_col(c, col * (1.0 / norm(col)));
  }
  return y;
}
}  // namespace detail

// ---- manifold ----

inline std::vector<SuiteResult> manifold_suites(const CheckOptions& opt) {
  using detail::random_point;
  using detail::random_tangent;
  constexpr double kPi = std::numbers::pi;
  Rng rng(opt.seed);
  detail::Tracker tangency("manifold", "tangency", 1e-12);
  detail::Tracker closure("manifold", "unit_norm_closure", 1e-12);
  detail::Tracker periodic("manifold", "periodicity", 1e-9);
  detail::Tracker isometry("manifold", "translation_isometry", 1e-12);
  detail::Tracker transported("manifold", "translation_tangency", 1e-9);
  detail::Tracker self("manifold", "self_translation_matches_general", 1e-12);
  detail::Tracker geodesic("manifold", "geodesic_consistency", 1e-9);

  auto as_point = [](const Vector& v) { return GrassmannPoint::normalized(v); };
  for (std::size_t n : opt.dims) {
    for (int t = 0; t < opt.trials; ++t) {
      const GrassmannPoint y = random_point(rng, n);
      const Vector g = gaussian_vector(rng, n, std::exp(uniform(rng, -5, 5)));
      tangency.upper(std::abs(dot(y.vec(), project_tangent(y, g).vec())) / (1.0 + norm(g)));

      const TangentVector h = random_tangent(rng, y, uniform(rng, 0.0, kPi));
      const Vector moved = opt.exp_map(y, h);
      closure.upper(std::abs(norm(moved) - 1.0));

      const TangentVector hp = random_tangent(rng, y, uniform(rng, 0.01, kPi));
      const TangentVector wrapped = (1.0 + 2.0 * kPi / hp.norm()) * hp;
      const Vector a = opt.exp_map(y, hp), b = opt.exp_map(y, wrapped);
      double diff = 0.0;
      for (std::size_t i = 0; i < n; ++i) diff = std::max(diff, std::abs(a[i] - b[i]));
      periodic.upper(diff);

      const TangentVector delta = random_tangent(rng, y, std::exp(uniform(rng, -4, 2)));
      const TangentVector pt = parallel_translate(y, delta, h);
      isometry.upper(std::abs(pt.norm() - delta.norm()) / (1.0 + delta.norm()));
      transported.upper(std::abs(dot(as_point(moved).vec(), pt.vec())));

      const TangentVector s1 = parallel_translate_self(y, h), s2 = parallel_translate(y, h, h);
      double sd = 0.0;
      for (std::size_t i = 0; i < n; ++i) sd = std::max(sd, std::abs(s1[i] - s2[i]));
      self.upper(sd);

      const double len = std::exp(uniform(rng, std::log(1e-10), std::log(kPi / 2 * 0.999)));
      const Vector end = opt.exp_map(y, random_tangent(rng, y, len));
      geodesic.upper(std::abs(geodesic_angle(y, as_point(end)) - len));
    }
  }
  return {tangency.done(), closure.done(), periodic.done(), isometry.done(),
          transported.done(), self.done(), geodesic.done()};
}

// ---- optimizers ----

/// 10⁴ steps per point under random gradients: unit norm, tangent momentum,
/// the per-step rotation bound of SGD-G and the step bound of Adam-G.
inline std::vector<SuiteResult> optimizer_suites(const CheckOptions& opt, int steps = 10000) {
  Rng rng(opt.seed + 1);
  detail::Tracker unit_sgd("optim", "sgdg_unit_norm", 1e-9);
  detail::Tracker tan_sgd("optim", "sgdg_momentum_tangency", 1e-9);
  detail::Tracker rotation("optim", "sgdg_rotation_bound", 1e-12);
  detail::Tracker unit_adam("optim", "adamg_unit_norm", 1e-9);
  detail::Tracker tan_adam("optim", "adamg_momentum_tangency", 1e-9);
  detail::Tracker adam_step("optim", "adamg_step_bound", 1e-6);

  for (std::size_t n : {std::size_t{3}, std::size_t{16}, std::size_t{128}}) {
    GrassmannPoint y = detail::random_point(rng, n);
    SgdGState s = SgdGState::zero(n);
    GrassmannPoint z = detail::random_point(rng, n);
    AdamGState a = AdamGState::zero(n);
    for (int t = 0; t < steps; ++t) {
      const Vector g = gaussian_vector(rng, n, std::exp(uniform(rng, -6, 2)));
      const double bound = s.hyper.gamma * s.tau.norm() + 0.2 * s.hyper.nu;
      SgdGResult r = sgdg_step(y, g, s, 0.2);
      rotation.upper(geodesic_angle(y, r.point) - bound);
      y = std::move(r.point);
      s = std::move(r.state);
      unit_sgd.upper(std::abs(norm(y.vec()) - 1.0));
      tan_sgd.upper(std::abs(dot(y.vec(), s.tau.vec())));

      AdamGResult q = adamg_step(z, gaussian_vector(rng, n, uniform(rng, 0.5, 3.0)), a, 0.05);
      adam_step.upper(q.report.step_norm - 0.05);
      z = std::move(q.point);
      a = std::move(q.state);
      unit_adam.upper(std::abs(norm(z.vec()) - 1.0));
      tan_adam.upper(std::abs(dot(z.vec(), a.tau.vec())));
    }
  }
  return {unit_sgd.done(), tan_sgd.done(), rotation.done(),
          unit_adam.done(), tan_adam.done(), adam_step.done()};
}

// ---- regularizer ----

inline SuiteResult ortho_grad_suite(const CheckOptions& opt, int instances = 50) {
  Rng rng(opt.seed + 2);
  detail::Tracker t("regularizer", "ortho_grad_matches_fd", 1e-6);
  for (int i = 0; i < instances; ++i) {
    const std::size_t n = 3 + static_cast<std::size_t>(i) % 8;
    const std::size_t p = 1 + static_cast<std::size_t>(i) % (n - 1);
    const Matrix y = detail::unit_columns(rng, n, p);
    auto f = [&](const Vector& flat) {
      const double fr = frobenius_norm(detail::gram_minus_identity(Matrix(n, p, flat.values())));
      return 0.05 * fr * fr;
    };
    const Vector analytic(ortho_grad(LayerColumns(y, 0.1)).span());
    const Vector numeric = fd_gradient(f, Vector(y.span()));
    t.upper(norm(analytic - numeric) / (1.0 + norm(analytic)));
  }
  return t.done();
}

/// complexity_loss(orthonormalized Y) ≤ complexity_loss(Y), strictly when
/// ‖YᵀY − I‖_F > 1e-3. The reported value is the largest
/// (after − before) / before, which must be ≤ 0. `sigmas` holds σ; the ridge
/// added to the Gram matrix is σ².
inline SuiteResult complexity_minimum_suite(const CheckOptions& opt, std::vector<double> sigmas,
                                            int instances = 100) {
  Rng rng(opt.seed + 3);
  detail::Tracker t("regularizer", "complexity_minimized_by_orthonormal_columns", 0.0);
  for (double sigma : sigmas) {
    for (int i = 0; i < instances; ++i) {
      const std::size_t n = 4 + static_cast<std::size_t>(i) % 13;
      const std::size_t p = 2 + static_cast<std::size_t>(i) % (n - 2);  // p = 1 is trivially orthonormal
      const Matrix y = detail::unit_columns(rng, n, p);
      const double before = complexity_loss(LayerColumns(y, 0.1, sigma));
      const double after = complexity_loss(LayerColumns(orthonormalize_columns(y), 0.1, sigma));
      t.upper((after - before) / before);
      const bool strict = frobenius_norm(detail::gram_minus_identity(y)) > 1e-3;
      if (strict && !(after < before)) t.fail("non-strict at a non-orthogonal instance");
    }
  }
  return t.done();
}

/// descent_check ≥ −1e-8 on random full-rank Y, and |descent_check| ≤ 1e-8 at
/// orthonormal Y.
inline std::vector<SuiteResult> descent_suites(const CheckOptions& opt, int instances = 1000) {
  Rng rng(opt.seed + 4);
  detail::Tracker random("regularizer", "descent_check_nonnegative", 1e-8);
  detail::Tracker ortho("regularizer", "descent_check_zero_at_orthonormal", 1e-8);
  random.annotate("(worst is the largest -descent_check)");
  const std::size_t dims[] = {4, 8, 32};
  for (int i = 0; i < instances; ++i) {
    const std::size_t n = dims[static_cast<std::size_t>(i) % 3];
    const std::size_t p = 2 + static_cast<std::size_t>(i / 3) % (n - 2);
    const std::size_t j = static_cast<std::size_t>(i) % p;
    random.upper(-descent_check(LayerColumns(detail::unit_columns(rng, n, p), 0.1), j));
    if (i % 10 == 0) {
      const Matrix q = orthonormalize_columns(gaussian_matrix(rng, n, p));
      ortho.upper(std::abs(descent_check(LayerColumns(q, 0.1), j)));
    }
  }
  return {random.done(), ortho.done()};
}

// ---- gradient checks ----

inline SuiteResult rayleigh_fd_suite(const CheckOptions& opt, int instances = 20) {
  Rng rng(opt.seed + 5);
  detail::Tracker t("gradcheck", "riemannian_fd_rayleigh", 1e-5);
  for (int i = 0; i < instances; ++i) {
    const Matrix g = gaussian_matrix(rng, 16, 16);
    const Matrix a = (g + transpose(g)) * 0.5;
    auto times = [&](const Vector& v) { return matmul(a, Matrix(16, 1, v.values())).col(0); };
    const GrassmannPoint y = detail::random_point(rng, 16);
    const FdReport r = riemannian_fd_check(
        [&](const GrassmannPoint& q) { return dot(q.vec(), times(q.vec())); },
        2.0 * times(y.vec()), y, 100, rng);
    t.upper(r.max_rel_error);
  }
  return t.done();
}

/// Riemannian check of the full training objective
/// L(batch) + Σ_W (α/2)‖WᵀW − I‖² with respect to `columns` randomly chosen
/// Grassmann columns, `directions` tangent directions each. Train-mode batch
/// norm on the fixed batch, running statistics untouched.
inline FdReport network_riemannian_check(Network& net, const Partition& part, double alpha,
                                         const Matrix& x, std::span<const int> labels, Rng& rng,
                                         int columns, int directions) {
  auto objective = [&] {
    double loss = softmax_ce(net.forward(x, Mode::kTrain, false), labels).loss;
    if (alpha > 0.0)
      for (std::size_t l : part.grassmann_layers) loss += ortho_loss(LayerColumns(net.weight(l), alpha));
    return loss;
  };
  net.backward(softmax_ce(net.forward(x, Mode::kTrain, false), labels).grad);
  FdReport report;
  if (part.grassmann.empty()) return report;
  for (int c = 0; c < columns; ++c) {
    const ColumnRef ref = part.grassmann[static_cast<std::size_t>(rng() % part.grassmann.size())];
    Vector grad = net.weight_grad(ref.layer).col(ref.column);
    if (alpha > 0.0) grad += ortho_grad(LayerColumns(net.weight(ref.layer), alpha)).col(ref.column);
    const Vector saved = net.weight(ref.layer).col(ref.column);
    const GrassmannPoint y = GrassmannPoint::from_unit(saved);
    auto f = [&](const GrassmannPoint& q) {
      net.weight(ref.layer).set_col(ref.column, q.vec());
      const double v = objective();
      net.weight(ref.layer).set_col(ref.column, saved);
      return v;
    };
    FdReport r = riemannian_fd_check(f, grad, y, directions, rng);
    for (auto& e : r.entries) {
      e.id = "layer " + std::to_string(ref.layer) + " column " + std::to_string(ref.column) + " " + e.id;
    }
    report.merge(r);
  }
  return report;
}

/// Trains a BN MLP on blobs with SGD-G and runs network_riemannian_check at
/// `checkpoints` evenly spaced points of the run (the first before any step).
inline SuiteResult network_fd_suite(const CheckOptions& opt, int checkpoints = 20) {
  detail::Tracker t("gradcheck", "riemannian_fd_bn_network", 1e-4);
  Rng rng(opt.seed + 7);
  BlobSpec spec;
  spec.n_per_class = 40;
  spec.classes = 3;
  spec.dim = 12;
  const Dataset ds = normalize(gen_blobs(opt.seed, spec), NormalizeMode::kStandard);
  Trainer trainer(make_mlp({ds.dim(), {10, 6}, ds.classes, false}), OptimizerSettings{});
  trainer.initialize(rng);
  const Split probe = gather(ds.train, minibatches(ds.train.size(), 32, rng).front());
  for (int c = 0; c < checkpoints; ++c) {
    const FdReport r = network_riemannian_check(trainer.net(), trainer.partition(),
                                                trainer.settings().alpha, probe.x, probe.y, rng, 4, 5);
    t.upper(r.max_rel_error);
    for (int s = 0; s < 3; ++s) {
      const Split b = gather(ds.train, minibatches(ds.train.size(), 32, rng).front());
      trainer.train_step(b.x, b.y, 0);
    }
  }
  return t.done();
}

// ---- batch-norm scale invariance ----

/// Dense(no bias) → BN in the exact (eps = 0) form: output unchanged and the
/// weight gradient scaled by 1/k when a column is multiplied by k.
inline std::vector<SuiteResult> bn_scale_suites(const CheckOptions& opt, int instances = 50) {
  Rng rng(opt.seed + 6);
  detail::Tracker fwd("nn", "bn_forward_scale_invariance", 1e-10);
  detail::Tracker grad("nn", "bn_weight_gradient_scales_as_1_over_k", 1e-8);
  for (int i = 0; i < instances; ++i) {
    DenseLayer dense(6, 4, false);
    dense.weight = gaussian_matrix(rng, 6, 4);
    BatchNormLayer bn(4, 1, false);
    bn.eps = 0.0;
    bn.scale = gaussian_vector(rng, 4);
    bn.offset = gaussian_vector(rng, 4);
    const Matrix x = gaussian_matrix(rng, 12, 6);
    const Matrix up = gaussian_matrix(rng, 12, 4);
    auto run = [&](const Matrix& w, Matrix* gw) {
      DenseLayer d = dense;
      BatchNormLayer b = bn;
      d.weight = w;
      const Matrix out = b.forward(d.forward(x, Mode::kTrain, false), Mode::kTrain, false);
      d.backward(b.backward(up));
      *gw = d.grad_weight;
      return out;
    };
    Matrix g1;
    const Matrix base = run(dense.weight, &g1);
    const std::size_t col = static_cast<std::size_t>(i) % 4;
    for (double k : {0.5, 3.0, 100.0}) {
      Matrix w = dense.weight;
      w.set_col(col, k * dense.weight.col(col));
      Matrix gk;
      const Matrix out = run(w, &gk);
      fwd.upper(frobenius_norm(out - base));
      grad.upper(norm(k * gk.col(col) - g1.col(col)) / (1.0 + norm(g1.col(col))));
    }
  }
  return {fwd.done(), grad.done()};
}

inline std::vector<SuiteResult> run_all_checks(const CheckOptions& opt) {
  std::vector<SuiteResult> all = manifold_suites(opt);
  for (auto& r : optimizer_suites(opt)) all.push_back(r);
  all.push_back(ortho_grad_suite(opt));
  all.push_back(complexity_minimum_suite(opt, {1e-1, 1e-2, 1e-3}));
  for (auto& r : descent_suites(opt)) all.push_back(r);
  all.push_back(rayleigh_fd_suite(opt));
  all.push_back(network_fd_suite(opt));
  for (auto& r : bn_scale_suites(opt)) all.push_back(r);
  return all;
}

}  // namespace grassbn
