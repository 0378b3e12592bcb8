#pragma once

// One optimization step over the product manifold
// G(1,n_1) × … × G(1,n_m) × R^l: forward, backward, orthogonality penalty on
// the Grassmann layers, then SGD-G / Adam-G for the points and SGD with
// Nesterov momentum for the Euclidean blocks.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "grassbn/errors.hpp"
#include "grassbn/layers.hpp"
#include "grassbn/manifold.hpp"
#include "grassbn/network.hpp"
#include "grassbn/optim.hpp"
#include "grassbn/regularizer.hpp"

namespace grassbn {

enum class OptimizerKind { kSgd, kSgdG, kAdamG };

inline std::string_view to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::kSgd: return "sgd";
    case OptimizerKind::kSgdG: return "sgd-g";
    case OptimizerKind::kAdamG: return "adam-g";
  }
  return "?";
}

inline OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "sgd-g") return OptimizerKind::kSgdG;
  if (name == "adam-g") return OptimizerKind::kAdamG;
  throw PreconditionError("unknown optimizer '" + std::string(name) +
                          "' (expected sgd, sgd-g or adam-g)");
}

struct OptimizerSettings {
  OptimizerKind kind = OptimizerKind::kSgdG;
  double eta_e = 0.01;
  double eta_g = 0.2;
  double gamma = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double nu = 0.1;
  double epsilon = 1e-8;
  double alpha = 0.1;  // orthogonality strength; 0 disables the penalty
  double momentum = 0.9;
  double weight_decay = 0.0005;
  bool nesterov = true;
  bool decay_bn = false;  // weight decay on BN scale/offset
  std::vector<int> milestones;
  double factor = 0.2;

  bool riemannian() const { return kind != OptimizerKind::kSgd; }
};

struct StepMetrics {
  double loss = 0.0;
  double ortho_loss = 0.0;
  std::size_t correct = 0;
  std::size_t batch = 0;
  double grassmann_grad_norm = 0.0;  // ‖(h_1, …, h_m)‖ before clipping
  double euclidean_grad_norm = 0.0;
  double mean_step_angle = 0.0;      // radians, over BN-feeding under-complete columns
  double max_step_norm = 0.0;        // max |d| over Grassmann points
  double max_gradient_travel = 0.0;  // SGD-G: max lr·|ĥ|/(1-γ)
};

/// Loss and accuracy of a dataset split in eval mode.
struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};

inline Evaluation evaluate(Network& net, const Matrix& x, std::span<const int> labels,
                           std::size_t chunk = 512) {
  if (x.rows() == 0) return {};
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < x.rows(); start += chunk) {
    const std::size_t count = std::min(chunk, x.rows() - start);
    Matrix part(count, x.cols(),
                std::vector<double>(x.row(start).data(), x.row(start).data() + count * x.cols()));
    const LossResult r = softmax_ce(net.forward(part, Mode::kEval, false),
                                    labels.subspan(start, count));
    loss += r.loss * static_cast<double>(count);
    correct += r.correct;
  }
  const double n = static_cast<double>(x.rows());
  return {loss / n, static_cast<double>(correct) / n};
}

inline double ortho_loss_of(const Matrix& w, double alpha) {
  return ortho_loss(LayerColumns(w, alpha));
}

/// Owns a network, its partition and all optimizer state.
class Trainer {
 public:
  Trainer(Network net, OptimizerSettings settings)
      : net_(std::move(net)), settings_(std::move(settings)),
        partition_(partition_parameters(net_, settings_.riemannian())),
        eligible_(partition_parameters(net_, true)) {
    validate();
    reset_state();
  }

  Network& net() { return net_; }
  const Network& net() const { return net_; }
  const OptimizerSettings& settings() const { return settings_; }
  const Partition& partition() const { return partition_; }
  long long steps() const { return steps_; }

  /// Random initialization consistent with this trainer's partition.
  void initialize(Rng& rng) { initialize_parameters(net_, partition_, rng); }

  double lr_e(int epoch) const {
    return schedule_lr({settings_.eta_e, settings_.milestones, settings_.factor}, epoch);
  }
  double lr_g(int epoch) const {
    return schedule_lr({settings_.eta_g, settings_.milestones, settings_.factor}, epoch);
  }

  /// Summed (α/2)‖ŴᵀŴ - I‖² over every under-complete BN-feeding matrix, with
  /// columns normalized first so the value is comparable across optimizers.
  double ortho_loss_total() const {
    if (!(settings_.alpha > 0.0)) return 0.0;
    double total = 0.0;
    for (std::size_t layer : eligible_.grassmann_layers) {
      Matrix w = net_.weight(layer);
      for (std::size_t c = 0; c < w.cols(); ++c) {
        const Vector col = w.col(c);
        w.set_col(c, col * (1.0 / norm(col)));
      }
      total += ortho_loss_of(w, settings_.alpha);
    }
    return total;
  }

  StepMetrics train_step(const Matrix& x, std::span<const int> labels, int epoch) {
    if (x.rows() == 0) throw PreconditionError("train_step: empty batch");
    StepMetrics m;
    m.batch = x.rows();

    const LossResult fwd = softmax_ce(net_.forward(x, Mode::kTrain, true), labels);
    if (!std::isfinite(fwd.loss)) {
      throw NumericalError("train_step: non-finite loss at step " + std::to_string(steps_));
    }
    m.loss = fwd.loss;
    m.correct = fwd.correct;
    net_.backward(fwd.grad);

    if (settings_.riemannian() && settings_.alpha > 0.0) {
      for (std::size_t layer : partition_.grassmann_layers) {
        const LayerColumns cols(net_.weight(layer), settings_.alpha);
        m.ortho_loss += ortho_loss(cols);
        net_.weight_grad(layer) += ortho_grad(cols);
      }
    } else {
      m.ortho_loss = ortho_loss_total();
    }

    // A zero rate freezes that side of the partition (used for dry runs).
    const std::vector<Vector> before = eligible_columns();
    if (lr_g(epoch) > 0.0) step_grassmann(lr_g(epoch), m);
    if (lr_e(epoch) > 0.0) step_euclidean(lr_e(epoch), m);
    m.mean_step_angle = mean_angle_since(before);
    ++steps_;
    return m;
  }

  // Optimizer state, exposed for checkpoints and tests.
  std::vector<SgdGState>& sgdg_states() { return sgdg_; }
  std::vector<AdamGState>& adamg_states() { return adamg_; }
  std::vector<EuclideanSgdState>& euclidean_states() { return euclid_; }
  const std::vector<SgdGState>& sgdg_states() const { return sgdg_; }
  const std::vector<AdamGState>& adamg_states() const { return adamg_; }
  const std::vector<EuclideanSgdState>& euclidean_states() const { return euclid_; }
  void set_steps(long long steps) { steps_ = steps; }

 private:
  void validate() const {
    const auto& s = settings_;
    if (!(s.eta_e >= 0.0) || !(s.eta_g >= 0.0)) {
      throw PreconditionError("Trainer: learning rates must be non-negative");
    }
    if (!(s.nu > 0.0)) throw PreconditionError("Trainer: nu must be positive");
    if (!(s.gamma >= 0.0 && s.gamma < 1.0)) throw PreconditionError("Trainer: gamma must lie in [0,1)");
    if (!(s.alpha >= 0.0)) throw PreconditionError("Trainer: alpha must be non-negative");
    LrSchedule{s.eta_e, s.milestones, s.factor}.validate();
  }

  void reset_state() {
    sgdg_.clear();
    adamg_.clear();
    euclid_.clear();
    for (const ColumnRef& ref : partition_.grassmann) {
      const std::size_t n = net_.weight(ref.layer).rows();
      if (settings_.kind == OptimizerKind::kSgdG) {
        sgdg_.push_back(SgdGState::zero(n, {settings_.eta_g, settings_.gamma, settings_.nu}));
      } else {
        adamg_.push_back(AdamGState::zero(
            n, {settings_.eta_g, settings_.beta1, settings_.beta2, settings_.nu, settings_.epsilon}));
      }
    }
    for (const ParamRef& ref : partition_.euclidean) {
      euclid_.push_back(EuclideanSgdState::zero(
          net_.param(ref).size(),
          {settings_.eta_e, settings_.momentum, settings_.weight_decay, settings_.nesterov}));
    }
  }

  void step_grassmann(double lr, StepMetrics& m) {
    double grad_sq = 0.0;
    for (std::size_t k = 0; k < partition_.grassmann.size(); ++k) {
      const ColumnRef& ref = partition_.grassmann[k];
      Matrix& w = net_.weight(ref.layer);
      const GrassmannPoint y = GrassmannPoint::from_unit(w.col(ref.column));
      const Vector g = net_.weight_grad(ref.layer).col(ref.column);
      try {
        StepReport report;
        if (settings_.kind == OptimizerKind::kSgdG) {
          SgdGResult r = sgdg_step(y, g, sgdg_[k], lr);
          w.set_col(ref.column, r.point.vec());
          sgdg_[k] = std::move(r.state);
          report = r.report;
          m.max_gradient_travel = std::max(
              m.max_gradient_travel, lr * report.clipped_norm / (1.0 - settings_.gamma));
        } else {
          AdamGResult r = adamg_step(y, g, adamg_[k], lr);
          w.set_col(ref.column, r.point.vec());
          adamg_[k] = std::move(r.state);
          report = r.report;
        }
        grad_sq += report.grad_norm * report.grad_norm;
        m.max_step_norm = std::max(m.max_step_norm, report.step_norm);
      } catch (const NumericalError& e) {
        throw NumericalError(std::string(e.what()) + " (layer " + std::to_string(ref.layer) +
                             ", column " + std::to_string(ref.column) + ")");
      }
    }
    m.grassmann_grad_norm = std::sqrt(grad_sq);
  }

  void step_euclidean(double lr, StepMetrics& m) {
    double grad_sq = 0.0;
    for (std::size_t k = 0; k < partition_.euclidean.size(); ++k) {
      const ParamRef& ref = partition_.euclidean[k];
      const auto g = net_.grad(ref);
      for (double v : g) grad_sq += v * v;
      const bool bn = ref.kind == ParamKind::kBnScale || ref.kind == ParamKind::kBnOffset;
      try {
        euclidean_sgd_update(net_.param(ref), g, euclid_[k], lr, bn ? settings_.decay_bn : true);
      } catch (const NumericalError& e) {
        throw NumericalError(std::string(e.what()) + " (layer " + std::to_string(ref.layer) +
                             ", " + to_string(ref.kind) + ")");
      }
    }
    m.euclidean_grad_norm = std::sqrt(grad_sq);
  }

  std::vector<Vector> eligible_columns() const {
    std::vector<Vector> cols;
    cols.reserve(eligible_.grassmann.size());
    for (const ColumnRef& ref : eligible_.grassmann) {
      cols.push_back(net_.weight(ref.layer).col(ref.column));
    }
    return cols;
  }

  double mean_angle_since(const std::vector<Vector>& before) const {
    if (before.empty()) return 0.0;
    double sum = 0.0;
    for (std::size_t k = 0; k < before.size(); ++k) {
      const ColumnRef& ref = eligible_.grassmann[k];
      sum += geodesic_angle(GrassmannPoint::normalized(before[k]),
                            GrassmannPoint::normalized(net_.weight(ref.layer).col(ref.column)));
    }
    return sum / static_cast<double>(before.size());
  }

  Network net_;
  OptimizerSettings settings_;
  Partition partition_;
  Partition eligible_;
  std::vector<SgdGState> sgdg_;
  std::vector<AdamGState> adamg_;
  std::vector<EuclideanSgdState> euclid_;
  long long steps_ = 0;
};

}  // namespace grassbn
