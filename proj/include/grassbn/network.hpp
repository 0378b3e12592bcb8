#pragma once

// Feed-forward networks over the layers in layers.hpp, and the split of their
// trainable parameters into points on G(1,n) and ordinary Euclidean blocks.

#include <cmath>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "grassbn/errors.hpp"
#include "grassbn/layers.hpp"
#include "grassbn/numerics.hpp"
#include "grassbn/random.hpp"

namespace grassbn {

enum class ParamKind { kWeight, kBias, kBnScale, kBnOffset };

inline const char* to_string(ParamKind kind) {
  switch (kind) {
    case ParamKind::kWeight: return "weight";
    case ParamKind::kBias: return "bias";
    case ParamKind::kBnScale: return "bn_scale";
    case ParamKind::kBnOffset: return "bn_offset";
  }
  return "?";
}

/// A whole parameter tensor of one layer.
struct ParamRef {
  std::size_t layer = 0;
  ParamKind kind = ParamKind::kWeight;
  friend bool operator==(const ParamRef&, const ParamRef&) = default;
};

/// One column of a weight matrix, treated as a point on G(1, rows).
struct ColumnRef {
  std::size_t layer = 0;
  std::size_t column = 0;
  friend bool operator==(const ColumnRef&, const ColumnRef&) = default;
};

class Network {
 public:
  Network() = default;
  Network(std::size_t input_dim, std::vector<Layer> layers)
      : input_dim_(input_dim), layers_(std::move(layers)) {}

  std::size_t input_dim() const { return input_dim_; }
  std::size_t size() const { return layers_.size(); }
  const std::vector<Layer>& layers() const { return layers_; }
  Layer& layer(std::size_t i) { return layers_.at(i); }
  const Layer& layer(std::size_t i) const { return layers_.at(i); }

  /// Logits for a batch. Train mode normalizes with batch statistics and, if
  /// update_stats is set, advances the running BN statistics.
  Matrix forward(const Matrix& x, Mode mode, bool update_stats = true) {
    if (x.cols() != input_dim_) {
      throw DimensionError("Network::forward: input width " + std::to_string(x.cols()) +
                           " vs " + std::to_string(input_dim_));
    }
    Matrix a = x;
    for (auto& layer : layers_) {
      a = std::visit([&](auto& l) { return l.forward(a, mode, update_stats); }, layer);
    }
    return a;
  }

  /// Back-propagates d loss / d logits, overwriting every layer's gradients.
  Matrix backward(const Matrix& dlogits) {
    Matrix g = dlogits;
    for (std::size_t i = layers_.size(); i-- > 0;) {
      g = std::visit([&](auto& l) { return l.backward(g); }, layers_[i]);
    }
    return g;
  }

  bool has_weight(std::size_t i) const {
    return std::holds_alternative<DenseLayer>(layers_[i]) ||
           std::holds_alternative<ConvLayer>(layers_[i]);
  }

  /// True when layer i computes Wᵀx that goes straight into batch norm.
  bool feeds_batch_norm(std::size_t i) const {
    return has_weight(i) && i + 1 < layers_.size() &&
           std::holds_alternative<BatchNormLayer>(layers_[i + 1]);
  }

  Matrix& weight(std::size_t i) {
    if (auto* d = std::get_if<DenseLayer>(&layers_[i])) return d->weight;
    if (auto* c = std::get_if<ConvLayer>(&layers_[i])) return c->weight;
    throw PreconditionError("Network::weight: layer " + std::to_string(i) + " has no weights");
  }
  const Matrix& weight(std::size_t i) const { return const_cast<Network*>(this)->weight(i); }

  const Matrix& weight_grad(std::size_t i) const {
    if (auto* d = std::get_if<DenseLayer>(&layers_[i])) return d->grad_weight;
    if (auto* c = std::get_if<ConvLayer>(&layers_[i])) return c->grad_weight;
    throw PreconditionError("Network::weight_grad: layer " + std::to_string(i) +
                            " has no weights");
  }
  Matrix& weight_grad(std::size_t i) {
    return const_cast<Matrix&>(std::as_const(*this).weight_grad(i));
  }

  std::span<double> param(const ParamRef& ref) { return locate(ref, false); }
  std::span<const double> param(const ParamRef& ref) const {
    return const_cast<Network*>(this)->locate(ref, false);
  }
  std::span<const double> grad(const ParamRef& ref) const {
    return const_cast<Network*>(this)->locate(ref, true);
  }
  std::span<double> grad_mut(const ParamRef& ref) { return locate(ref, true); }

  /// Every trainable tensor in layer order.
  std::vector<ParamRef> trainable() const {
    std::vector<ParamRef> refs;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      if (const auto* d = std::get_if<DenseLayer>(&layers_[i])) {
        refs.push_back({i, ParamKind::kWeight});
        if (d->has_bias) refs.push_back({i, ParamKind::kBias});
      } else if (const auto* c = std::get_if<ConvLayer>(&layers_[i])) {
        refs.push_back({i, ParamKind::kWeight});
        if (c->has_bias) refs.push_back({i, ParamKind::kBias});
      } else if (const auto* b = std::get_if<BatchNormLayer>(&layers_[i])) {
        if (!b->scale_frozen) refs.push_back({i, ParamKind::kBnScale});
        refs.push_back({i, ParamKind::kBnOffset});
      }
    }
    return refs;
  }

  std::size_t trainable_scalars() const {
    std::size_t n = 0;
    for (const auto& ref : trainable()) n += param(ref).size();
    return n;
  }

 private:
  std::span<double> locate(const ParamRef& ref, bool gradient) {
    Layer& layer = layers_.at(ref.layer);
    auto fail = [&]() -> std::span<double> {
      throw PreconditionError(std::string("Network: layer ") + std::to_string(ref.layer) +
                              " has no " + to_string(ref.kind));
    };
    auto weighted = [&](auto& l) -> std::span<double> {
      if (ref.kind == ParamKind::kWeight) return gradient ? l.grad_weight.span() : l.weight.span();
      if (ref.kind == ParamKind::kBias && l.has_bias)
        return gradient ? l.grad_bias.span() : l.bias.span();
      return fail();
    };
    if (auto* d = std::get_if<DenseLayer>(&layer)) return weighted(*d);
    if (auto* c = std::get_if<ConvLayer>(&layer)) return weighted(*c);
    if (auto* b = std::get_if<BatchNormLayer>(&layer)) {
      if (ref.kind == ParamKind::kBnScale) return gradient ? b->grad_scale.span() : b->scale.span();
      if (ref.kind == ParamKind::kBnOffset)
        return gradient ? b->grad_offset.span() : b->offset.span();
    }
    return fail();
  }

  std::size_t input_dim_ = 0;
  std::vector<Layer> layers_;
};

/// Split of the trainable parameters: columns of under-complete BN-feeding
/// weight matrices become Grassmann points; everything else is Euclidean.
struct Partition {
  std::vector<ColumnRef> grassmann;
  std::vector<std::size_t> grassmann_layers;  // layers whose columns are all points
  std::vector<ParamRef> euclidean;

  std::size_t grassmann_scalars = 0;
  std::size_t euclidean_scalars = 0;

  bool is_grassmann_layer(std::size_t layer) const {
    for (std::size_t l : grassmann_layers)
      if (l == layer) return true;
    return false;
  }
};

/// A weight matrix is Grassmann-partitioned iff it feeds batch norm and has
/// more rows than columns (n > p). With riemannian = false every parameter is
/// Euclidean (the SGD baseline).
inline Partition partition_parameters(const Network& net, bool riemannian = true) {
  Partition part;
  for (const ParamRef& ref : net.trainable()) {
    const auto n = net.param(ref).size();
    if (riemannian && ref.kind == ParamKind::kWeight && net.feeds_batch_norm(ref.layer)) {
      const Matrix& w = net.weight(ref.layer);
      if (w.rows() > w.cols()) {
        part.grassmann_layers.push_back(ref.layer);
        for (std::size_t c = 0; c < w.cols(); ++c) part.grassmann.push_back({ref.layer, c});
        part.grassmann_scalars += n;
        continue;
      }
    }
    part.euclidean.push_back(ref);
    part.euclidean_scalars += n;
  }
  return part;
}

/// Columns of Grassmann layers become uniformly random unit vectors; other
/// weights get fan-in scaled Gaussians (He init). Biases and BN offsets start
/// at zero, BN scales at one.
inline void initialize_parameters(Network& net, const Partition& part, Rng& rng) {
  for (std::size_t i = 0; i < net.size(); ++i) {
    if (!net.has_weight(i)) continue;
    Matrix& w = net.weight(i);
    if (part.is_grassmann_layer(i)) {
      for (std::size_t c = 0; c < w.cols(); ++c) w.set_col(c, random_unit_vector(rng, w.rows()));
    } else {
      const double stddev = std::sqrt(2.0 / static_cast<double>(w.rows()));
      w = gaussian_matrix(rng, w.rows(), w.cols(), stddev);
    }
  }
}

/// MLP: [Dense(no bias) → BN → ReLU] per hidden width, then Dense(with bias).
struct MlpSpec {
  std::size_t input = 0;
  std::vector<std::size_t> hidden;
  std::size_t classes = 2;
  bool freeze_bn_scale = false;
};

inline Network make_mlp(const MlpSpec& spec) {
  if (spec.input == 0 || spec.classes < 2) throw PreconditionError("make_mlp: bad sizes");
  std::vector<Layer> layers;
  std::size_t width = spec.input;
  for (std::size_t h : spec.hidden) {
    if (h == 0) throw PreconditionError("make_mlp: zero-width hidden layer");
    layers.emplace_back(DenseLayer(width, h, false));
    layers.emplace_back(BatchNormLayer(h, 1, spec.freeze_bn_scale));
    layers.emplace_back(ReluLayer{});
    width = h;
  }
  layers.emplace_back(DenseLayer(width, spec.classes, true));
  return Network(spec.input, std::move(layers));
}

/// Small conv net: per entry of `channels` a 3×3 conv (no bias) → BN → ReLU,
/// stride 1 for the first block and 2 afterwards; then global average pooling
/// and a Dense classifier with bias.
struct ConvSpec {
  ImageShape input;
  std::vector<std::size_t> channels;
  std::size_t classes = 2;
  bool freeze_bn_scale = false;
};

inline Network make_conv_net(const ConvSpec& spec) {
  if (spec.input.size() == 0 || spec.channels.empty() || spec.classes < 2) {
    throw PreconditionError("make_conv_net: bad sizes");
  }
  std::vector<Layer> layers;
  ImageShape shape = spec.input;
  for (std::size_t b = 0; b < spec.channels.size(); ++b) {
    ConvLayer conv(shape, spec.channels[b], 3, b == 0 ? 1 : 2, 1, false);
    shape = conv.out_shape();
    layers.emplace_back(std::move(conv));
    layers.emplace_back(BatchNormLayer(shape.channels, shape.height * shape.width,
                                       spec.freeze_bn_scale));
    layers.emplace_back(ReluLayer{});
  }
  layers.emplace_back(GlobalAvgPoolLayer{shape});
  layers.emplace_back(DenseLayer(shape.channels, spec.classes, true));
  return Network(spec.input.size(), std::move(layers));
}

}  // namespace grassbn
