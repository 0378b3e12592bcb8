#pragma once

// Layers with hand-written backward passes. Activations are batch × features
// matrices; image activations are stored NHWC, i.e. each row is an H·W·C
// block with the channel index varying fastest.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "grassbn/errors.hpp"
#include "grassbn/numerics.hpp"

namespace grassbn {

enum class Mode { kTrain, kEval };

struct ImageShape {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;

  std::size_t size() const { return height * width * channels; }
  friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

/// y = x·W (+ b). W is in × out, so column j holds the weights of output j.
struct DenseLayer {
  Matrix weight;
  bool has_bias = false;
  Vector bias;

  Matrix grad_weight;
  Vector grad_bias;
  Matrix input;

  DenseLayer() = default;
  DenseLayer(std::size_t in, std::size_t out, bool with_bias)
      : weight(in, out), has_bias(with_bias), bias(with_bias ? out : 0),
        grad_weight(in, out), grad_bias(with_bias ? out : 0) {}

  std::size_t in_features() const { return weight.rows(); }
  std::size_t out_features() const { return weight.cols(); }

  Matrix forward(const Matrix& x, Mode, bool) {
    if (x.cols() != in_features()) {
      throw DimensionError("dense_forward: input width " + std::to_string(x.cols()) +
                           " vs " + std::to_string(in_features()));
    }
    input = x;
    Matrix y = matmul(x, weight);
    if (has_bias) {
      for (std::size_t r = 0; r < y.rows(); ++r)
        for (std::size_t c = 0; c < y.cols(); ++c) y(r, c) += bias[c];
    }
    return y;
  }

  Matrix backward(const Matrix& dy) {
    if (dy.cols() != out_features() || dy.rows() != input.rows()) {
      throw DimensionError("dense_backward: upstream gradient shape mismatch");
    }
    grad_weight = matmul_tn(input, dy);
    if (has_bias) {
      grad_bias = Vector(out_features());
      for (std::size_t r = 0; r < dy.rows(); ++r)
        for (std::size_t c = 0; c < dy.cols(); ++c) grad_bias[c] += dy(r, c);
    }
    return matmul_nt(dy, weight);
  }
};

/// 2-D convolution through im2col. The filter bank is stored unrolled as a
/// (k·k·c_in) × c_out matrix whose rows are ordered (ky, kx, c_in), so each
/// output channel's filter is one column, the same layout as DenseLayer.
struct ConvLayer {
  ImageShape in_shape;
  std::size_t out_channels = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 1;
  Matrix weight;
  bool has_bias = false;
  Vector bias;

  Matrix grad_weight;
  Vector grad_bias;
  Matrix columns;  // im2col cache of the last forward pass
  std::size_t batch = 0;

  ConvLayer() = default;
  ConvLayer(ImageShape in, std::size_t out_c, std::size_t k, std::size_t s, std::size_t pad,
            bool with_bias)
      : in_shape(in), out_channels(out_c), kernel(k), stride(s), padding(pad),
        weight(k * k * in.channels, out_c), has_bias(with_bias), bias(with_bias ? out_c : 0),
        grad_weight(k * k * in.channels, out_c), grad_bias(with_bias ? out_c : 0) {
    if (k == 0 || s == 0 || in.height + 2 * pad < k || in.width + 2 * pad < k) {
      throw DimensionError("ConvLayer: kernel does not fit the padded input");
    }
  }

  ImageShape out_shape() const {
    return {(in_shape.height + 2 * padding - kernel) / stride + 1,
            (in_shape.width + 2 * padding - kernel) / stride + 1, out_channels};
  }
  std::size_t patch_size() const { return kernel * kernel * in_shape.channels; }

  Matrix forward(const Matrix& x, Mode, bool) {
    if (x.cols() != in_shape.size()) {
      throw DimensionError("conv_forward: input width " + std::to_string(x.cols()) +
                           " vs " + std::to_string(in_shape.size()));
    }
    batch = x.rows();
    columns = im2col(x);
    Matrix y = matmul(columns, weight);  // (B·OH·OW) × C_out, NHWC order
    if (has_bias) {
      for (std::size_t r = 0; r < y.rows(); ++r)
        for (std::size_t c = 0; c < out_channels; ++c) y(r, c) += bias[c];
    }
    return std::move(y).reshaped(batch, out_shape().size());
  }

  Matrix backward(const Matrix& dy) {
    const ImageShape os = out_shape();
    if (dy.rows() != batch || dy.cols() != os.size()) {
      throw DimensionError("conv_backward: upstream gradient shape mismatch");
    }
    const Matrix dy2 = dy.reshaped(batch * os.height * os.width, out_channels);
    grad_weight = matmul_tn(columns, dy2);
    if (has_bias) {
      grad_bias = Vector(out_channels);
      for (std::size_t r = 0; r < dy2.rows(); ++r)
        for (std::size_t c = 0; c < out_channels; ++c) grad_bias[c] += dy2(r, c);
    }
    return col2im(matmul_nt(dy2, weight));
  }

 private:
  template <typename Fn>
  void for_each_tap(Fn&& fn) const {
    const ImageShape os = out_shape();
    const std::size_t c_in = in_shape.channels;
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t oi = 0; oi < os.height; ++oi)
        for (std::size_t oj = 0; oj < os.width; ++oj) {
          const std::size_t row = (b * os.height + oi) * os.width + oj;
          for (std::size_t ky = 0; ky < kernel; ++ky) {
            const long ii = static_cast<long>(oi * stride + ky) - static_cast<long>(padding);
            if (ii < 0 || ii >= static_cast<long>(in_shape.height)) continue;
            for (std::size_t kx = 0; kx < kernel; ++kx) {
              const long jj = static_cast<long>(oj * stride + kx) - static_cast<long>(padding);
              if (jj < 0 || jj >= static_cast<long>(in_shape.width)) continue;
              const std::size_t src =
                  (static_cast<std::size_t>(ii) * in_shape.width + static_cast<std::size_t>(jj)) *
                  c_in;
              const std::size_t dst = (ky * kernel + kx) * c_in;
              for (std::size_t c = 0; c < c_in; ++c) fn(b, src + c, row, dst + c);
            }
          }
        }
  }

  Matrix im2col(const Matrix& x) const {
    const ImageShape os = out_shape();
    Matrix cols(batch * os.height * os.width, patch_size());
    for_each_tap([&](std::size_t b, std::size_t src, std::size_t row, std::size_t dst) {
      cols(row, dst) = x(b, src);
    });
    return cols;
  }

  Matrix col2im(const Matrix& dcols) const {
    Matrix dx(batch, in_shape.size());
    for_each_tap([&](std::size_t b, std::size_t src, std::size_t row, std::size_t dst) {
      dx(b, src) += dcols(row, dst);
    });
    return dx;
  }
};

/// Batch normalization per channel. For dense inputs spatial == 1; for image
/// inputs the statistics are pooled over the batch and all H·W positions.
struct BatchNormLayer {
  std::size_t channels = 0;
  std::size_t spatial = 1;
  Vector scale;
  Vector offset;
  Vector running_mean;
  Vector running_var;
  bool scale_frozen = false;
  double momentum_stats = 0.1;
  double eps = 1e-5;

  Vector grad_scale;
  Vector grad_offset;
  Matrix xhat;
  Vector inv_std;
  Mode cached_mode = Mode::kTrain;

  BatchNormLayer() = default;
  BatchNormLayer(std::size_t c, std::size_t positions, bool freeze_scale)
      : channels(c), spatial(positions), scale(c, 1.0), offset(c), running_mean(c),
        running_var(c, 1.0), scale_frozen(freeze_scale), grad_scale(c), grad_offset(c) {}

  std::size_t width() const { return channels * spatial; }

  Matrix forward(const Matrix& x, Mode mode, bool update_stats) {
    if (x.cols() != width()) {
      throw DimensionError("bn_forward: input width " + std::to_string(x.cols()) + " vs " +
                           std::to_string(width()));
    }
    cached_mode = mode;
    const std::size_t count = x.rows() * spatial;
    Vector mean(channels), var(channels);
    if (mode == Mode::kTrain) {
      if (x.rows() < 2) throw PreconditionError("bn_forward: training needs batch size >= 2");
      for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t k = 0; k < width(); ++k) mean[k % channels] += x(r, k);
      mean *= 1.0 / static_cast<double>(count);
      for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t k = 0; k < width(); ++k) {
          const double d = x(r, k) - mean[k % channels];
          var[k % channels] += d * d;
        }
      var *= 1.0 / static_cast<double>(count);
      if (update_stats) {
        const double unbiased = static_cast<double>(count) / static_cast<double>(count - 1);
        for (std::size_t c = 0; c < channels; ++c) {
          running_mean[c] = (1.0 - momentum_stats) * running_mean[c] + momentum_stats * mean[c];
          running_var[c] =
              (1.0 - momentum_stats) * running_var[c] + momentum_stats * var[c] * unbiased;
        }
      }
    } else {
      mean = running_mean;
      var = running_var;
    }
    inv_std = Vector(channels);
    for (std::size_t c = 0; c < channels; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + eps);

    xhat = Matrix(x.rows(), width());
    Matrix y(x.rows(), width());
    for (std::size_t r = 0; r < x.rows(); ++r)
      for (std::size_t k = 0; k < width(); ++k) {
        const std::size_t c = k % channels;
        const double n = (x(r, k) - mean[c]) * inv_std[c];
        xhat(r, k) = n;
        y(r, k) = scale[c] * n + offset[c];
      }
    return y;
  }

  Matrix backward(const Matrix& dy) {
    if (dy.rows() != xhat.rows() || dy.cols() != width()) {
      throw DimensionError("bn_backward: upstream gradient shape mismatch");
    }
    grad_scale = Vector(channels);
    grad_offset = Vector(channels);
    Vector sum_dxhat(channels), sum_dxhat_xhat(channels);
    for (std::size_t r = 0; r < dy.rows(); ++r)
      for (std::size_t k = 0; k < width(); ++k) {
        const std::size_t c = k % channels;
        grad_scale[c] += dy(r, k) * xhat(r, k);
        grad_offset[c] += dy(r, k);
        const double dxh = dy(r, k) * scale[c];
        sum_dxhat[c] += dxh;
        sum_dxhat_xhat[c] += dxh * xhat(r, k);
      }
    if (scale_frozen) grad_scale = Vector(channels);

    Matrix dx(dy.rows(), width());
    if (cached_mode == Mode::kEval) {
      for (std::size_t r = 0; r < dy.rows(); ++r)
        for (std::size_t k = 0; k < width(); ++k) {
          const std::size_t c = k % channels;
          dx(r, k) = dy(r, k) * scale[c] * inv_std[c];
        }
      return dx;
    }
    const double count = static_cast<double>(dy.rows() * spatial);
    for (std::size_t r = 0; r < dy.rows(); ++r)
      for (std::size_t k = 0; k < width(); ++k) {
        const std::size_t c = k % channels;
        const double dxh = dy(r, k) * scale[c];
        dx(r, k) = inv_std[c] / count *
                   (count * dxh - sum_dxhat[c] - xhat(r, k) * sum_dxhat_xhat[c]);
      }
    return dx;
  }
};

struct ReluLayer {
  std::vector<std::uint8_t> active;

  Matrix forward(const Matrix& x, Mode, bool) {
    Matrix y = x;
    active.assign(x.size(), 0);
    auto v = y.span();
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (v[i] > 0.0) {
        active[i] = 1;
      } else {
        v[i] = 0.0;
      }
    }
    return y;
  }

  Matrix backward(const Matrix& dy) {
    if (dy.size() != active.size()) throw DimensionError("relu_backward: shape mismatch");
    Matrix dx = dy;
    auto v = dx.span();
    for (std::size_t i = 0; i < v.size(); ++i)
      if (!active[i]) v[i] = 0.0;
    return dx;
  }
};

/// Averages each channel over all spatial positions: B × (H·W·C) → B × C.
struct GlobalAvgPoolLayer {
  ImageShape shape;

  Matrix forward(const Matrix& x, Mode, bool) {
    if (x.cols() != shape.size()) throw DimensionError("global_avg_pool: width mismatch");
    const std::size_t positions = shape.height * shape.width;
    Matrix y(x.rows(), shape.channels);
    for (std::size_t r = 0; r < x.rows(); ++r)
      for (std::size_t k = 0; k < x.cols(); ++k) y(r, k % shape.channels) += x(r, k);
    y *= 1.0 / static_cast<double>(positions);
    return y;
  }

  Matrix backward(const Matrix& dy) {
    const std::size_t positions = shape.height * shape.width;
    Matrix dx(dy.rows(), shape.size());
    const double inv = 1.0 / static_cast<double>(positions);
    for (std::size_t r = 0; r < dy.rows(); ++r)
      for (std::size_t k = 0; k < dx.cols(); ++k) dx(r, k) = dy(r, k % shape.channels) * inv;
    return dx;
  }
};

using Layer = std::variant<DenseLayer, ConvLayer, BatchNormLayer, ReluLayer, GlobalAvgPoolLayer>;

struct LossResult {
  double loss = 0.0;      // mean cross-entropy over the batch
  Matrix grad;            // d loss / d logits
  std::size_t correct = 0;
};

/// Mean softmax cross-entropy and its gradient with respect to the logits.
inline LossResult softmax_ce(const Matrix& logits, std::span<const int> labels) {
  if (logits.rows() != labels.size()) {
    throw DimensionError("softmax_ce: " + std::to_string(logits.rows()) + " rows but " +
                         std::to_string(labels.size()) + " labels");
  }
  if (logits.rows() == 0) throw PreconditionError("softmax_ce: empty batch");
  LossResult out;
  out.grad = Matrix(logits.rows(), logits.cols());
  const double inv_batch = 1.0 / static_cast<double>(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto z = logits.row(r);
    const int label = labels[r];
    if (label < 0 || static_cast<std::size_t>(label) >= z.size()) {
      throw PreconditionError("softmax_ce: label " + std::to_string(label) + " out of range");
    }
    std::size_t arg = 0;
    for (std::size_t c = 1; c < z.size(); ++c)
      if (z[c] > z[arg]) arg = c;
    if (arg == static_cast<std::size_t>(label)) ++out.correct;
    const double zmax = z[arg];
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - zmax);
    const double lse = zmax + std::log(sum);
    out.loss += (lse - z[static_cast<std::size_t>(label)]) * inv_batch;
    for (std::size_t c = 0; c < z.size(); ++c) {
      const double p = std::exp(z[c] - lse);
      out.grad(r, c) = (p - (c == static_cast<std::size_t>(label) ? 1.0 : 0.0)) * inv_batch;
    }
  }
  return out;
}

}  // namespace grassbn
