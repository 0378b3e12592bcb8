#pragma once

// Datasets for desk-scale runs: synthetic blobs and spirals, IDX and CSV
// loaders, train-split normalization, and mini-batch sampling.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "grassbn/errors.hpp"
#include "grassbn/layers.hpp"
#include "grassbn/numerics.hpp"
#include "grassbn/random.hpp"

namespace grassbn {

struct Split {
  Matrix x;
  std::vector<int> y;

  std::size_t size() const { return y.size(); }
};

struct NormStats {
  Vector mean;
  Vector scale;                                // divisor per feature
  std::vector<std::size_t> constant_features;  // zero-variance columns in the train split
};

struct Dataset {
  Split train;
  Split test;
  std::size_t classes = 0;
  ImageShape shape;  // {1, 1, dim} for flat features
  NormStats stats;

  std::size_t dim() const { return train.x.cols(); }
};

inline void validate_labels(const std::vector<int>& labels, std::size_t classes,
                            const std::string& where) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw ValidationError(where + ": label " + std::to_string(labels[i]) + " at sample " +
                            std::to_string(i) + " outside [0, " + std::to_string(classes) + ")");
    }
  }
}

inline void validate(const Dataset& ds) {
  if (ds.classes < 2) throw ValidationError("dataset: need at least 2 classes");
  if (ds.train.size() == 0) throw ValidationError("dataset: empty train split");
  if (ds.train.x.rows() != ds.train.size() || ds.test.x.rows() != ds.test.size()) {
    throw DimensionError("dataset: feature rows differ from label count");
  }
  if (ds.test.size() > 0 && ds.test.x.cols() != ds.train.x.cols()) {
    throw DimensionError("dataset: train and test feature widths differ");
  }
  if (ds.shape.size() != ds.train.x.cols()) {
    throw DimensionError("dataset: shape does not match feature width");
  }
  validate_labels(ds.train.y, ds.classes, "train split");
  validate_labels(ds.test.y, ds.classes, "test split");
}

// ---- synthetic data ----

/// Gaussian blobs. Centers sit at distance `radius` from the origin and are
/// mutually orthogonal when classes ≤ dim (pairwise distance radius·√2).
/// Noise is rejected beyond 3·spread·√dim, so whenever that bound is below
/// half the smallest center distance the nearest-centroid rule, which is
/// linear, classifies every sample correctly.
struct BlobSpec {
  std::size_t n_per_class = 200;
  std::size_t test_per_class = 50;
  std::size_t classes = 4;
  std::size_t dim = 16;
  double spread = 0.1;
  double radius = 1.0;
};

inline Matrix blob_centers(Rng& rng, const BlobSpec& spec) {
  Matrix centers(spec.classes, spec.dim);
  if (spec.classes <= spec.dim) {
    const Matrix q = orthonormalize_columns(gaussian_matrix(rng, spec.dim, spec.classes));
    for (std::size_t k = 0; k < spec.classes; ++k)
      for (std::size_t i = 0; i < spec.dim; ++i) centers(k, i) = spec.radius * q(i, k);
  } else {
    for (std::size_t k = 0; k < spec.classes; ++k) {
      const Vector u = random_unit_vector(rng, spec.dim);
      for (std::size_t i = 0; i < spec.dim; ++i) centers(k, i) = spec.radius * u[i];
    }
  }
  return centers;
}

inline Dataset gen_blobs(std::uint64_t seed, const BlobSpec& spec) {
  if (spec.classes < 2 || spec.dim == 0 || spec.n_per_class == 0) {
    throw PreconditionError("gen_blobs: need classes >= 2 and positive sizes");
  }
  if (!(spec.spread >= 0.0) || !(spec.radius > 0.0)) {
    throw PreconditionError("gen_blobs: spread must be >= 0 and radius > 0");
  }
  Rng rng(seed);
  const Matrix centers = blob_centers(rng, spec);
  const double cap = 3.0 * spec.spread * std::sqrt(static_cast<double>(spec.dim));
  auto sample = [&](std::size_t per_class) {
    Split s{Matrix(per_class * spec.classes, spec.dim), {}};
    for (std::size_t i = 0; i < per_class * spec.classes; ++i) {
      const std::size_t k = i % spec.classes;
      Vector noise = gaussian_vector(rng, spec.dim, spec.spread);
      while (norm(noise) > cap) noise = gaussian_vector(rng, spec.dim, spec.spread);
      for (std::size_t j = 0; j < spec.dim; ++j) s.x(i, j) = centers(k, j) + noise[j];
      s.y.push_back(static_cast<int>(k));
    }
    return s;
  };
  Dataset ds;
  ds.train = sample(spec.n_per_class);
  ds.test = sample(spec.test_per_class);
  ds.classes = spec.classes;
  ds.shape = {1, 1, spec.dim};
  return ds;
}

/// Two interleaved spiral arms in the plane, `n` train points per arm (and
/// n/4 test points), each arm making 1.5 turns with Gaussian jitter `noise`.
inline Dataset gen_spirals(std::uint64_t seed, std::size_t n, double noise) {
  if (n == 0) throw PreconditionError("gen_spirals: n must be positive");
  if (!(noise >= 0.0)) throw PreconditionError("gen_spirals: noise must be >= 0");
  Rng rng(seed);
  auto sample = [&](std::size_t per_arm) {
    Split s{Matrix(2 * per_arm, 2), {}};
    for (std::size_t i = 0; i < 2 * per_arm; ++i) {
      const int arm = static_cast<int>(i % 2);
      const double t = uniform(rng, 0.05, 1.0);
      const double angle = 3.0 * std::numbers::pi * t + arm * std::numbers::pi;
      std::normal_distribution<double> jitter(0.0, noise);
      s.x(i, 0) = t * std::cos(angle) + (noise > 0 ? jitter(rng) : 0.0);
      s.x(i, 1) = t * std::sin(angle) + (noise > 0 ? jitter(rng) : 0.0);
      s.y.push_back(arm);
    }
    return s;
  };
  Dataset ds;
  ds.train = sample(n);
  ds.test = sample(std::max<std::size_t>(1, n / 4));
  ds.classes = 2;
  ds.shape = {1, 1, 2};
  return ds;
}

// ---- IDX ----

/// An IDX array: big-endian magic (0, 0, type, rank), rank big-endian u32
/// dimensions, then big-endian elements. Values are held as doubles and
/// converted back to `type` on write.
struct IdxArray {
  std::uint8_t type = 0x08;
  std::vector<std::uint32_t> dims;
  std::vector<double> values;

  std::size_t count() const {
    std::size_t c = 1;
    for (auto d : dims) c *= d;
    return c;
  }
};

namespace detail {
inline std::size_t idx_element_size(std::uint8_t type) {
  switch (type) {
    case 0x08: case 0x09: return 1;
    case 0x0B: return 2;
    case 0x0C: case 0x0D: return 4;
    case 0x0E: return 8;
    default: return 0;
  }
}

inline std::uint64_t read_be(const std::uint8_t* p, std::size_t bytes) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < bytes; ++i) v = (v << 8) | p[i];
  return v;
}

inline void write_be(std::vector<std::uint8_t>& out, std::uint64_t v, std::size_t bytes) {
  for (std::size_t i = bytes; i-- > 0;) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path + ": cannot open");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}
}  // namespace detail

inline IdxArray parse_idx(const std::vector<std::uint8_t>& bytes, const std::string& source) {
  auto fail = [&](std::size_t offset, const std::string& what) {
    return ParseError(source + ": byte " + std::to_string(offset) + ": " + what);
  };
  if (bytes.size() < 4) throw fail(bytes.size(), "truncated magic number");
  if (bytes[0] != 0 || bytes[1] != 0) throw fail(0, "magic number must start with two zero bytes");
  IdxArray arr;
  arr.type = bytes[2];
  const std::size_t width = detail::idx_element_size(arr.type);
  if (width == 0) throw fail(2, "unknown element type code " + std::to_string(arr.type));
  const std::size_t rank = bytes[3];
  if (rank == 0) throw fail(3, "rank must be at least 1");
  std::size_t pos = 4;
  for (std::size_t d = 0; d < rank; ++d, pos += 4) {
    if (pos + 4 > bytes.size()) throw fail(pos, "truncated dimension " + std::to_string(d));
    arr.dims.push_back(static_cast<std::uint32_t>(detail::read_be(&bytes[pos], 4)));
  }
  const std::size_t expected = arr.count() * width;
  if (bytes.size() - pos != expected) {
    throw fail(pos, "payload has " + std::to_string(bytes.size() - pos) + " bytes, expected " +
                        std::to_string(expected));
  }
  arr.values.reserve(arr.count());
  for (std::size_t i = 0; i < arr.count(); ++i, pos += width) {
    const std::uint64_t raw = detail::read_be(&bytes[pos], width);
    double v = 0.0;
    switch (arr.type) {
      case 0x08: v = static_cast<std::uint8_t>(raw); break;
      case 0x09: v = static_cast<std::int8_t>(raw); break;
      case 0x0B: v = static_cast<std::int16_t>(raw); break;
      case 0x0C: v = static_cast<std::int32_t>(raw); break;
      case 0x0D: v = std::bit_cast<float>(static_cast<std::uint32_t>(raw)); break;
      case 0x0E: v = std::bit_cast<double>(raw); break;
    }
    arr.values.push_back(v);
  }
  return arr;
}

inline std::vector<std::uint8_t> serialize_idx(const IdxArray& arr) {
  const std::size_t width = detail::idx_element_size(arr.type);
  if (width == 0) throw PreconditionError("serialize_idx: unknown element type");
  if (arr.dims.empty() || arr.dims.size() > 255) throw PreconditionError("serialize_idx: bad rank");
  if (arr.values.size() != arr.count()) throw DimensionError("serialize_idx: value count mismatch");
  std::vector<std::uint8_t> out{0, 0, arr.type, static_cast<std::uint8_t>(arr.dims.size())};
  for (auto d : arr.dims) detail::write_be(out, d, 4);
  for (double v : arr.values) {
    std::uint64_t raw = 0;
    switch (arr.type) {
      case 0x08: raw = static_cast<std::uint8_t>(v); break;
      case 0x09: raw = static_cast<std::uint8_t>(static_cast<std::int8_t>(v)); break;
      case 0x0B: raw = static_cast<std::uint16_t>(static_cast<std::int16_t>(v)); break;
      case 0x0C: raw = static_cast<std::uint32_t>(static_cast<std::int32_t>(v)); break;
      case 0x0D: raw = std::bit_cast<std::uint32_t>(static_cast<float>(v)); break;
      case 0x0E: raw = std::bit_cast<std::uint64_t>(v); break;
    }
    detail::write_be(out, raw, width);
  }
  return out;
}

inline IdxArray read_idx(const std::string& path) { return parse_idx(detail::read_file(path), path); }

inline void write_idx(const std::string& path, const IdxArray& arr) {
  const std::vector<std::uint8_t> bytes = serialize_idx(arr);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(path + ": cannot open for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

/// Images (N × …) and labels (N) from a pair of IDX files. Rank-3 images are
/// read as single-channel H×W, rank-4 as H×W×C.
inline Split load_idx(const std::string& images_path, const std::string& labels_path,
                      std::size_t classes, ImageShape* shape = nullptr) {
  const IdxArray images = read_idx(images_path);
  const IdxArray labels = read_idx(labels_path);
  if (labels.dims.size() != 1) throw ParseError(labels_path + ": labels must have rank 1");
  if (images.dims[0] != labels.dims[0]) {
    throw DimensionError(images_path + ": " + std::to_string(images.dims[0]) + " images but " +
                         std::to_string(labels.dims[0]) + " labels");
  }
  const std::size_t n = images.dims[0];
  const std::size_t width = n == 0 ? 0 : images.count() / n;
  if (shape) {
    const auto& d = images.dims;
    *shape = d.size() == 3   ? ImageShape{d[1], d[2], 1}
             : d.size() == 4 ? ImageShape{d[1], d[2], d[3]}
                             : ImageShape{1, 1, width};
  }
  Split s{Matrix(n, width, images.values), {}};
  for (double v : labels.values) s.y.push_back(static_cast<int>(v));
  validate_labels(s.y, classes, labels_path);
  return s;
}

// ---- CSV ----

/// CSV with a header row; one column holds the integer label and all others
/// are numeric features.
struct CsvSchema {
  std::string label_column = "label";
  std::size_t classes = 2;
};

inline Split parse_csv(const std::string& text, const CsvSchema& schema, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) {
    return ParseError(source + ": line " + std::to_string(line_no) + ": " + what);
  };
  auto split = [](const std::string& l) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream row(l);
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (!l.empty() && l.back() == ',') cells.emplace_back();
    return cells;
  };
  auto strip_cr = [](std::string& l) {
    if (!l.empty() && l.back() == '\r') l.pop_back();
  };

  if (!std::getline(in, line)) throw ParseError(source + ": empty file (no header row)");
  ++line_no;
  strip_cr(line);
  const std::vector<std::string> header = split(line);
  const auto label_it = std::find(header.begin(), header.end(), schema.label_column);
  if (label_it == header.end()) throw fail("no column named '" + schema.label_column + "'");
  const std::size_t label_col = static_cast<std::size_t>(label_it - header.begin());
  const std::size_t width = header.size() - 1;
  if (width == 0) throw fail("no feature columns");

  std::vector<double> values;
  Split s;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    const std::vector<std::string> cells = split(line);
    if (cells.size() != header.size()) {
      throw fail("expected " + std::to_string(header.size()) + " fields, got " +
                 std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cells[c], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != cells[c].size() || !std::isfinite(v)) {
        throw fail("column '" + header[c] + "': not a finite number: '" + cells[c] + "'");
      }
      if (c == label_col) {
        if (v != std::floor(v)) throw fail("label is not an integer: '" + cells[c] + "'");
        s.y.push_back(static_cast<int>(v));
      } else {
        values.push_back(v);
      }
    }
  }
  if (s.y.empty()) throw ParseError(source + ": no data rows");
  s.x = Matrix(s.y.size(), width, std::move(values));
  validate_labels(s.y, schema.classes, source);
  return s;
}

inline Split load_csv(const std::string& path, const CsvSchema& schema) {
  const std::vector<std::uint8_t> bytes = detail::read_file(path);
  return parse_csv(std::string(bytes.begin(), bytes.end()), schema, path);
}

// ---- normalization ----

enum class NormalizeMode { kNone, kStandard, kIntensity };

/// Per-feature mean and (biased) standard deviation of the train features.
/// Zero-variance features keep divisor 1 and are listed so callers can warn.
inline NormStats compute_stats(const Matrix& train_x) {
  if (train_x.rows() == 0) throw PreconditionError("normalize: empty train split");
  const std::size_t n = train_x.rows(), d = train_x.cols();
  NormStats st{Vector(d), Vector(d, 1.0), {}};
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) st.mean[c] += train_x(r, c);
  st.mean *= 1.0 / static_cast<double>(n);
  Vector var(d);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) {
      const double dev = train_x(r, c) - st.mean[c];
      var[c] += dev * dev;
    }
  for (std::size_t c = 0; c < d; ++c) {
    const double v = var[c] / static_cast<double>(n);
    if (v > 1e-24) {
      st.scale[c] = std::sqrt(v);
    } else {
      st.constant_features.push_back(c);
    }
  }
  return st;
}

inline void apply_stats(Matrix& x, const NormStats& st) {
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) x(r, c) = (x(r, c) - st.mean[c]) / st.scale[c];
}

/// Standard mode: statistics from the train split only, applied to both
/// splits. Intensity mode: divide by 255.
inline Dataset normalize(Dataset ds, NormalizeMode mode) {
  switch (mode) {
    case NormalizeMode::kNone: break;
    case NormalizeMode::kStandard:
      ds.stats = compute_stats(ds.train.x);
      apply_stats(ds.train.x, ds.stats);
      apply_stats(ds.test.x, ds.stats);
      break;
    case NormalizeMode::kIntensity: {
      const std::size_t d = ds.dim();
      ds.stats = {Vector(d), Vector(d, 255.0), {}};
      apply_stats(ds.train.x, ds.stats);
      apply_stats(ds.test.x, ds.stats);
      break;
    }
  }
  return ds;
}

// ---- batching ----

/// Shuffled mini-batches covering one epoch; a trailing batch with fewer than
/// two samples is dropped because train-mode batch norm needs two.
inline std::vector<std::vector<std::size_t>> minibatches(std::size_t n, std::size_t batch_size,
                                                         Rng& rng) {
  if (batch_size < 2) throw PreconditionError("minibatches: batch_size must be >= 2");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  // Fisher-Yates with explicit draws, so the order only depends on the engine
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    if (end - start < 2) break;
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

inline Split gather(const Split& s, const std::vector<std::size_t>& rows) {
  Split out{Matrix(rows.size(), s.x.cols()), {}};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = s.x.row(rows[i]);
    std::copy(src.begin(), src.end(), out.x.row(i).begin());
    out.y.push_back(s.y[rows[i]]);
  }
  return out;
}

}  // namespace grassbn
