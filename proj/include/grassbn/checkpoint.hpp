#pragma once

// Versioned JSON checkpoints: architecture, parameters, running BN
// statistics, the partition map and all optimizer state. Doubles are written
// in shortest round-trip form, so save → load → save is byte-identical.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include "json.hpp"

#include "grassbn/errors.hpp"
#include "grassbn/network.hpp"
#include "grassbn/trainer.hpp"

namespace grassbn {

inline constexpr const char* kCheckpointFormat = "grassbn-checkpoint";
inline constexpr int kCheckpointVersion = 1;

namespace detail {
using nlohmann::json;

inline json to_json(std::span<const double> v) { return json(std::vector<double>(v.begin(), v.end())); }

inline Vector vector_from(const json& j, std::size_t expected, const char* what) {
  Vector v(j.get<std::vector<double>>());
  if (v.size() != expected) {
    throw ParseError(std::string("checkpoint: ") + what + " has " + std::to_string(v.size()) +
                     " values, expected " + std::to_string(expected));
  }
  return v;
}

inline Matrix matrix_from(const json& j, std::size_t rows, std::size_t cols, const char* what) {
  return Matrix(rows, cols, vector_from(j, rows * cols, what).values());
}

inline json layer_json(const Layer& layer) {
  return std::visit(
      [](const auto& l) -> json {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, DenseLayer>) {
          return {{"type", "dense"}, {"in", l.in_features()}, {"out", l.out_features()},
                  {"has_bias", l.has_bias}, {"weight", to_json(l.weight.span())},
                  {"bias", to_json(l.bias.span())}};
        } else if constexpr (std::is_same_v<T, ConvLayer>) {
          return {{"type", "conv"},
                  {"in_shape", {l.in_shape.height, l.in_shape.width, l.in_shape.channels}},
                  {"out_channels", l.out_channels}, {"kernel", l.kernel}, {"stride", l.stride},
                  {"padding", l.padding}, {"has_bias", l.has_bias},
                  {"weight", to_json(l.weight.span())}, {"bias", to_json(l.bias.span())}};
        } else if constexpr (std::is_same_v<T, BatchNormLayer>) {
          return {{"type", "batch_norm"}, {"channels", l.channels}, {"spatial", l.spatial},
                  {"scale_frozen", l.scale_frozen}, {"momentum_stats", l.momentum_stats},
                  {"eps", l.eps}, {"scale", to_json(l.scale.span())},
                  {"offset", to_json(l.offset.span())},
                  {"running_mean", to_json(l.running_mean.span())},
                  {"running_var", to_json(l.running_var.span())}};
        } else if constexpr (std::is_same_v<T, ReluLayer>) {
          return {{"type", "relu"}};
        } else {
          return {{"type", "global_avg_pool"},
                  {"shape", {l.shape.height, l.shape.width, l.shape.channels}}};
        }
      },
      layer);
}

inline ImageShape shape_from(const json& j) {
  return {j.at(0).get<std::size_t>(), j.at(1).get<std::size_t>(), j.at(2).get<std::size_t>()};
}

inline Layer layer_from(const json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "dense") {
    DenseLayer l(j.at("in").get<std::size_t>(), j.at("out").get<std::size_t>(),
                 j.at("has_bias").get<bool>());
    l.weight = matrix_from(j.at("weight"), l.weight.rows(), l.weight.cols(), "dense weight");
    l.bias = vector_from(j.at("bias"), l.bias.size(), "dense bias");
    return l;
  }
  if (type == "conv") {
    ConvLayer l(shape_from(j.at("in_shape")), j.at("out_channels").get<std::size_t>(),
                j.at("kernel").get<std::size_t>(), j.at("stride").get<std::size_t>(),
                j.at("padding").get<std::size_t>(), j.at("has_bias").get<bool>());
    l.weight = matrix_from(j.at("weight"), l.weight.rows(), l.weight.cols(), "conv weight");
    l.bias = vector_from(j.at("bias"), l.bias.size(), "conv bias");
    return l;
  }
  if (type == "batch_norm") {
    BatchNormLayer l(j.at("channels").get<std::size_t>(), j.at("spatial").get<std::size_t>(),
                     j.at("scale_frozen").get<bool>());
    l.momentum_stats = j.at("momentum_stats").get<double>();
    l.eps = j.at("eps").get<double>();
    l.scale = vector_from(j.at("scale"), l.channels, "bn scale");
    l.offset = vector_from(j.at("offset"), l.channels, "bn offset");
    l.running_mean = vector_from(j.at("running_mean"), l.channels, "bn running_mean");
    l.running_var = vector_from(j.at("running_var"), l.channels, "bn running_var");
    return l;
  }
  if (type == "relu") return ReluLayer{};
  if (type == "global_avg_pool") return GlobalAvgPoolLayer{shape_from(j.at("shape"))};
  throw ParseError("checkpoint: unknown layer type '" + type + "'");
}

inline json settings_json(const OptimizerSettings& s) {
  return {{"kind", std::string(to_string(s.kind))}, {"eta_e", s.eta_e}, {"eta_g", s.eta_g},
          {"gamma", s.gamma}, {"beta1", s.beta1}, {"beta2", s.beta2}, {"nu", s.nu},
          {"epsilon", s.epsilon}, {"alpha", s.alpha}, {"momentum", s.momentum},
          {"weight_decay", s.weight_decay}, {"nesterov", s.nesterov}, {"decay_bn", s.decay_bn},
          {"milestones", s.milestones}, {"factor", s.factor}};
}

inline OptimizerSettings settings_from(const json& j) {
  OptimizerSettings s;
  s.kind = parse_optimizer(j.at("kind").get<std::string>());
  s.eta_e = j.at("eta_e").get<double>();
  s.eta_g = j.at("eta_g").get<double>();
  s.gamma = j.at("gamma").get<double>();
  s.beta1 = j.at("beta1").get<double>();
  s.beta2 = j.at("beta2").get<double>();
  s.nu = j.at("nu").get<double>();
  s.epsilon = j.at("epsilon").get<double>();
  s.alpha = j.at("alpha").get<double>();
  s.momentum = j.at("momentum").get<double>();
  s.weight_decay = j.at("weight_decay").get<double>();
  s.nesterov = j.at("nesterov").get<bool>();
  s.decay_bn = j.at("decay_bn").get<bool>();
  s.milestones = j.at("milestones").get<std::vector<int>>();
  s.factor = j.at("factor").get<double>();
  return s;
}

inline json partition_json(const Partition& p) {
  json points = json::array();
  for (const ColumnRef& c : p.grassmann) points.push_back({c.layer, c.column});
  json euclid = json::array();
  for (const ParamRef& r : p.euclidean) euclid.push_back({r.layer, to_string(r.kind)});
  return {{"grassmann", points}, {"euclidean", euclid}};
}
}  // namespace detail

inline nlohmann::json checkpoint_json(const Trainer& trainer, int epoch, const Rng* rng = nullptr) {
  using nlohmann::json;
  const Network& net = trainer.net();
  json layers = json::array();
  for (const Layer& l : net.layers()) layers.push_back(detail::layer_json(l));

  json sgdg = json::array();
  for (const SgdGState& s : trainer.sgdg_states()) sgdg.push_back({{"tau", detail::to_json(s.tau.vec().span())}});
  json adamg = json::array();
  for (const AdamGState& s : trainer.adamg_states()) {
    adamg.push_back({{"tau", detail::to_json(s.tau.vec().span())}, {"v", s.v}, {"t", s.t}});
  }
  json euclid = json::array();
  for (const EuclideanSgdState& s : trainer.euclidean_states()) {
    euclid.push_back({{"velocity", detail::to_json(s.velocity.span())}});
  }

  json j = {{"format", kCheckpointFormat},
            {"version", kCheckpointVersion},
            {"epoch", epoch},
            {"steps", trainer.steps()},
            {"settings", detail::settings_json(trainer.settings())},
            {"input_dim", net.input_dim()},
            {"layers", layers},
            {"partition", detail::partition_json(trainer.partition())},
            {"optimizer_state", {{"sgdg", sgdg}, {"adamg", adamg}, {"euclidean", euclid}}}};
  if (rng) {
    std::ostringstream state;
    state << *rng;
    j["rng"] = state.str();
  }
  return j;
}

struct Restored {
  Trainer trainer;
  int epoch = 0;
  std::optional<Rng> rng;
};

inline Restored restore_checkpoint(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kCheckpointFormat) {
      throw ParseError("checkpoint: not a grassbn checkpoint");
    }
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw ParseError("checkpoint: unsupported version " + std::to_string(version));
    }
    std::vector<Layer> layers;
    for (const auto& l : j.at("layers")) layers.push_back(detail::layer_from(l));
    Trainer trainer(Network(j.at("input_dim").get<std::size_t>(), std::move(layers)),
                    detail::settings_from(j.at("settings")));
    if (detail::partition_json(trainer.partition()) != j.at("partition")) {
      throw ParseError("checkpoint: stored partition does not match the architecture");
    }

    const auto& st = j.at("optimizer_state");
    auto& sgdg = trainer.sgdg_states();
    auto& adamg = trainer.adamg_states();
    auto& euclid = trainer.euclidean_states();
    if (st.at("sgdg").size() != sgdg.size() || st.at("adamg").size() != adamg.size() ||
        st.at("euclidean").size() != euclid.size()) {
      throw ParseError("checkpoint: optimizer state does not match the partition");
    }
    for (std::size_t k = 0; k < sgdg.size(); ++k) {
      sgdg[k].tau = TangentVector(detail::vector_from(st["sgdg"][k].at("tau"), sgdg[k].tau.dim(), "sgdg tau"));
    }
    for (std::size_t k = 0; k < adamg.size(); ++k) {
      const auto& s = st["adamg"][k];
      adamg[k].tau = TangentVector(detail::vector_from(s.at("tau"), adamg[k].tau.dim(), "adamg tau"));
      adamg[k].v = s.at("v").get<double>();
      adamg[k].t = s.at("t").get<long long>();
    }
    for (std::size_t k = 0; k < euclid.size(); ++k) {
      euclid[k].velocity = detail::vector_from(st["euclidean"][k].at("velocity"),
                                               euclid[k].velocity.size(), "velocity");
    }
    trainer.set_steps(j.at("steps").get<long long>());

    Restored r{std::move(trainer), j.at("epoch").get<int>(), std::nullopt};
    if (j.contains("rng")) {
      Rng rng;
      std::istringstream state(j["rng"].get<std::string>());
      state >> rng;
      if (!state) throw ParseError("checkpoint: bad rng state");
      r.rng = rng;
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
}

/// Written to a temporary file and renamed, so a crash never leaves a torn
/// checkpoint behind.
inline void save_checkpoint(const std::string& path, const nlohmann::json& j) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(tmp + ": cannot open for writing");
    out << j.dump(1) << '\n';
    if (!out) throw Error(tmp + ": write failed");
  }
  std::filesystem::rename(tmp, path);
}

inline nlohmann::json load_checkpoint_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path + ": cannot open");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

}  // namespace grassbn
