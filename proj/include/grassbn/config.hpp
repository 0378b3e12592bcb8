#pragma once

// Training configuration: an INI file with sections, every key overridable
// from the command line by its bare name. Unknown keys are rejected before
// any training state is allocated.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "grassbn/data.hpp"
#include "grassbn/errors.hpp"
#include "grassbn/network.hpp"
#include "grassbn/trainer.hpp"

namespace grassbn {

enum class MetricsFormat { kCsv, kJsonl };

struct DataConfig {
  std::string source = "blobs";  // blobs | spirals | idx | csv
  std::uint64_t seed = 1;
  BlobSpec blobs;
  std::size_t spiral_n = 200;
  double spiral_noise = 0.05;
  std::string train_images, train_labels, test_images, test_labels;  // idx
  std::string train_csv, test_csv, label_column = "label";           // csv
  std::size_t classes = 10;                                          // idx / csv
  NormalizeMode normalize = NormalizeMode::kStandard;
};

struct ModelConfig {
  std::string arch = "mlp";  // mlp | conv
  std::vector<std::size_t> hidden{32, 16};
  std::vector<std::size_t> conv_channels{8, 16};
  ImageShape image;  // conv input; taken from the dataset when it carries one
  bool freeze_bn_scale = false;
};

struct TrainConfig {
  ModelConfig model;
  OptimizerSettings optimizer;
  DataConfig data;
  int epochs = 30;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  MetricsFormat metrics_format = MetricsFormat::kCsv;
  bool record_wall_time = false;
};

/// Raw key/value pairs keyed by bare name; the section each key belongs to is
/// fixed by kKeys.
class ConfigText {
 public:
  struct Key {
    const char* section;
    const char* name;
  };

  static constexpr Key kKeys[] = {
      {"model", "arch"},          {"model", "hidden"},           {"model", "conv_channels"},
      {"model", "image_height"},  {"model", "image_width"},      {"model", "image_channels"},
      {"model", "freeze_bn_scale"},
      {"optimizer", "optimizer"}, {"optimizer", "eta_e"},        {"optimizer", "eta_g"},
      {"optimizer", "gamma"},     {"optimizer", "beta1"},        {"optimizer", "beta2"},
      {"optimizer", "nu"},        {"optimizer", "epsilon"},      {"optimizer", "alpha"},
      {"optimizer", "momentum"},  {"optimizer", "weight_decay"}, {"optimizer", "nesterov"},
      {"optimizer", "decay_bn"},
      {"schedule", "milestones"}, {"schedule", "factor"},
      {"train", "epochs"},        {"train", "batch_size"},       {"train", "seed"},
      {"data", "dataset"},        {"data", "data_seed"},         {"data", "normalize"},
      {"data", "blob_n_per_class"}, {"data", "blob_test_per_class"}, {"data", "blob_classes"},
      {"data", "blob_dim"},       {"data", "blob_spread"},       {"data", "blob_radius"},
      {"data", "spiral_n"},       {"data", "spiral_noise"},
      {"data", "train_images"},   {"data", "train_labels"},      {"data", "test_images"},
      {"data", "test_labels"},    {"data", "train_csv"},         {"data", "test_csv"},
      {"data", "label_column"},   {"data", "classes"},
      {"output", "output_dir"},   {"output", "metrics_format"},  {"output", "record_wall_time"},
  };

  static const Key* find(const std::string& name) {
    for (const Key& k : kKeys)
      if (name == k.name) return &k;
    return nullptr;
  }

  static ConfigText parse(const std::string& text, const std::string& source) {
    boost::property_tree::ptree tree;
    std::istringstream in(text);
    try {
      boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw ParseError(source + ": line " + std::to_string(e.line()) + ": " + e.message());
    }
    ConfigText cfg;
    static const std::vector<std::string> sections{"model", "optimizer", "schedule",
                                                   "train", "data", "output"};
    for (const auto& [section, body] : tree) {
      if (body.empty() && !body.data().empty()) {
        throw ValidationError(source + ": key '" + section + "' is outside any section");
      }
      if (std::find(sections.begin(), sections.end(), section) == sections.end()) {
        throw ValidationError(source + ": unknown section [" + section + "]");
      }
      for (const auto& [name, value] : body) {
        const Key* key = find(name);
        if (!key) throw ValidationError(source + ": unknown key '" + name + "' in [" + section + "]");
        if (section != key->section) {
          throw ValidationError(source + ": key '" + name + "' belongs in [" + key->section +
                                "], found in [" + section + "]");
        }
        cfg.values_[name] = value.get_value<std::string>();
      }
    }
    return cfg;
  }

  static ConfigText load(const std::string& path) {
    const std::vector<std::uint8_t> bytes = detail::read_file(path);
    return parse(std::string(bytes.begin(), bytes.end()), path);
  }

  /// `--key value` from the command line.
  void set(const std::string& name, const std::string& value) {
    if (!find(name)) throw ValidationError("unknown key '" + name + "'");
    values_[name] = value;
  }

  std::optional<std::string> get(const std::string& name) const {
    const auto it = values_.find(name);
    if (it == values_.end()) return std::nullopt;
    return it->second;
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

namespace detail {
inline std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

template <typename T>
T parse_number(const std::string& key, const std::string& raw) {
  const std::string s = trim(raw);
  T value{};
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || end != s.data() + s.size() || s.empty()) {
    throw ValidationError("config key '" + key + "': cannot parse '" + raw + "' as a number");
  }
  return value;
}

inline bool parse_bool(const std::string& key, const std::string& raw) {
  const std::string s = trim(raw);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ValidationError("config key '" + key + "': expected true or false, got '" + raw + "'");
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& raw) {
  std::vector<T> out;
  std::string item;
  std::istringstream in(raw);
  while (std::getline(in, item, ',')) {
    if (trim(item).empty()) continue;
    out.push_back(parse_number<T>(key, item));
  }
  return out;
}
}  // namespace detail

/// Typed configuration with defaults. Learning-rate and weight-decay defaults
/// depend on the optimizer: SGD-G takes η_g = 0.2, Adam-G η_g = 0.05, both with
/// η_e = 0.01; the Euclidean baseline takes η_e = 0.1 and also decays the BN
/// parameters.
inline TrainConfig build_config(const ConfigText& text) {
  TrainConfig c;
  auto str = [&](const char* k, std::string& out) {
    if (auto v = text.get(k)) out = detail::trim(*v);
  };
  auto num = [&](const char* k, auto& out) {
    if (auto v = text.get(k)) out = detail::parse_number<std::remove_reference_t<decltype(out)>>(k, *v);
  };
  auto flag = [&](const char* k, bool& out) {
    if (auto v = text.get(k)) out = detail::parse_bool(k, *v);
  };

  // optimizer first: its choice sets the remaining defaults
  OptimizerSettings& o = c.optimizer;
  if (auto v = text.get("optimizer")) o.kind = parse_optimizer(detail::trim(*v));
  o.eta_g = o.kind == OptimizerKind::kAdamG ? 0.05 : 0.2;
  o.eta_e = o.kind == OptimizerKind::kSgd ? 0.1 : 0.01;
  o.decay_bn = o.kind == OptimizerKind::kSgd;
  num("eta_e", o.eta_e);
  num("eta_g", o.eta_g);
  num("gamma", o.gamma);
  num("beta1", o.beta1);
  num("beta2", o.beta2);
  num("nu", o.nu);
  num("epsilon", o.epsilon);
  num("alpha", o.alpha);
  num("momentum", o.momentum);
  num("weight_decay", o.weight_decay);
  flag("nesterov", o.nesterov);
  flag("decay_bn", o.decay_bn);
  if (auto v = text.get("milestones")) o.milestones = detail::parse_list<int>("milestones", *v);
  num("factor", o.factor);

  str("arch", c.model.arch);
  if (auto v = text.get("hidden")) c.model.hidden = detail::parse_list<std::size_t>("hidden", *v);
  if (auto v = text.get("conv_channels")) {
    c.model.conv_channels = detail::parse_list<std::size_t>("conv_channels", *v);
  }
  num("image_height", c.model.image.height);
  num("image_width", c.model.image.width);
  num("image_channels", c.model.image.channels);
  flag("freeze_bn_scale", c.model.freeze_bn_scale);

  num("epochs", c.epochs);
  num("batch_size", c.batch_size);
  num("seed", c.seed);

  DataConfig& d = c.data;
  str("dataset", d.source);
  num("data_seed", d.seed);
  if (auto v = text.get("normalize")) {
    const std::string mode = detail::trim(*v);
    if (mode == "standard") d.normalize = NormalizeMode::kStandard;
    else if (mode == "intensity") d.normalize = NormalizeMode::kIntensity;
    else if (mode == "none") d.normalize = NormalizeMode::kNone;
    else throw ValidationError("config key 'normalize': expected standard, intensity or none");
  }
  num("blob_n_per_class", d.blobs.n_per_class);
  num("blob_test_per_class", d.blobs.test_per_class);
  num("blob_classes", d.blobs.classes);
  num("blob_dim", d.blobs.dim);
  num("blob_spread", d.blobs.spread);
  num("blob_radius", d.blobs.radius);
  num("spiral_n", d.spiral_n);
  num("spiral_noise", d.spiral_noise);
  str("train_images", d.train_images);
  str("train_labels", d.train_labels);
  str("test_images", d.test_images);
  str("test_labels", d.test_labels);
  str("train_csv", d.train_csv);
  str("test_csv", d.test_csv);
  str("label_column", d.label_column);
  num("classes", d.classes);

  str("output_dir", c.output_dir);
  if (auto v = text.get("metrics_format")) {
    const std::string f = detail::trim(*v);
    if (f == "csv") c.metrics_format = MetricsFormat::kCsv;
    else if (f == "jsonl") c.metrics_format = MetricsFormat::kJsonl;
    else throw ValidationError("config key 'metrics_format': expected csv or jsonl");
  }
  flag("record_wall_time", c.record_wall_time);
  return c;
}

inline void validate(const TrainConfig& c) {
  const OptimizerSettings& o = c.optimizer;
  auto positive = [](const char* key, double v) {
    if (!(v > 0.0)) throw ValidationError("config key '" + std::string(key) + "' must be > 0");
  };
  positive("eta_e", o.eta_e);
  positive("eta_g", o.eta_g);
  positive("nu", o.nu);
  positive("epsilon", o.epsilon);
  positive("factor", o.factor);
  if (!(o.factor <= 1.0)) throw ValidationError("config key 'factor' must be <= 1");
  if (!(o.gamma >= 0.0 && o.gamma < 1.0)) throw ValidationError("config key 'gamma' must lie in [0, 1)");
  if (!(o.beta1 >= 0.0 && o.beta1 < 1.0)) throw ValidationError("config key 'beta1' must lie in [0, 1)");
  if (!(o.beta2 >= 0.0 && o.beta2 < 1.0)) throw ValidationError("config key 'beta2' must lie in [0, 1)");
  if (!(o.momentum >= 0.0 && o.momentum < 1.0)) {
    throw ValidationError("config key 'momentum' must lie in [0, 1)");
  }
  if (!(o.alpha >= 0.0)) throw ValidationError("config key 'alpha' must be >= 0");
  if (!(o.weight_decay >= 0.0)) throw ValidationError("config key 'weight_decay' must be >= 0");
  for (std::size_t i = 0; i < o.milestones.size(); ++i) {
    if (o.milestones[i] < 0 || (i > 0 && o.milestones[i] <= o.milestones[i - 1])) {
      throw ValidationError("config key 'milestones' must be non-negative and strictly increasing");
    }
  }
  if (c.epochs < 0) throw ValidationError("config key 'epochs' must be >= 0");
  if (c.batch_size < 2) throw ValidationError("config key 'batch_size' must be >= 2");
  if (c.model.arch != "mlp" && c.model.arch != "conv") {
    throw ValidationError("config key 'arch': expected mlp or conv, got '" + c.model.arch + "'");
  }
  const std::string& src = c.data.source;
  if (src != "blobs" && src != "spirals" && src != "idx" && src != "csv") {
    throw ValidationError("config key 'dataset': expected blobs, spirals, idx or csv, got '" + src + "'");
  }
  if (src == "idx" && (c.data.train_images.empty() || c.data.train_labels.empty())) {
    throw ValidationError("dataset idx needs 'train_images' and 'train_labels'");
  }
  if (src == "csv" && c.data.train_csv.empty()) {
    throw ValidationError("dataset csv needs 'train_csv'");
  }
}

inline TrainConfig load_config(const std::string& path,
                               const std::vector<std::pair<std::string, std::string>>& overrides) {
  ConfigText text = ConfigText::load(path);
  for (const auto& [k, v] : overrides) text.set(k, v);
  TrainConfig c = build_config(text);
  validate(c);
  return c;
}

}  // namespace grassbn
