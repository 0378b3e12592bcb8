#pragma once

// Config-driven training runs and multi-seed optimizer comparisons.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "grassbn/checkpoint.hpp"
#include "grassbn/config.hpp"
#include "grassbn/data.hpp"
#include "grassbn/metrics.hpp"
#include "grassbn/network.hpp"
#include "grassbn/trainer.hpp"

namespace grassbn {

/// A run stopped on a numerical failure; the checkpoint on disk is the last
/// completed epoch.
class TrainingAborted : public Error {
 public:
  using Error::Error;
};

inline Dataset load_dataset(const DataConfig& d) {
  Dataset ds;
  if (d.source == "blobs") {
    ds = gen_blobs(d.seed, d.blobs);
  } else if (d.source == "spirals") {
    ds = gen_spirals(d.seed, d.spiral_n, d.spiral_noise);
  } else if (d.source == "idx") {
    ds.classes = d.classes;
    ds.train = load_idx(d.train_images, d.train_labels, d.classes, &ds.shape);
    if (!d.test_images.empty()) ds.test = load_idx(d.test_images, d.test_labels, d.classes);
    else ds.test = {Matrix(0, ds.train.x.cols()), {}};
  } else if (d.source == "csv") {
    ds.classes = d.classes;
    const CsvSchema schema{d.label_column, d.classes};
    ds.train = load_csv(d.train_csv, schema);
    ds.test = d.test_csv.empty() ? Split{Matrix(0, ds.train.x.cols()), {}} : load_csv(d.test_csv, schema);
    ds.shape = {1, 1, ds.train.x.cols()};
  } else {
    throw ValidationError("unknown dataset '" + d.source + "'");
  }
  validate(ds);
  return normalize(std::move(ds), d.normalize);
}

inline Network build_network(const ModelConfig& m, const Dataset& ds) {
  if (m.arch == "mlp") return make_mlp({ds.dim(), m.hidden, ds.classes, m.freeze_bn_scale});
  const ImageShape shape = m.image.size() > 0 ? m.image : ds.shape;
  if (shape.size() != ds.dim()) {
    throw ValidationError("conv input shape " + std::to_string(shape.height) + "x" +
                          std::to_string(shape.width) + "x" + std::to_string(shape.channels) +
                          " does not match feature width " + std::to_string(ds.dim()));
  }
  return make_conv_net({shape, m.conv_channels, ds.classes, m.freeze_bn_scale});
}

struct RunSummary {
  std::vector<MetricsRecord> records;
  double final_test_error = 0.0;  // fraction
  double max_step_norm = 0.0;
  double max_gradient_travel = 0.0;
  long long steps = 0;
  std::string metrics_path;
  std::string checkpoint_path;
};

/// Trains for cfg.epochs epochs. Writes metrics.csv (or metrics.jsonl) and
/// checkpoint.json into out_dir; the checkpoint is refreshed after every epoch.
/// Record 0 is the evaluation before any step; record e uses the rates of
/// schedule epoch e-1.
inline RunSummary run_training(const TrainConfig& cfg, const Dataset& ds, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  RunSummary summary;
  const bool jsonl = cfg.metrics_format == MetricsFormat::kJsonl;
  summary.metrics_path = (fs::path(out_dir) / (jsonl ? "metrics.jsonl" : "metrics.csv")).string();
  summary.checkpoint_path = (fs::path(out_dir) / "checkpoint.json").string();

  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    if (!cfg.record_wall_time) return 0.0;
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };

  Rng rng(cfg.seed);
  Trainer trainer(build_network(cfg.model, ds), cfg.optimizer);
  trainer.initialize(rng);
  MetricsWriter writer(summary.metrics_path, jsonl);

  auto record = [&](int epoch, double angle, int schedule_epoch) {
    const Evaluation tr = evaluate(trainer.net(), ds.train.x, ds.train.y);
    const Evaluation te = evaluate(trainer.net(), ds.test.x, ds.test.y);
    MetricsRecord r{epoch, trainer.steps(), tr.loss, tr.accuracy, te.loss, te.accuracy,
                    trainer.ortho_loss_total(), angle, trainer.lr_e(schedule_epoch),
                    trainer.lr_g(schedule_epoch), elapsed()};
    writer.write(r);
    summary.records.push_back(r);
    save_checkpoint(summary.checkpoint_path, checkpoint_json(trainer, epoch, &rng));
  };

  record(0, 0.0, 0);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double angle_sum = 0.0;
    std::size_t steps = 0;
    for (const auto& rows : minibatches(ds.train.size(), cfg.batch_size, rng)) {
      const Split batch = gather(ds.train, rows);
      StepMetrics m;
      try {
        m = trainer.train_step(batch.x, batch.y, epoch);
      } catch (const NumericalError& e) {
        throw TrainingAborted(std::string(e.what()) + " during epoch " + std::to_string(epoch + 1) +
                              "; last good checkpoint (epoch " + std::to_string(epoch) + ") at " +
                              summary.checkpoint_path);
      }
      angle_sum += m.mean_step_angle;
      ++steps;
      summary.max_step_norm = std::max(summary.max_step_norm, m.max_step_norm);
      summary.max_gradient_travel = std::max(summary.max_gradient_travel, m.max_gradient_travel);
    }
    record(epoch + 1, steps ? angle_sum / static_cast<double>(steps) : 0.0, epoch);
  }
  summary.steps = trainer.steps();
  // from the miss count, so 5 misses in 500 is exactly 0.01 rather than 1 − 0.99
  const MetricsRecord& last = summary.records.back();
  const bool has_test = ds.test.size() > 0;
  const double n = static_cast<double>(has_test ? ds.test.size() : ds.train.size());
  summary.final_test_error = std::round((1.0 - (has_test ? last.test_acc : last.train_acc)) * n) / n;
  return summary;
}

inline RunSummary run_training(const TrainConfig& cfg, const std::string& out_dir) {
  return run_training(cfg, load_dataset(cfg.data), out_dir);
}

/// Median; the mean of the two middle values for an even count.
inline double median(std::vector<double> v) {
  if (v.empty()) throw PreconditionError("median of an empty set");
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 == 1 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

inline std::string display_name(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::kSgd: return "SGD";
    case OptimizerKind::kSgdG: return "SGD-G";
    case OptimizerKind::kAdamG: return "Adam-G";
  }
  return "?";
}

struct CompareEntry {
  OptimizerKind kind;
  std::vector<std::uint64_t> seeds;
  std::vector<double> test_errors;  // fractions, one per seed
  double median_error = 0.0;
};

struct CompareResult {
  std::vector<CompareEntry> entries;
  std::string table_path;
  std::string runs_path;
};

/// Runs every optimizer with seeds base_seed + i, i < runs. The config text is
/// rebuilt per optimizer so optimizer-dependent defaults apply to each.
/// Writes compare.csv (one column per optimizer, median test error in percent)
/// and compare_runs.csv (one row per run); curves land in
/// <out_dir>/<optimizer>/seed-<s>/.
inline CompareResult compare(const ConfigText& text, const std::vector<OptimizerKind>& optimizers,
                             int runs, const std::string& out_dir) {
  namespace fs = std::filesystem;
  if (optimizers.empty()) throw ValidationError("compare: no optimizers given");
  if (runs < 1) throw ValidationError("compare: runs must be >= 1");
  CompareResult result;
  std::vector<std::pair<OptimizerKind, TrainConfig>> configs;
  for (OptimizerKind kind : optimizers) {
    ConfigText t = text;
    t.set("optimizer", std::string(to_string(kind)));
    TrainConfig cfg = build_config(t);
    validate(cfg);
    configs.emplace_back(kind, cfg);
  }
  const Dataset ds = load_dataset(configs.front().second.data);
  fs::create_directories(out_dir);

  for (auto& [kind, cfg] : configs) {
    CompareEntry entry{kind, {}, {}, 0.0};
    const std::uint64_t base = cfg.seed;
    for (int i = 0; i < runs; ++i) {
      cfg.seed = base + static_cast<std::uint64_t>(i);
      const fs::path dir = fs::path(out_dir) / std::string(to_string(kind)) /
                           ("seed-" + std::to_string(cfg.seed));
      const RunSummary s = run_training(cfg, ds, dir.string());
      entry.seeds.push_back(cfg.seed);
      entry.test_errors.push_back(s.final_test_error);
    }
    entry.median_error = median(entry.test_errors);
    result.entries.push_back(std::move(entry));
  }

  result.table_path = (fs::path(out_dir) / "compare.csv").string();
  result.runs_path = (fs::path(out_dir) / "compare_runs.csv").string();
  {
    std::ofstream table(result.table_path);
    table << "dataset";
    for (const auto& e : result.entries) table << ',' << display_name(e.kind);
    table << '\n' << configs.front().second.data.source;
    for (const auto& e : result.entries) table << ',' << format_double(100.0 * e.median_error);
    table << '\n';
  }
  {
    std::ofstream rows(result.runs_path);
    rows << "optimizer,seed,final_test_error\n";
    for (const auto& e : result.entries)
      for (std::size_t i = 0; i < e.seeds.size(); ++i)
        rows << to_string(e.kind) << ',' << e.seeds[i] << ',' << format_double(e.test_errors[i]) << '\n';
  }
  return result;
}

}  // namespace grassbn
