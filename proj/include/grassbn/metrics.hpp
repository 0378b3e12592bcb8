#pragma once

// Per-epoch metrics stream: CSV with a fixed header, or one JSON object per
// line. Every record is flushed, so an aborted run leaves a valid prefix.

#include <charconv>
#include <fstream>
#include <string>

#include "json.hpp"

#include "grassbn/errors.hpp"

namespace grassbn {

struct MetricsRecord {
  int epoch = 0;
  long long step = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double test_loss = 0.0;
  double test_acc = 0.0;
  double ortho_loss_total = 0.0;
  double mean_step_angle_radians = 0.0;
  double lr_e = 0.0;
  double lr_g = 0.0;
  double wall_time = 0.0;
};

inline constexpr const char* kMetricsHeader =
    "epoch,step,train_loss,train_acc,test_loss,test_acc,ortho_loss_total,"
    "mean_step_angle_radians,lr_e,lr_g,wall_time";

/// Shortest representation that reads back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) return "nan";
  return std::string(buf, end);
}

inline std::string to_csv_row(const MetricsRecord& r) {
  std::string row = std::to_string(r.epoch) + "," + std::to_string(r.step);
  for (double v : {r.train_loss, r.train_acc, r.test_loss, r.test_acc, r.ortho_loss_total,
                   r.mean_step_angle_radians, r.lr_e, r.lr_g, r.wall_time}) {
    row += "," + format_double(v);
  }
  return row;
}

inline nlohmann::json to_json(const MetricsRecord& r) {
  return {{"epoch", r.epoch},
          {"step", r.step},
          {"train_loss", r.train_loss},
          {"train_acc", r.train_acc},
          {"test_loss", r.test_loss},
          {"test_acc", r.test_acc},
          {"ortho_loss_total", r.ortho_loss_total},
          {"mean_step_angle_radians", r.mean_step_angle_radians},
          {"lr_e", r.lr_e},
          {"lr_g", r.lr_g},
          {"wall_time", r.wall_time}};
}

class MetricsWriter {
 public:
  MetricsWriter(const std::string& path, bool jsonl) : out_(path, std::ios::trunc), jsonl_(jsonl) {
    if (!out_) throw Error(path + ": cannot open metrics file");
    if (!jsonl_) out_ << kMetricsHeader << '\n' << std::flush;
  }

  void write(const MetricsRecord& r) {
    if (r.epoch < last_epoch_ || (r.epoch == last_epoch_ && r.step <= last_step_)) {
      throw PreconditionError("metrics: records must have increasing (epoch, step) keys");
    }
    last_epoch_ = r.epoch;
    last_step_ = r.step;
    if (jsonl_) {
      out_ << to_json(r).dump() << '\n';
    } else {
      out_ << to_csv_row(r) << '\n';
    }
    out_.flush();
  }

 private:
  std::ofstream out_;
  bool jsonl_;
  int last_epoch_ = -1;
  long long last_step_ = -1;
};

}  // namespace grassbn
