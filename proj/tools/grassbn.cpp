// grassbn: property checks, config-driven training and optimizer comparison.
//
//   grassbn check [--inject-fault exp-map-drift] [--report PATH]
//   grassbn train --config PATH [--key value]...
//   grassbn compare --config PATH --optimizers sgd,sgd-g,adam-g [--runs N] [--key value]...
//
// Exit codes: 0 ok, 1 property or validation failure, 2 runtime abort.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "grassbn/checks.hpp"
#include "grassbn/config.hpp"
#include "grassbn/experiment.hpp"

namespace {

using namespace grassbn;

constexpr int kOk = 0;
constexpr int kInvalid = 1;
constexpr int kAborted = 2;

constexpr const char* kOutputEnv = "GRASSBN_OUTPUT_DIR";

using Overrides = std::vector<std::pair<std::string, std::string>>;

// Leftover arguments as --key value or --key=value pairs. Dashes in key
// names are accepted in place of underscores.
Overrides parse_overrides(const std::vector<std::string>& rest) {
  Overrides out;
  for (std::size_t i = 0; i < rest.size(); ++i) {
    const std::string& arg = rest[i];
    if (arg.rfind("--", 0) != 0 || arg.size() == 2) {
      throw ValidationError("unexpected argument '" + arg + "'");
    }
    std::string key = arg.substr(2), value;
    if (const auto eq = key.find('='); eq != std::string::npos) {
      value = key.substr(eq + 1);
      key.resize(eq);
    } else if (i + 1 < rest.size()) {
      value = rest[++i];
    } else {
      throw ValidationError("option '--" + key + "' needs a value");
    }
    for (char& c : key)
      if (c == '-') c = '_';
    out.emplace_back(key, value);
  }
  return out;
}

// File values, then the output-directory environment variable, then flags.
ConfigText load_text(const std::string& path, const Overrides& overrides) {
  ConfigText text = ConfigText::load(path);
  if (const char* dir = std::getenv(kOutputEnv); dir && *dir) text.set("output_dir", dir);
  for (const auto& [k, v] : overrides) text.set(k, v);
  return text;
}

std::string percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * fraction);
  return buf;
}

int cmd_check(const std::string& fault, const std::string& report_path) {
  CheckOptions opt;
  if (fault == "exp-map-drift") {
    opt.exp_map = drifting_exp_map(opt.seed);
  } else if (!fault.empty()) {
    throw ValidationError("unknown fault '" + fault + "' (known: exp-map-drift)");
  }
  const std::vector<SuiteResult> results = run_all_checks(opt);
  int failed = 0;
  nlohmann::json report = nlohmann::json::array();
  for (const auto& r : results) {
    std::cout << r.line() << '\n';
    if (!r.passed) ++failed;
    report.push_back({{"module", r.module}, {"property", r.property}, {"count", r.count},
                      {"worst", r.worst}, {"tolerance", r.tolerance}, {"passed", r.passed}});
  }
  std::cout << results.size() - failed << " of " << results.size() << " suites passed\n";
  if (!report_path.empty()) {
    std::ofstream(report_path) << report.dump(2) << '\n';
  }
  if (failed > 0) {
    std::cerr << "failed:\n";
    for (const auto& r : results)
      if (!r.passed) std::cerr << "  " << r.module << '/' << r.property << " worst " << r.worst << '\n';
  }
  return failed == 0 ? kOk : kInvalid;
}

int cmd_train(const std::string& config_path, const Overrides& overrides) {
  const TrainConfig cfg = [&] {
    TrainConfig c = build_config(load_text(config_path, overrides));
    validate(c);
    return c;
  }();
  const RunSummary s = run_training(cfg, cfg.output_dir);
  const MetricsRecord& last = s.records.back();
  std::cout << "epochs " << cfg.epochs << ", steps " << s.steps << ", test error "
            << percent(s.final_test_error) << ", ortho loss "
            << format_double(last.ortho_loss_total) << '\n'
            << "metrics: " << s.metrics_path << '\n'
            << "checkpoint: " << s.checkpoint_path << '\n';
  return kOk;
}

int cmd_compare(const std::string& config_path, const std::string& optimizer_list, int runs,
                const Overrides& overrides) {
  std::vector<OptimizerKind> kinds;
  std::string item;
  std::istringstream in(optimizer_list);
  while (std::getline(in, item, ',')) {
    try {
      kinds.push_back(parse_optimizer(detail::trim(item)));
    } catch (const Error&) {
      throw ValidationError("unknown optimizer '" + item + "' (known: sgd, sgd-g, adam-g)");
    }
  }
  const ConfigText text = load_text(config_path, overrides);
  const TrainConfig base = build_config(text);
  validate(base);
  const CompareResult r = compare(text, kinds, runs, base.output_dir);
  for (const auto& e : r.entries) {
    std::cout << display_name(e.kind) << ": median test error "
              << percent(e.median_error) << " over " << e.seeds.size() << " seeds\n";
  }
  std::cout << "table: " << r.table_path << '\n' << "runs: " << r.runs_path << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Riemannian optimization of batch-normalized networks on G(1,n)"};
  app.require_subcommand(1);

  std::string fault, report;
  CLI::App* check = app.add_subcommand("check", "run the property suites");
  check->add_option("--inject-fault", fault, "deliberately break an operator (exp-map-drift)");
  check->add_option("--report", report, "also write the results as JSON");

  std::string config;
  CLI::App* train = app.add_subcommand("train", "train one network from a config file");
  train->add_option("--config", config, "INI config")->required();
  train->allow_extras();
  train->footer("Any config key can be overridden with --key value, e.g. --epochs 5 --eta_g 0.1.");

  std::string optimizers;
  int runs = 5;
  CLI::App* cmp = app.add_subcommand("compare", "median test error over seeds, per optimizer");
  cmp->add_option("--config", config, "INI config")->required();
  cmp->add_option("--optimizers", optimizers, "comma-separated list")->required();
  cmp->add_option("--runs", runs, "seeds per optimizer")->capture_default_str();
  cmp->allow_extras();
  cmp->footer("Any config key can be overridden with --key value. Seeds are seed, seed+1, ...");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kInvalid;
  }

  try {
    if (check->parsed()) return cmd_check(fault, report);
    if (train->parsed()) return cmd_train(config, parse_overrides(train->remaining()));
    return cmd_compare(config, optimizers, runs, parse_overrides(cmp->remaining()));
  } catch (const TrainingAborted& e) {
    std::cerr << "aborted: " << e.what() << '\n';
    return kAborted;
  } catch (const NumericalError& e) {
    std::cerr << "aborted: " << e.what() << '\n';
    return kAborted;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "aborted: " << e.what() << '\n';
    return kAborted;
  }
}
