#include "cm/pipeline.hpp"
#include "cm/train.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

// Exit codes: 0 success, 2 config/usage, 3 data, 4 runtime.
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitRuntime = 4;

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;

  cm::config::RunConfig load() const {
    if (config_path.empty()) {
      throw cm::config::ConfigError(
          "no config file: pass --config or set CRYPTOMAMBA_CONFIG");
    }
    return cm::config::RunConfig::load(config_path, overrides);
  }
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("-c,--config", args.config_path, "Run configuration file")
      ->envname("CRYPTOMAMBA_CONFIG");
  cmd->add_option("--set", args.overrides,
                  "Override a config key, e.g. --set train.seed=7 (repeatable)");
}

std::string checkpoint_path(const cm::config::RunConfig& cfg, const std::string& explicit_path) {
  if (!explicit_path.empty()) return explicit_path;
  return (fs::path(cfg.output_dir) / "checkpoint.bin").string();
}

cm::model::CryptoMamba build_model_from_checkpoint(const cm::config::RunConfig& cfg,
                                                   const std::string& ckpt_path) {
  const cm::train::Checkpoint ckpt = cm::train::load_checkpoint(ckpt_path);
  cm::model::CryptoMamba model(cfg.model, cfg.train.seed);
  cm::train::apply_checkpoint(model, ckpt);
  return model;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << content;
}

std::string read_file(const std::string& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error(std::string(what) + " not found at '" + path +
                             "' (run the earlier pipeline steps first)");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string metrics_csv_path(const cm::config::RunConfig& cfg, const std::string& split) {
  return (fs::path(cfg.output_dir) / ("metrics_" + split + ".csv")).string();
}

std::string backtest_summary_path(const cm::config::RunConfig& cfg, const std::string& split) {
  return (fs::path(cfg.output_dir) / ("backtest_" + split + "_summary.csv")).string();
}

std::string history_path(const cm::config::RunConfig& cfg) {
  return (fs::path(cfg.output_dir) / "history.csv").string();
}

// --- subcommand bodies -----------------------------------------------------

int cmd_ingest(const CommonArgs& common, const std::string& data_override) {
  std::string path = data_override;
  if (path.empty()) {
    path = common.load().data_path;
  }
  const cm::data::Dataset dataset = cm::data::parse_csv_file(path);
  std::printf("file: %s\n", path.c_str());
  std::printf("bars: %zu\n", dataset.size());
  std::printf("range: %s .. %s\n", dataset.first_date().str().c_str(),
              dataset.last_date().str().c_str());
  return 0;
}

int cmd_train(const CommonArgs& common) {
  const auto cfg = common.load();
  const auto prepared = cm::pipeline::prepare(cfg);

  cm::model::CryptoMamba model(cfg.model, cfg.train.seed);
  std::printf("parameters: %lld\n",
              static_cast<long long>(cm::model::count_parameters(model.params())));
  std::printf("train windows: %zu, val windows: %zu\n", prepared.train_w.size(),
              prepared.val_w.size());

  const cm::train::TrainResult result =
      cm::train::train(model, prepared.train_w, prepared.val_w, cfg.train);

  fs::create_directories(cfg.output_dir);
  const std::string ckpt = checkpoint_path(cfg, "");
  cm::train::save_checkpoint(ckpt, cm::config::model_config_text(cfg.model), model.params(),
                             result.best_val_rmse);
  cm::train::write_history_csv(history_path(cfg), result.history);

  std::printf("epochs run: %zu\n", result.history.size());
  std::printf("best epoch: %d, best val rmse (normalized): %.6f\n", result.best_epoch,
              result.best_val_rmse);
  std::printf("checkpoint: %s\n", ckpt.c_str());
  return 0;
}

int cmd_evaluate(const CommonArgs& common, const std::string& ckpt_arg,
                 const std::string& split_name) {
  const auto cfg = common.load();
  const auto prepared = cm::pipeline::prepare(cfg);
  const auto model = build_model_from_checkpoint(cfg, checkpoint_path(cfg, ckpt_arg));

  const auto series = cm::pipeline::eval_series(model, cm::pipeline::segment_for(prepared, split_name),
                                                cm::pipeline::windows_for(prepared, split_name),
                                                prepared.normalizer);

  const auto model_report = cm::metrics::report(series.actual, series.predicted_usd);
  const auto naive_report = cm::metrics::report(series.actual, series.persistence);

  char line[256];
  std::string csv = "split,rmse,mape,mae,n\n";
  std::snprintf(line, sizeof(line), "%s,%.17g,%.17g,%.17g,%zu\n", split_name.c_str(),
                model_report.rmse, model_report.mape, model_report.mae, model_report.n);
  csv += line;
  std::snprintf(line, sizeof(line), "%s_persistence,%.17g,%.17g,%.17g,%zu\n",
                split_name.c_str(), naive_report.rmse, naive_report.mape, naive_report.mae,
                naive_report.n);
  csv += line;

  fs::create_directories(cfg.output_dir);
  write_file(metrics_csv_path(cfg, split_name), csv);

  std::printf("%s: rmse %.2f, mape %.4f%%, mae %.2f (n=%zu)\n", split_name.c_str(),
              model_report.rmse, model_report.mape, model_report.mae, model_report.n);
  std::printf("%s persistence baseline: rmse %.2f, mape %.4f%%, mae %.2f\n",
              split_name.c_str(), naive_report.rmse, naive_report.mape, naive_report.mae);
  return 0;
}

int cmd_predict(const CommonArgs& common, const std::string& ckpt_arg,
                const std::string& date_arg) {
  const auto cfg = common.load();
  const cm::data::Dataset dataset = cm::data::parse_csv_file(cfg.data_path);
  const auto splits = cm::data::split(dataset, cfg.split);
  const auto normalizer = cm::data::Normalizer::fit(splits.train, cfg.model.use_volume);
  const auto model = build_model_from_checkpoint(cfg, checkpoint_path(cfg, ckpt_arg));

  const int lookback = cfg.model.lookback;
  std::size_t end;  // one past the last input bar
  cm::data::Date target;
  if (date_arg.empty()) {
    end = dataset.size();
    target = dataset.last_date() + 1;
  } else {
    target = cm::data::Date::parse(date_arg);
    const int offset = target - dataset.first_date();
    if (offset < lookback || offset > static_cast<int>(dataset.size())) {
      throw std::runtime_error("date " + target.str() + " needs " + std::to_string(lookback) +
                               " prior bars inside the dataset");
    }
    end = static_cast<std::size_t>(offset);
  }

  const std::span<const cm::data::OhlcvBar> window(
      dataset.bars.data() + end - static_cast<std::size_t>(lookback),
      static_cast<std::size_t>(lookback));
  const double price = cm::model::predict_next_close(model, window, normalizer);
  std::printf("%s,%.2f\n", target.str().c_str(), price);
  return 0;
}

int cmd_backtest(const CommonArgs& common, const std::string& ckpt_arg,
                 const std::string& split_name) {
  const auto cfg = common.load();
  const auto prepared = cm::pipeline::prepare(cfg);
  const auto model = build_model_from_checkpoint(cfg, checkpoint_path(cfg, ckpt_arg));

  const auto series = cm::pipeline::eval_series(model, cm::pipeline::segment_for(prepared, split_name),
                                                cm::pipeline::windows_for(prepared, split_name),
                                                prepared.normalizer);
  const auto trade = cm::pipeline::trading_series(series);

  fs::create_directories(cfg.output_dir);
  char line[320];
  std::string summary = "strategy,final_balance,mdd_percent,trades\n";

  for (const cm::trading::Strategy strategy : cfg.backtest.strategies) {
    const auto result = cm::trading::backtest(trade.closes, trade.predictions, strategy,
                                              cfg.backtest.params, cfg.backtest.initial_cash);

    std::string trace = "date,close,prediction,decision,fraction,cash,position,networth\n";
    for (const auto& row : result.trace) {
      const std::string date = trade.dates[row.day].str();
      if (std::isnan(row.prediction)) {
        std::snprintf(line, sizeof(line), "%s,%.17g,,end,0,%.17g,%.17g,%.17g\n", date.c_str(),
                      row.close, row.cash, row.position, row.networth);
      } else {
        std::snprintf(line, sizeof(line), "%s,%.17g,%.17g,%s,%.17g,%.17g,%.17g,%.17g\n",
                      date.c_str(), row.close, row.prediction,
                      cm::trading::action_name(row.decision.kind), row.decision.fraction,
                      row.cash, row.position, row.networth);
      }
      trace += line;
    }
    const std::string name = cm::trading::strategy_name(strategy);
    write_file((fs::path(cfg.output_dir) / ("backtest_" + split_name + "_" + name + ".csv"))
                   .string(),
               trace);

    std::snprintf(line, sizeof(line), "%s,%.17g,%.17g,%zu\n", name.c_str(),
                  result.final_balance, 100.0 * result.mdd, result.trades);
    summary += line;
    std::printf("%s/%s: final balance %.2f, mdd %.2f%%, trades %zu%s\n", split_name.c_str(),
                name.c_str(), result.final_balance, 100.0 * result.mdd, result.trades,
                result.nonpositive_networth ? " [net worth went nonpositive]" : "");
  }

  write_file(backtest_summary_path(cfg, split_name), summary);
  return 0;
}

// Small CSV table reader for report assembly (header + uniform rows).
std::vector<std::vector<std::string>> read_csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::stringstream ss{text};
  std::string csv_line;
  while (std::getline(ss, csv_line)) {
    if (csv_line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = csv_line.find(',', start);
      if (comma == std::string::npos) {
        fields.push_back(csv_line.substr(start));
        break;
      }
      fields.push_back(csv_line.substr(start, comma - start));
      start = comma + 1;
    }
    rows.push_back(std::move(fields));
  }
  return rows;
}

int cmd_report(const CommonArgs& common) {
  const auto cfg = common.load();

  json bundle;
  bundle["config"] = json::object();
  for (const auto& [key, value] : cfg.effective.entries()) {
    bundle["config"][key] = value;
  }
  bundle["seed"] = cfg.train.seed;

  const std::string ckpt_file = checkpoint_path(cfg, "");
  const cm::train::Checkpoint ckpt = cm::train::load_checkpoint(ckpt_file);
  long long param_count = 0;
  for (const auto& [name, shaped] : ckpt.params) param_count += shaped.second.size();
  bundle["checkpoint"] = {{"path", ckpt_file},
                          {"val_rmse_normalized", ckpt.val_rmse},
                          {"parameters", param_count}};

  const auto history = read_csv_rows(read_file(history_path(cfg), "history.csv"));
  bundle["epochs"] = history.size() > 1 ? history.size() - 1 : 0;

  auto metrics_json = [&](const std::string& split, bool required) -> json {
    const std::string path = metrics_csv_path(cfg, split);
    if (!required && !fs::exists(path)) return nullptr;
    const auto rows = read_csv_rows(read_file(path, ("metrics_" + split + ".csv").c_str()));
    json out = json::object();
    for (std::size_t r = 1; r < rows.size(); ++r) {
      const auto& f = rows[r];
      out[f[0]] = {{"rmse", std::stod(f[1])},
                   {"mape", std::stod(f[2])},
                   {"mae", std::stod(f[3])},
                   {"n", std::stoull(f[4])}};
    }
    return out;
  };
  auto backtest_json = [&](const std::string& split, bool required) -> json {
    const std::string path = backtest_summary_path(cfg, split);
    if (!required && !fs::exists(path)) return nullptr;
    const auto rows =
        read_csv_rows(read_file(path, ("backtest_" + split + "_summary.csv").c_str()));
    json out = json::object();
    for (std::size_t r = 1; r < rows.size(); ++r) {
      const auto& f = rows[r];
      out[f[0]] = {{"final_balance", std::stod(f[1])},
                   {"mdd_percent", std::stod(f[2])},
                   {"trades", std::stoull(f[3])}};
    }
    return out;
  };

  bundle["metrics"] = json::object();
  bundle["backtest"] = json::object();
  // Test artifacts are mandatory; the others are included when present.
  for (const std::string split : {"train", "val", "test"}) {
    const bool required = split == std::string("test");
    const json m = metrics_json(split, required);
    if (!m.is_null()) bundle["metrics"][split] = m;
    const json b = backtest_json(split, required);
    if (!b.is_null()) bundle["backtest"][split] = b;
  }

  fs::create_directories(cfg.output_dir);
  const std::string out_path = (fs::path(cfg.output_dir) / "report.json").string();
  write_file(out_path, bundle.dump(2) + "\n");
  std::printf("report: %s\n", out_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"OHLCV forecasting and trading-simulation pipeline"};
  app.require_subcommand(1);

  CommonArgs common;
  std::string data_override, ckpt_arg, split_name = "test", date_arg;

  CLI::App* ingest = app.add_subcommand("ingest", "Validate an OHLCV CSV file");
  add_common(ingest, common);
  ingest->add_option("--data", data_override, "CSV path (defaults to data.path from config)");

  CLI::App* train = app.add_subcommand("train", "Train a model and write a checkpoint");
  add_common(train, common);

  CLI::App* evaluate = app.add_subcommand("evaluate", "Regression metrics over a split");
  add_common(evaluate, common);
  evaluate->add_option("--checkpoint", ckpt_arg, "Checkpoint file");
  evaluate->add_option("--split", split_name, "train, val, or test")->capture_default_str();

  CLI::App* predict = app.add_subcommand("predict", "Predict the next daily close");
  add_common(predict, common);
  predict->add_option("--checkpoint", ckpt_arg, "Checkpoint file");
  predict->add_option("--date", date_arg, "Target day (default: day after the data ends)");

  CLI::App* backtest = app.add_subcommand("backtest", "Simulate trading strategies on a split");
  add_common(backtest, common);
  backtest->add_option("--checkpoint", ckpt_arg, "Checkpoint file");
  backtest->add_option("--split", split_name, "train, val, or test")->capture_default_str();

  CLI::App* report = app.add_subcommand("report", "Bundle run artifacts into report.json");
  add_common(report, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (app.got_subcommand(ingest)) return cmd_ingest(common, data_override);
    if (app.got_subcommand(train)) return cmd_train(common);
    if (app.got_subcommand(evaluate)) return cmd_evaluate(common, ckpt_arg, split_name);
    if (app.got_subcommand(predict)) return cmd_predict(common, ckpt_arg, date_arg);
    if (app.got_subcommand(backtest)) return cmd_backtest(common, ckpt_arg, split_name);
    if (app.got_subcommand(report)) return cmd_report(common);
  } catch (const cm::config::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const cm::data::DataError& e) {
    if (e.row >= 0) {
      std::fprintf(stderr, "data error (row %d): %s\n", e.row, e.what());
    } else {
      std::fprintf(stderr, "data error: %s\n", e.what());
    }
    return kExitData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return 0;
}
