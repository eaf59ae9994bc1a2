#pragma once

#include "cm/data.hpp"
#include "cm/model.hpp"
#include "cm/trading.hpp"
#include "cm/train.hpp"

#include <map>
#include <string>
#include <vector>

namespace cm::config {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flat dotted-key configuration text:
//   # comment
//   section.key = value
// Later assignments win; `--set section.key=value` overrides from the CLI.
class KeyValues {
 public:
  static KeyValues parse(std::string_view text);
  static KeyValues parse_file(const std::string& path);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  void apply_override(const std::string& key_equals_value);

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<int> get_int_list(const std::string& key, std::vector<int> fallback) const;
  std::vector<std::string> get_string_list(const std::string& key,
                                           std::vector<std::string> fallback) const;

  // Sorted `key = value` lines; parse(serialize()) round-trips.
  std::string serialize() const;

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

struct BacktestConfig {
  std::vector<trading::Strategy> strategies = {
      trading::Strategy::Vanilla, trading::Strategy::Smart, trading::Strategy::ExtendedSmart};
  trading::StrategyParams params;
  double initial_cash = 100.0;
};

struct RunConfig {
  std::string data_path;
  std::string output_dir = "out";
  data::SplitSpec split;
  model::ModelConfig model;
  train::TrainConfig train;
  BacktestConfig backtest;
  KeyValues effective;  // the fully resolved key set this run used

  static RunConfig from_key_values(const KeyValues& kv);
  static RunConfig load(const std::string& path, const std::vector<std::string>& overrides);
};

// Model-config subset as key=value text, embedded into checkpoints.
std::string model_config_text(const model::ModelConfig& m);
model::ModelConfig model_config_from_text(const std::string& text);

}  // namespace cm::config
