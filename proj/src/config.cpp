#include "cm/config.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace cm::config {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= value.size()) {
    const std::size_t comma = value.find(',', start);
    const std::size_t end = comma == std::string::npos ? value.size() : comma;
    const std::string item = trim(std::string_view(value).substr(start, end - start));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const char* expected) {
  throw ConfigError("config key '" + key + "': cannot parse '" + value + "' as " + expected);
}

// Every key the run config understands; unknown keys are typos.
const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "data.path", "output.dir",
      "split.train_start", "split.train_end", "split.val_end", "split.test_end",
      "model.lookback", "model.seq_lens", "model.cmblocks_per_cblock", "model.d_state",
      "model.model_dim", "model.expand", "model.conv_kernel", "model.final_seq_len",
      "model.use_volume", "model.residual", "model.bare_ssm",
      "train.learning_rate", "train.batch_size", "train.weight_decay",
      "train.plateau_factor", "train.plateau_patience", "train.early_stop_patience",
      "train.max_epochs", "train.seed",
      "backtest.strategies", "backtest.threshold", "backtest.risk", "backtest.max_short",
      "backtest.fee_rate", "backtest.initial_cash",
  };
  return keys;
}

}  // namespace

KeyValues KeyValues::parse(std::string_view text) {
  KeyValues kv;
  std::size_t pos = 0;
  int line_no = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const std::string line = trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') {
      if (pos > text.size()) break;
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) {
      throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    }
    kv.values_[key] = value;
    if (pos > text.size()) break;
  }
  return kv;
}

KeyValues KeyValues::parse_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

void KeyValues::apply_override(const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("--set expects key=value, got '" + assignment + "'");
  }
  values_[trim(std::string_view(assignment).substr(0, eq))] =
      trim(std::string_view(assignment).substr(eq + 1));
}

std::string KeyValues::get_string(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("missing required config key '" + key + "'");
  return it->second;
}

std::string KeyValues::get_string(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double KeyValues::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  double v = 0.0;
  const auto [p, ec] = std::from_chars(it->second.data(), it->second.data() + it->second.size(), v);
  if (ec != std::errc{} || p != it->second.data() + it->second.size()) {
    bad_value(key, it->second, "a number");
  }
  return v;
}

int KeyValues::get_int(const std::string& key, int fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  int v = 0;
  const auto [p, ec] = std::from_chars(it->second.data(), it->second.data() + it->second.size(), v);
  if (ec != std::errc{} || p != it->second.data() + it->second.size()) {
    bad_value(key, it->second, "an integer");
  }
  return v;
}

std::uint64_t KeyValues::get_u64(const std::string& key, std::uint64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(it->second.data(), it->second.data() + it->second.size(), v);
  if (ec != std::errc{} || p != it->second.data() + it->second.size()) {
    bad_value(key, it->second, "an unsigned integer");
  }
  return v;
}

bool KeyValues::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  bad_value(key, it->second, "a boolean (true/false)");
}

std::vector<int> KeyValues::get_int_list(const std::string& key, std::vector<int> fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<int> out;
  for (const std::string& item : split_list(it->second)) {
    int v = 0;
    const auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc{} || p != item.data() + item.size()) {
      bad_value(key, it->second, "a comma-separated integer list");
    }
    out.push_back(v);
  }
  if (out.empty()) bad_value(key, it->second, "a nonempty integer list");
  return out;
}

std::vector<std::string> KeyValues::get_string_list(const std::string& key,
                                                    std::vector<std::string> fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  return split_list(it->second);
}

std::string KeyValues::serialize() const {
  std::string out;
  for (const auto& [key, value] : values_) {
    out += key;
    out += " = ";
    out += value;
    out += "\n";
  }
  return out;
}

namespace {

data::Date config_date(const KeyValues& kv, const std::string& key) {
  const std::string v = kv.get_string(key);
  try {
    return data::Date::parse(v);
  } catch (const data::DataError&) {
    throw ConfigError("config key '" + key + "': '" + v + "' is not a YYYY-MM-DD date");
  }
}

}  // namespace

RunConfig RunConfig::from_key_values(const KeyValues& kv) {
  for (const auto& [key, value] : kv.entries()) {
    if (!known_keys().count(key)) {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }

  RunConfig cfg;
  cfg.data_path = kv.get_string("data.path");
  cfg.output_dir = kv.get_string("output.dir", "out");

  cfg.split.train_start = kv.has("split.train_start") ? config_date(kv, "split.train_start")
                                                      : data::Date::from_ymd(2018, 9, 17);
  cfg.split.train_end = kv.has("split.train_end") ? config_date(kv, "split.train_end")
                                                  : data::Date::from_ymd(2022, 9, 17);
  cfg.split.val_end = kv.has("split.val_end") ? config_date(kv, "split.val_end")
                                              : data::Date::from_ymd(2023, 9, 17);
  cfg.split.test_end = kv.has("split.test_end") ? config_date(kv, "split.test_end")
                                                : data::Date::from_ymd(2024, 9, 17);
  if (!cfg.split.ordered()) {
    throw ConfigError("split dates must be strictly increasing");
  }

  model::ModelConfig& m = cfg.model;
  m.lookback = kv.get_int("model.lookback", m.lookback);
  m.cblock_seq_lens = kv.get_int_list("model.seq_lens", m.cblock_seq_lens);
  m.cmblocks_per_cblock = kv.get_int("model.cmblocks_per_cblock", m.cmblocks_per_cblock);
  m.d_state = kv.get_int("model.d_state", m.d_state);
  m.model_dim = kv.get_int("model.model_dim", m.model_dim);
  m.expand = kv.get_int("model.expand", m.expand);
  m.conv_kernel = kv.get_int("model.conv_kernel", m.conv_kernel);
  m.final_seq_len = kv.get_int("model.final_seq_len", m.final_seq_len);
  m.use_volume = kv.get_bool("model.use_volume", m.use_volume);
  m.residual = kv.get_bool("model.residual", m.residual);
  m.bare_ssm = kv.get_bool("model.bare_ssm", m.bare_ssm);
  try {
    m.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }

  train::TrainConfig& t = cfg.train;
  t.learning_rate = kv.get_double("train.learning_rate", t.learning_rate);
  t.batch_size = kv.get_int("train.batch_size", t.batch_size);
  t.weight_decay = kv.get_double("train.weight_decay", t.weight_decay);
  t.plateau_factor = kv.get_double("train.plateau_factor", t.plateau_factor);
  t.plateau_patience = kv.get_int("train.plateau_patience", t.plateau_patience);
  t.early_stop_patience = kv.get_int("train.early_stop_patience", t.early_stop_patience);
  t.max_epochs = kv.get_int("train.max_epochs", t.max_epochs);
  t.seed = kv.get_u64("train.seed", t.seed);
  try {
    t.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }

  BacktestConfig& b = cfg.backtest;
  if (kv.has("backtest.strategies")) {
    b.strategies.clear();
    for (const std::string& name : kv.get_string_list("backtest.strategies", {})) {
      try {
        b.strategies.push_back(trading::strategy_from_name(name));
      } catch (const trading::TradingError&) {
        throw ConfigError("config key 'backtest.strategies': unknown strategy '" + name + "'");
      }
    }
    if (b.strategies.empty()) {
      throw ConfigError("config key 'backtest.strategies' must list at least one strategy");
    }
  }
  b.params.threshold = kv.get_double("backtest.threshold", b.params.threshold);
  b.params.risk = kv.get_double("backtest.risk", b.params.risk);
  b.params.max_short = kv.get_double("backtest.max_short", b.params.max_short);
  b.params.fee_rate = kv.get_double("backtest.fee_rate", b.params.fee_rate);
  b.initial_cash = kv.get_double("backtest.initial_cash", b.initial_cash);

  cfg.effective = kv;
  return cfg;
}

RunConfig RunConfig::load(const std::string& path, const std::vector<std::string>& overrides) {
  KeyValues kv = KeyValues::parse_file(path);
  for (const std::string& assignment : overrides) {
    kv.apply_override(assignment);
  }
  return from_key_values(kv);
}

std::string model_config_text(const model::ModelConfig& m) {
  KeyValues kv;
  kv.set("model.lookback", std::to_string(m.lookback));
  std::string lens;
  for (std::size_t i = 0; i < m.cblock_seq_lens.size(); ++i) {
    if (i) lens += ",";
    lens += std::to_string(m.cblock_seq_lens[i]);
  }
  kv.set("model.seq_lens", lens);
  kv.set("model.cmblocks_per_cblock", std::to_string(m.cmblocks_per_cblock));
  kv.set("model.d_state", std::to_string(m.d_state));
  kv.set("model.model_dim", std::to_string(m.model_dim));
  kv.set("model.expand", std::to_string(m.expand));
  kv.set("model.conv_kernel", std::to_string(m.conv_kernel));
  kv.set("model.final_seq_len", std::to_string(m.final_seq_len));
  kv.set("model.use_volume", m.use_volume ? "true" : "false");
  kv.set("model.residual", m.residual ? "true" : "false");
  kv.set("model.bare_ssm", m.bare_ssm ? "true" : "false");
  return kv.serialize();
}

model::ModelConfig model_config_from_text(const std::string& text) {
  const KeyValues kv = KeyValues::parse(text);
  model::ModelConfig m;
  m.lookback = kv.get_int("model.lookback", m.lookback);
  m.cblock_seq_lens = kv.get_int_list("model.seq_lens", m.cblock_seq_lens);
  m.cmblocks_per_cblock = kv.get_int("model.cmblocks_per_cblock", m.cmblocks_per_cblock);
  m.d_state = kv.get_int("model.d_state", m.d_state);
  m.model_dim = kv.get_int("model.model_dim", m.model_dim);
  m.expand = kv.get_int("model.expand", m.expand);
  m.conv_kernel = kv.get_int("model.conv_kernel", m.conv_kernel);
  m.final_seq_len = kv.get_int("model.final_seq_len", m.final_seq_len);
  m.use_volume = kv.get_bool("model.use_volume", m.use_volume);
  m.residual = kv.get_bool("model.residual", m.residual);
  m.bare_ssm = kv.get_bool("model.bare_ssm", m.bare_ssm);
  m.validate();
  return m;
}

}  // namespace cm::config
