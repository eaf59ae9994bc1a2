#include "cm/pipeline.hpp"

#include "cm/train.hpp"

namespace cm::pipeline {

Prepared prepare(const config::RunConfig& cfg) {
  const data::Dataset dataset = data::parse_csv_file(cfg.data_path);
  data::Splits splits = data::split(dataset, cfg.split);
  data::Normalizer normalizer = data::Normalizer::fit(splits.train, cfg.model.use_volume);

  const int lookback = cfg.model.lookback;
  const bool volume = cfg.model.use_volume;
  auto train_w = data::make_windows(splits.train, lookback, volume, normalizer);
  auto val_w = data::make_windows(splits.val, lookback, volume, normalizer);
  auto test_w = data::make_windows(splits.test, lookback, volume, normalizer);

  return Prepared{std::move(splits), std::move(normalizer), std::move(train_w),
                  std::move(val_w), std::move(test_w)};
}

const data::Dataset& segment_for(const Prepared& p, const std::string& split_name) {
  if (split_name == "train") return p.splits.train;
  if (split_name == "val") return p.splits.val;
  if (split_name == "test") return p.splits.test;
  throw config::ConfigError("unknown split '" + split_name + "' (expected train/val/test)");
}

const std::vector<data::WindowSample>& windows_for(const Prepared& p,
                                                   const std::string& split_name) {
  if (split_name == "train") return p.train_w;
  if (split_name == "val") return p.val_w;
  if (split_name == "test") return p.test_w;
  throw config::ConfigError("unknown split '" + split_name + "' (expected train/val/test)");
}

EvalSeries eval_series(const model::CryptoMamba& model, const data::Dataset& segment,
                       const std::vector<data::WindowSample>& windows,
                       const data::Normalizer& normalizer) {
  const std::vector<double> normalized = train::predict_normalized(model, windows);
  const int lookback = model.config().lookback;

  EvalSeries out;
  out.dates.reserve(windows.size());
  out.actual.reserve(windows.size());
  out.persistence.reserve(windows.size());
  out.predicted_usd.reserve(windows.size());
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const std::size_t t = static_cast<std::size_t>(lookback) + i;
    out.dates.push_back(segment.bars[t].date);
    out.actual.push_back(segment.bars[t].close);
    out.persistence.push_back(segment.bars[t - 1].close);
    out.predicted_usd.push_back(normalizer.denormalize_target(normalized[i]));
  }
  return out;
}

TradingSeries trading_series(const EvalSeries& eval) {
  TradingSeries out;
  if (eval.dates.empty()) return out;
  out.dates.push_back(eval.dates.front() - 1);
  out.closes.push_back(eval.persistence.front());
  for (std::size_t i = 0; i < eval.dates.size(); ++i) {
    out.dates.push_back(eval.dates[i]);
    out.closes.push_back(eval.actual[i]);
    out.predictions.push_back(eval.predicted_usd[i]);
  }
  return out;
}

}  // namespace cm::pipeline
