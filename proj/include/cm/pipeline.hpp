#pragma once

#include "cm/config.hpp"
#include "cm/metrics.hpp"

namespace cm::pipeline {

struct Prepared {
  data::Splits splits;
  data::Normalizer normalizer;  // fitted on the train split only
  std::vector<data::WindowSample> train_w;
  std::vector<data::WindowSample> val_w;
  std::vector<data::WindowSample> test_w;
};

// Parse, split, fit the normalizer, and window every split.
Prepared prepare(const config::RunConfig& cfg);

const data::Dataset& segment_for(const Prepared& p, const std::string& split_name);
const std::vector<data::WindowSample>& windows_for(const Prepared& p,
                                                   const std::string& split_name);

// Per-target-day series over one split. Predictions start `lookback` days
// into the split so no input window leaves it.
struct EvalSeries {
  std::vector<data::Date> dates;      // target days
  std::vector<double> actual;         // close on the target day
  std::vector<double> persistence;    // close the day before (naive forecast)
  std::vector<double> predicted_usd;  // model forecast, de-normalized
};

EvalSeries eval_series(const model::CryptoMamba& model, const data::Dataset& segment,
                       const std::vector<data::WindowSample>& windows,
                       const data::Normalizer& normalizer);

// Trading view of the same forecasts: closes run from the day before the
// first target through the last target, predictions[t] forecasts closes[t+1].
struct TradingSeries {
  std::vector<data::Date> dates;
  std::vector<double> closes;
  std::vector<double> predictions;
};

TradingSeries trading_series(const EvalSeries& eval);

}  // namespace cm::pipeline
