#pragma once

#include <span>
#include <stdexcept>

namespace cm::metrics {

struct MetricError : std::invalid_argument {
  enum class Kind { LengthMismatch, Empty, ZeroActual, NonPositiveValue };

  MetricError(Kind k, const std::string& what) : std::invalid_argument(what), kind(k) {}
  Kind kind;
};

struct MetricReport {
  double rmse = 0.0;
  double mape = 0.0;  // percent
  double mae = 0.0;
  std::size_t n = 0;
};

// sqrt(mean((actual - predicted)^2))
double rmse(std::span<const double> actual, std::span<const double> predicted);

// (100/n) * sum |(actual - predicted) / actual|; refuses zero actuals.
double mape(std::span<const double> actual, std::span<const double> predicted);

// mean |actual - predicted|
double mae(std::span<const double> actual, std::span<const double> predicted);

MetricReport report(std::span<const double> actual, std::span<const double> predicted);

// Maximum drawdown of a positive value series, as a fraction in [0, 1]:
// max over t of (peak_t - value_t) / peak_t with peak_t the running maximum.
double mdd(std::span<const double> networth);

}  // namespace cm::metrics
