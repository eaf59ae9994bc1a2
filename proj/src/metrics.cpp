#include "cm/metrics.hpp"

#include <cmath>
#include <string>

namespace cm::metrics {

namespace {

using Kind = MetricError::Kind;

void check_pair(std::span<const double> actual, std::span<const double> predicted) {
  if (actual.size() != predicted.size()) {
    throw MetricError(Kind::LengthMismatch,
                      "series lengths differ: " + std::to_string(actual.size()) + " vs " +
                          std::to_string(predicted.size()));
  }
  if (actual.empty()) {
    throw MetricError(Kind::Empty, "empty series");
  }
}

}  // namespace

double rmse(std::span<const double> actual, std::span<const double> predicted) {
  check_pair(actual, predicted);
  double ss = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    const double d = actual[i] - predicted[i];
    ss += d * d;
  }
  return std::sqrt(ss / static_cast<double>(actual.size()));
}

double mape(std::span<const double> actual, std::span<const double> predicted) {
  check_pair(actual, predicted);
  double acc = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    if (actual[i] == 0.0) {
      throw MetricError(Kind::ZeroActual, "actual value is zero at index " + std::to_string(i));
    }
    acc += std::abs((actual[i] - predicted[i]) / actual[i]);
  }
  return 100.0 * acc / static_cast<double>(actual.size());
}

double mae(std::span<const double> actual, std::span<const double> predicted) {
  check_pair(actual, predicted);
  double acc = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    acc += std::abs(actual[i] - predicted[i]);
  }
  return acc / static_cast<double>(actual.size());
}

MetricReport report(std::span<const double> actual, std::span<const double> predicted) {
  return MetricReport{rmse(actual, predicted), mape(actual, predicted),
                      mae(actual, predicted), actual.size()};
}

double mdd(std::span<const double> networth) {
  if (networth.empty()) {
    throw MetricError(Kind::Empty, "empty net-worth series");
  }
  double peak = 0.0;
  double worst = 0.0;
  for (std::size_t i = 0; i < networth.size(); ++i) {
    const double v = networth[i];
    if (v <= 0.0) {
      throw MetricError(Kind::NonPositiveValue,
                        "net worth is not positive at index " + std::to_string(i));
    }
    peak = std::max(peak, v);
    worst = std::max(worst, (peak - v) / peak);
  }
  return worst;
}

}  // namespace cm::metrics
