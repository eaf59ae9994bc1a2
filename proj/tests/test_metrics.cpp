#include "cm/metrics.hpp"

#include "cm/common.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

using namespace cm::metrics;
using Kind = MetricError::Kind;

namespace {

// Quadratic-time drawdown: max over pairs i <= t.
double brute_force_mdd(const std::vector<double>& p) {
  double worst = 0.0;
  for (std::size_t t = 0; t < p.size(); ++t) {
    for (std::size_t i = 0; i <= t; ++i) {
      worst = std::max(worst, (p[i] - p[t]) / p[i]);
    }
  }
  return worst;
}

Kind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const MetricError& e) {
    return e.kind;
  }
  throw std::runtime_error("expected a MetricError");
}

}  // namespace

TEST(Rmse, HandValues) {
  const std::vector<double> y{0.0, 4.0}, yhat{0.0, 0.0};
  EXPECT_NEAR(rmse(y, yhat), 2.8284271247461903, 1e-12);
  EXPECT_DOUBLE_EQ(rmse(y, y), 0.0);
}

TEST(Rmse, ScalesHomogeneously) {
  cm::Rng rng(1);
  std::vector<double> y, yhat;
  for (int i = 0; i < 50; ++i) {
    y.push_back(rng.uniform(10.0, 20.0));
    yhat.push_back(rng.uniform(10.0, 20.0));
  }
  const double base = rmse(y, yhat);
  std::vector<double> y2 = y, yhat2 = yhat;
  for (auto& v : y2) v *= 3.5;
  for (auto& v : yhat2) v *= 3.5;
  EXPECT_NEAR(rmse(y2, yhat2), 3.5 * base, 1e-12 * base);
}

TEST(Mape, HandValues) {
  const std::vector<double> y{100.0}, yhat{98.0};
  EXPECT_DOUBLE_EQ(mape(y, yhat), 2.0);
  EXPECT_DOUBLE_EQ(mape(y, y), 0.0);
}

TEST(Mape, ScaleInvariant) {
  cm::Rng rng(2);
  std::vector<double> y, yhat;
  for (int i = 0; i < 50; ++i) {
    y.push_back(rng.uniform(10.0, 20.0));
    yhat.push_back(rng.uniform(10.0, 20.0));
  }
  const double base = mape(y, yhat);
  std::vector<double> y2 = y, yhat2 = yhat;
  for (auto& v : y2) v *= 7.0;
  for (auto& v : yhat2) v *= 7.0;
  EXPECT_NEAR(mape(y2, yhat2), base, 1e-10);
}

TEST(Mape, RefusesZeroActual) {
  const std::vector<double> y{1.0, 0.0}, yhat{1.0, 1.0};
  EXPECT_EQ(kind_of([&] { mape(y, yhat); }), Kind::ZeroActual);
}

TEST(Mae, HandValues) {
  const std::vector<double> y{0.0, 4.0}, yhat{0.0, 0.0};
  EXPECT_DOUBLE_EQ(mae(y, yhat), 2.0);
  EXPECT_DOUBLE_EQ(mae(y, y), 0.0);
}

TEST(Metrics, MaeNeverExceedsRmse) {
  cm::Rng rng(3);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 1 + rng.below(40);
    std::vector<double> y(n), yhat(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = rng.uniform(-5.0, 5.0);
      yhat[i] = rng.uniform(-5.0, 5.0);
    }
    EXPECT_LE(mae(y, yhat), rmse(y, yhat) + 1e-12);
  }
}

TEST(Metrics, LengthAndEmptyErrors) {
  const std::vector<double> a{1.0, 2.0}, b{1.0};
  EXPECT_EQ(kind_of([&] { rmse(a, b); }), Kind::LengthMismatch);
  EXPECT_EQ(kind_of([&] { mae(std::vector<double>{}, std::vector<double>{}); }), Kind::Empty);
}

TEST(Mdd, HandCase) {
  const std::vector<double> p{100.0, 80.0, 90.0};
  EXPECT_DOUBLE_EQ(mdd(p), 0.20);
}

TEST(Mdd, NondecreasingSeriesIsZero) {
  const std::vector<double> p{1.0, 1.0, 2.0, 3.5, 3.5, 10.0};
  EXPECT_DOUBLE_EQ(mdd(p), 0.0);
  EXPECT_DOUBLE_EQ(mdd(std::vector<double>{42.0}), 0.0);
}

TEST(Mdd, MatchesBruteForceExactly) {
  cm::Rng rng(4);
  for (int rep = 0; rep < 1000; ++rep) {
    const std::size_t n = 1 + rng.below(200);
    std::vector<double> p(n);
    double v = rng.uniform(50.0, 150.0);
    for (std::size_t i = 0; i < n; ++i) {
      v *= std::exp(rng.uniform(-0.1, 0.1));
      p[i] = v;
    }
    EXPECT_EQ(mdd(p), brute_force_mdd(p)) << "rep " << rep;
  }
}

TEST(Mdd, InvariantUnderPositiveScaling) {
  cm::Rng rng(5);
  std::vector<double> p;
  double v = 100.0;
  for (int i = 0; i < 100; ++i) {
    v *= std::exp(rng.uniform(-0.05, 0.05));
    p.push_back(v);
  }
  const double base = mdd(p);
  std::vector<double> scaled = p;
  for (auto& x : scaled) x *= 123.456;
  EXPECT_NEAR(mdd(scaled), base, 1e-14);
}

TEST(Mdd, AppendingNewMaximumNeverIncreases) {
  cm::Rng rng(6);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<double> p;
    double v = 100.0;
    for (int i = 0; i < 30; ++i) {
      v *= std::exp(rng.uniform(-0.08, 0.08));
      p.push_back(v);
    }
    const double before = mdd(p);
    p.push_back(*std::max_element(p.begin(), p.end()) + 1.0);
    EXPECT_LE(mdd(p), before + 1e-15);
  }
}

TEST(Mdd, RejectsNonPositiveValues) {
  EXPECT_EQ(kind_of([] { mdd(std::vector<double>{10.0, 0.0}); }), Kind::NonPositiveValue);
  EXPECT_EQ(kind_of([] { mdd(std::vector<double>{10.0, -3.0}); }), Kind::NonPositiveValue);
}

TEST(Report, BundlesAllThree) {
  const std::vector<double> y{100.0, 110.0}, yhat{99.0, 108.0};
  const MetricReport r = report(y, yhat);
  EXPECT_EQ(r.n, 2u);
  EXPECT_NEAR(r.mae, 1.5, 1e-12);
  EXPECT_GT(r.rmse, 0.0);
  EXPECT_GT(r.mape, 0.0);
}
