#include "cm/trading.hpp"

#include "cm/common.hpp"
#include "support/trading_ref.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

using namespace cm::trading;
using cmtest::RandomScenario;
using cmtest::RefResult;
using cmtest::random_scenario;
using cmtest::ref_simulate;
using Kind = TradingError::Kind;

TEST(VanillaDecide, HandTraces) {
  EXPECT_EQ(vanilla_decide(100.0, 100.5, 0.01).kind, Action::Hold);  // d = 0.005
  EXPECT_EQ(vanilla_decide(100.0, 102.0, 0.01).kind, Action::BuyAll);
  EXPECT_EQ(vanilla_decide(102.0, 100.0, 0.01).kind, Action::SellAll);
  EXPECT_EQ(vanilla_decide(100.0, 100.0, 0.01).kind, Action::Hold);
  EXPECT_EQ(vanilla_decide(100.0, 100.0, 0.0).kind, Action::Hold);  // tie, zero threshold
  EXPECT_THROW(vanilla_decide(0.0, 100.0, 0.01), TradingError);
}

TEST(SmartDecide, HandTraces) {
  const TradeDecision same = smart_decide(100.0, 100.0, 2.0);
  EXPECT_EQ(same.kind, Action::SellFraction);
  EXPECT_DOUBLE_EQ(same.fraction, 0.0);  // boundary continuity

  EXPECT_EQ(smart_decide(103.0, 100.0, 2.0).kind, Action::SellAll);  // x >= y_max = 102

  const TradeDecision buy = smart_decide(99.0, 100.0, 2.0);
  EXPECT_EQ(buy.kind, Action::BuyFraction);
  EXPECT_DOUBLE_EQ(buy.fraction, 0.5);  // (100-99)/(100-98)

  EXPECT_EQ(smart_decide(97.9, 100.0, 2.0).kind, Action::BuyAll);  // below y_min = 98
  EXPECT_THROW(smart_decide(100.0, 100.0, 0.0), TradingError);
  EXPECT_THROW(smart_decide(100.0, 100.0, 100.0), TradingError);
}

TEST(SmartDecide, FractionsStayInUnitInterval) {
  cm::Rng rng(1);
  for (int rep = 0; rep < 2000; ++rep) {
    const double x = rng.uniform(10.0, 200.0);
    const double y = rng.uniform(10.0, 200.0);
    const TradeDecision d = smart_decide(x, y, 2.0);
    EXPECT_GE(d.fraction, 0.0);
    EXPECT_LE(d.fraction, 1.0);
  }
}

TEST(SmartDecide, ContinuousAroundEquality) {
  const double y = 100.0;
  const TradeDecision below = smart_decide(y * (1.0 - 1e-9), y, 2.0);
  const TradeDecision above = smart_decide(y * (1.0 + 1e-9), y, 2.0);
  EXPECT_LT(below.fraction, 1e-6);
  EXPECT_LT(above.fraction, 1e-6);
}

TEST(ExtendedSmartDecide, HandTraces) {
  // Short to the cap when x >= y_max.
  const TradeDecision cap = extended_smart_decide(103.0, 100.0, 2.0, 0.001, 0.002);
  EXPECT_EQ(cap.kind, Action::SellToShortCap);

  // Inside the upper band with no positive shares: hold.
  EXPECT_EQ(extended_smart_decide(101.0, 100.0, 2.0, -0.001, 0.002).kind, Action::Hold);
  EXPECT_EQ(extended_smart_decide(101.0, 100.0, 2.0, 0.0, 0.002).kind, Action::Hold);

  // Positive shares inside the band sell fractionally, like Smart.
  const TradeDecision frac = extended_smart_decide(101.0, 100.0, 2.0, 1.0, 0.002);
  EXPECT_EQ(frac.kind, Action::SellFraction);
  EXPECT_DOUBLE_EQ(frac.fraction, 0.5);

  EXPECT_EQ(extended_smart_decide(97.0, 100.0, 2.0, -0.002, 0.002).kind, Action::BuyAll);
  EXPECT_THROW(extended_smart_decide(101.0, 100.0, 2.0, -0.01, 0.002), TradingError);
}

TEST(Execute, HandArithmetic) {
  const PortfolioState start{100.0, 0.0};
  const PortfolioState held = execute(start, {Action::Hold, 0.0}, 50.0, 0.0);
  EXPECT_DOUBLE_EQ(held.cash, 100.0);
  EXPECT_DOUBLE_EQ(held.position, 0.0);

  const PortfolioState bought = execute(start, {Action::BuyAll, 1.0}, 50.0, 0.0);
  EXPECT_DOUBLE_EQ(bought.cash, 0.0);
  EXPECT_DOUBLE_EQ(bought.position, 2.0);

  const PortfolioState sold =
      execute(PortfolioState{0.0, 2.0}, {Action::SellFraction, 0.5}, 50.0, 0.0);
  EXPECT_DOUBLE_EQ(sold.cash, 50.0);
  EXPECT_DOUBLE_EQ(sold.position, 1.0);

  const PortfolioState capped =
      execute(PortfolioState{10.0, 0.001}, {Action::SellToShortCap, 1.0}, 100.0, 0.0, 0.002);
  EXPECT_DOUBLE_EQ(capped.position, -0.002);
  EXPECT_DOUBLE_EQ(capped.cash, 10.0 + 0.003 * 100.0);
}

TEST(Execute, FeesReduceProceedsAndUnits) {
  const PortfolioState bought =
      execute(PortfolioState{100.0, 0.0}, {Action::BuyAll, 1.0}, 50.0, 0.01);
  EXPECT_DOUBLE_EQ(bought.position, 100.0 * 0.99 / 50.0);
  const PortfolioState sold =
      execute(PortfolioState{0.0, 1.0}, {Action::SellAll, 1.0}, 50.0, 0.01);
  EXPECT_DOUBLE_EQ(sold.cash, 50.0 * 0.99);
}

TEST(Backtest, ThreeDayLadder) {
  const std::vector<double> closes{100.0, 110.0, 121.0};
  const std::vector<double> preds{110.0, 121.0};
  const BacktestResult r =
      backtest(closes, preds, Strategy::Vanilla, StrategyParams{}, 100.0);
  EXPECT_DOUBLE_EQ(r.final_balance, 121.0);
  EXPECT_EQ(r.trades, 1u);  // day-2 buy has no cash left, so no state change
  EXPECT_DOUBLE_EQ(r.mdd, 0.0);
  ASSERT_EQ(r.networth.size(), 3u);
  EXPECT_DOUBLE_EQ(r.networth[0], 100.0);
  EXPECT_DOUBLE_EQ(r.networth[1], 110.0);
}

TEST(Backtest, PerfectFlatPredictionsNeverTrade) {
  std::vector<double> closes{100.0, 100.0, 100.0, 100.0};
  // Fake a flat path via equal predictions: y_t == x_t.
  std::vector<double> preds{100.0, 100.0, 100.0};
  const BacktestResult r = backtest(closes, preds, Strategy::Smart, StrategyParams{}, 100.0);
  EXPECT_EQ(r.trades, 0u);
  EXPECT_DOUBLE_EQ(r.final_balance, 100.0);
}

TEST(Backtest, VanillaAtFullThresholdNeverTrades) {
  cm::Rng rng(2);
  const RandomScenario s = random_scenario(rng, 40);
  StrategyParams p;
  p.threshold = 1.0;
  const BacktestResult r = backtest(s.closes, s.preds, Strategy::Vanilla, p, 100.0);
  EXPECT_EQ(r.trades, 0u);
  EXPECT_DOUBLE_EQ(r.final_balance, 100.0);
}

TEST(Backtest, PerfectForesightOnRallyMatchesBuyAndHold) {
  std::vector<double> closes{100.0};
  for (int i = 0; i < 10; ++i) closes.push_back(closes.back() * 1.02);
  std::vector<double> preds(closes.begin() + 1, closes.end());
  const BacktestResult r =
      backtest(closes, preds, Strategy::Vanilla, StrategyParams{}, 100.0);
  const double buy_and_hold = 100.0 * closes.back() / closes.front();
  EXPECT_NEAR(r.final_balance, buy_and_hold, 1e-9);
}

TEST(Backtest, AlignmentErrors) {
  const std::vector<double> one{100.0};
  const std::vector<double> none{};
  EXPECT_THROW(backtest(none, none, Strategy::Smart, StrategyParams{}, 100.0), TradingError);
  EXPECT_THROW(backtest(one, none, Strategy::Smart, StrategyParams{}, 100.0), TradingError);
  const std::vector<double> three{100.0, 101.0, 102.0};
  EXPECT_THROW(backtest(three, three, Strategy::Smart, StrategyParams{}, 100.0), TradingError);
}

TEST(Backtest, MatchesReferenceSimulatorBitExactly) {
  cm::Rng rng(3);
  for (int rep = 0; rep < 100; ++rep) {
    const RandomScenario s = random_scenario(rng, 2 + rng.below(60));
    StrategyParams p;
    p.fee_rate = rep % 3 == 0 ? 0.002 : 0.0;
    for (const Strategy strat :
         {Strategy::Vanilla, Strategy::Smart, Strategy::ExtendedSmart}) {
      const BacktestResult got = backtest(s.closes, s.preds, strat, p, 100.0);
      const RefResult want = ref_simulate(s.closes, s.preds, strat, p, 100.0);
      ASSERT_EQ(got.networth.size(), want.networth.size());
      for (std::size_t i = 0; i < want.networth.size(); ++i) {
        ASSERT_EQ(got.networth[i], want.networth[i])
            << "rep " << rep << " strategy " << strategy_name(strat) << " day " << i;
      }
      EXPECT_EQ(got.final_balance, want.final_balance);
      EXPECT_EQ(got.trades, want.trades);
      EXPECT_EQ(got.nonpositive_networth, want.nonpositive);
    }
  }
}

TEST(Backtest, InvariantsOverRandomPaths) {
  cm::Rng rng(4);
  for (int rep = 0; rep < 100; ++rep) {
    const RandomScenario s = random_scenario(rng, 2 + rng.below(50));
    StrategyParams p;
    p.fee_rate = rep % 2 == 0 ? 0.001 : 0.0;
    for (const Strategy strat :
         {Strategy::Vanilla, Strategy::Smart, Strategy::ExtendedSmart}) {
      const BacktestResult r = backtest(s.closes, s.preds, strat, p, 100.0);
      for (const auto& row : r.trace) {
        EXPECT_GE(row.cash, 0.0);
        if (strat == Strategy::ExtendedSmart) {
          EXPECT_GE(row.position, -p.max_short - 1e-15);
        } else {
          EXPECT_GE(row.position, 0.0);
        }
      }
    }
  }
}

TEST(Backtest, NonPositiveNetWorthFlagged) {
  // Tiny bankroll shorts at the cap, then the price explodes.
  const std::vector<double> closes{100.0, 100000.0, 100000.0};
  const std::vector<double> preds{50.0, 99000.0};
  StrategyParams p;
  const BacktestResult r = backtest(closes, preds, Strategy::ExtendedSmart, p, 1.0);
  EXPECT_TRUE(r.nonpositive_networth);
  EXPECT_DOUBLE_EQ(r.mdd, 1.0);
  EXPECT_LT(r.networth[1], 0.0);
}

TEST(Strategies, NamesRoundTrip) {
  for (const Strategy s : {Strategy::Vanilla, Strategy::Smart, Strategy::ExtendedSmart}) {
    EXPECT_EQ(strategy_from_name(strategy_name(s)), s);
  }
  EXPECT_THROW(strategy_from_name("hodl"), TradingError);
}
