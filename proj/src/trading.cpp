#include "cm/trading.hpp"

#include "cm/metrics.hpp"

#include <cmath>
#include <limits>

namespace cm::trading {

namespace {

using Kind = TradingError::Kind;

void check_prices(double x, double y) {
  if (!(x > 0.0) || !(y > 0.0)) {
    throw TradingError(Kind::NonPositivePrice, "prices must be positive");
  }
}

void check_risk(double risk) {
  if (!(risk > 0.0) || !(risk < 100.0)) {
    throw TradingError(Kind::BadRisk, "risk must lie in (0, 100) percent");
  }
}

}  // namespace

const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::Vanilla: return "vanilla";
    case Strategy::Smart: return "smart";
    case Strategy::ExtendedSmart: return "extended_smart";
  }
  return "?";
}

Strategy strategy_from_name(const std::string& name) {
  if (name == "vanilla") return Strategy::Vanilla;
  if (name == "smart") return Strategy::Smart;
  if (name == "extended_smart") return Strategy::ExtendedSmart;
  throw TradingError(Kind::InvariantViolation, "unknown strategy '" + name + "'");
}

const char* action_name(Action a) {
  switch (a) {
    case Action::Hold: return "hold";
    case Action::BuyFraction: return "buy_fraction";
    case Action::SellFraction: return "sell_fraction";
    case Action::BuyAll: return "buy_all";
    case Action::SellAll: return "sell_all";
    case Action::SellToShortCap: return "sell_to_short_cap";
  }
  return "?";
}

TradeDecision vanilla_decide(double x, double y, double threshold) {
  check_prices(x, y);
  if (threshold < 0.0) {
    throw TradingError(Kind::InvariantViolation, "threshold must be nonnegative");
  }
  const double d = std::abs(x - y) / x;
  if (d < threshold || x == y) {
    return {Action::Hold, 0.0};
  }
  return x > y ? TradeDecision{Action::SellAll, 1.0} : TradeDecision{Action::BuyAll, 1.0};
}

TradeDecision smart_decide(double x, double y, double risk) {
  check_prices(x, y);
  check_risk(risk);
  const double y_max = (1.0 + risk / 100.0) * y;
  const double y_min = (1.0 - risk / 100.0) * y;
  if (x >= y) {
    if (x >= y_max) return {Action::SellAll, 1.0};
    return {Action::SellFraction, (x - y) / (y_max - y)};
  }
  if (x <= y_min) return {Action::BuyAll, 1.0};
  return {Action::BuyFraction, (y - x) / (y - y_min)};
}

TradeDecision extended_smart_decide(double x, double y, double risk, double position,
                                    double max_short) {
  check_prices(x, y);
  check_risk(risk);
  if (max_short < 0.0) {
    throw TradingError(Kind::InvariantViolation, "max_short must be nonnegative");
  }
  if (position < -max_short) {
    throw TradingError(Kind::ShortCapExceeded, "position already below -max_short");
  }
  const double y_max = (1.0 + risk / 100.0) * y;
  const double y_min = (1.0 - risk / 100.0) * y;
  if (x >= y) {
    if (x >= y_max) return {Action::SellToShortCap, 1.0};
    // Fractional sells only apply to shares actually held.
    if (position > 0.0) return {Action::SellFraction, (x - y) / (y_max - y)};
    return {Action::Hold, 0.0};
  }
  if (x <= y_min) return {Action::BuyAll, 1.0};
  return {Action::BuyFraction, (y - x) / (y - y_min)};
}

PortfolioState execute(const PortfolioState& state, const TradeDecision& decision,
                       double price, double fee_rate, double max_short) {
  if (!(price > 0.0)) {
    throw TradingError(Kind::NonPositivePrice, "execution price must be positive");
  }
  if (state.cash < 0.0) {
    throw TradingError(Kind::InvariantViolation, "cash is negative on entry");
  }

  PortfolioState next = state;
  auto buy_with = [&](double fraction) {
    const double spend = fraction * next.cash;
    next.cash -= spend;
    next.position += spend * (1.0 - fee_rate) / price;
  };
  auto sell_units = [&](double units) {
    next.position -= units;
    next.cash += units * price * (1.0 - fee_rate);
  };

  switch (decision.kind) {
    case Action::Hold:
      break;
    case Action::BuyAll:
      buy_with(1.0);
      break;
    case Action::BuyFraction:
      if (decision.fraction < 0.0 || decision.fraction > 1.0) {
        throw TradingError(Kind::InvariantViolation, "buy fraction outside [0, 1]");
      }
      buy_with(decision.fraction);
      break;
    case Action::SellAll:
      if (next.position > 0.0) sell_units(next.position);
      break;
    case Action::SellFraction:
      if (decision.fraction < 0.0 || decision.fraction > 1.0) {
        throw TradingError(Kind::InvariantViolation, "sell fraction outside [0, 1]");
      }
      if (next.position > 0.0) sell_units(decision.fraction * next.position);
      break;
    case Action::SellToShortCap: {
      const double units = next.position + max_short;
      if (units < 0.0) {
        throw TradingError(Kind::ShortCapExceeded, "position already below -max_short");
      }
      next.cash += units * price * (1.0 - fee_rate);
      next.position = -max_short;  // the cap defines the post-state exactly
      break;
    }
  }
  return next;
}

BacktestResult backtest(std::span<const double> closes, std::span<const double> predictions,
                        Strategy strategy, const StrategyParams& params, double initial_cash) {
  if (closes.size() < 2 || predictions.size() + 1 != closes.size()) {
    throw TradingError(Kind::AlignmentError,
                       "need N >= 2 closes and exactly N-1 next-day predictions, got " +
                           std::to_string(closes.size()) + " and " +
                           std::to_string(predictions.size()));
  }

  BacktestResult result;
  PortfolioState state{initial_cash, 0.0};

  for (std::size_t t = 0; t < closes.size(); ++t) {
    const double x = closes[t];
    TradeDecision decision{Action::Hold, 0.0};
    double prediction = std::numeric_limits<double>::quiet_NaN();

    if (t < predictions.size()) {
      const double y = predictions[t];
      prediction = y;
      switch (strategy) {
        case Strategy::Vanilla:
          decision = vanilla_decide(x, y, params.threshold);
          break;
        case Strategy::Smart:
          decision = smart_decide(x, y, params.risk);
          break;
        case Strategy::ExtendedSmart:
          decision = extended_smart_decide(x, y, params.risk, state.position, params.max_short);
          break;
      }
      const PortfolioState before = state;
      state = execute(state, decision, x, params.fee_rate, params.max_short);
      if (state.cash != before.cash || state.position != before.position) {
        ++result.trades;
      }
    }

    const double networth = state.cash + state.position * x;
    result.networth.push_back(networth);
    result.trace.push_back({t, x, prediction, decision, state.cash, state.position, networth});
    if (networth <= 0.0) {
      result.nonpositive_networth = true;
    }
  }

  result.final_balance = result.networth.back();
  // The drawdown formula needs positive values; a path that goes nonpositive
  // is reported as a total (100%) drawdown instead.
  result.mdd = result.nonpositive_networth ? 1.0 : metrics::mdd(result.networth);
  return result;
}

}  // namespace cm::trading
