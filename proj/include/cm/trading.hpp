#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cm::trading {

struct TradingError : std::invalid_argument {
  enum class Kind {
    NonPositivePrice,
    BadRisk,
    ShortCapExceeded,
    InvariantViolation,
    AlignmentError,
  };

  TradingError(Kind k, const std::string& what) : std::invalid_argument(what), kind(k) {}
  Kind kind;
};

enum class Strategy { Vanilla, Smart, ExtendedSmart };

const char* strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& name);

enum class Action {
  Hold,
  BuyFraction,   // spend fraction of cash
  SellFraction,  // sell fraction of held units
  BuyAll,
  SellAll,
  SellToShortCap,  // sell position + max_short units
};

const char* action_name(Action a);

struct TradeDecision {
  Action kind = Action::Hold;
  double fraction = 0.0;  // meaningful for the fraction variants only
};

struct StrategyParams {
  double threshold = 0.01;  // Vanilla: minimum |x-y|/x that triggers a trade
  double risk = 2.0;        // Smart variants: percent band around the prediction
  double max_short = 0.002; // Extended Smart: maximum negative position, units
  double fee_rate = 0.0;    // fraction of traded notional
};

// Cash plus position; cash never goes negative. A negative position only
// arises under Extended Smart.
struct PortfolioState {
  double cash = 0.0;
  double position = 0.0;
};

// Trade iff the relative gap d = |x-y|/x reaches the threshold; then go all
// in on the predicted side.
TradeDecision vanilla_decide(double today_close, double predicted_close, double threshold);

// Scale the trade by where x falls in the band [(1-risk%)y, (1+risk%)y].
TradeDecision smart_decide(double today_close, double predicted_close, double risk);

// Smart with shorting: at or above the band cap, sell down to -max_short;
// inside the upper band only positive holdings are sold.
TradeDecision extended_smart_decide(double today_close, double predicted_close, double risk,
                                    double position, double max_short);

// Applies a decision at the given price. `max_short` is only used for
// SellToShortCap. Fees reduce bought units and sale proceeds.
PortfolioState execute(const PortfolioState& state, const TradeDecision& decision,
                       double price, double fee_rate, double max_short = 0.0);

struct TraceRow {
  std::size_t day = 0;
  double close = 0.0;
  double prediction = 0.0;  // NaN on the final valuation-only day
  TradeDecision decision;
  double cash = 0.0;
  double position = 0.0;
  double networth = 0.0;
};

struct BacktestResult {
  std::vector<double> networth;  // one entry per close, after that day's trade
  std::vector<TraceRow> trace;
  double final_balance = 0.0;
  double mdd = 0.0;  // fraction; 1.0 when the flag below is set
  std::size_t trades = 0;
  bool nonpositive_networth = false;
};

// Day-by-day simulation. closes has one more entry than predictions:
// predictions[t] forecasts closes[t+1] and is acted on at closes[t]; the
// last close is valued without trading. Start-of-run cash is initial_cash.
BacktestResult backtest(std::span<const double> closes, std::span<const double> predictions,
                        Strategy strategy, const StrategyParams& params, double initial_cash);

}  // namespace cm::trading
