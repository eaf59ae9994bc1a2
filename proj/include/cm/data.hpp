#pragma once

#include <Eigen/Dense>

#include <compare>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cm::data {

// Calendar day (UTC), stored as days since 1970-01-01.
class Date {
 public:
  Date() = default;
  static Date from_ymd(int year, unsigned month, unsigned day);
  // Parses "YYYY-MM-DD"; throws DataError{MalformedRow} on anything else.
  static Date parse(std::string_view text);

  std::string str() const;
  std::int32_t days_since_epoch() const { return days_; }

  Date operator+(int n) const;
  Date operator-(int n) const { return *this + (-n); }
  int operator-(Date other) const { return days_ - other.days_; }
  Date& operator++() { ++days_; return *this; }
  friend auto operator<=>(Date, Date) = default;

 private:
  explicit Date(std::int32_t days) : days_(days) {}
  std::int32_t days_ = 0;
};

struct DataError : std::runtime_error {
  enum class Kind {
    MalformedRow,
    NonMonotonicDates,
    MissingDay,
    EmptyInput,
    InsufficientCoverage,
    SegmentTooShort,
    DegenerateFeature,
  };

  DataError(Kind k, const std::string& what, int row = -1)
      : std::runtime_error(what), kind(k), row(row) {}

  Kind kind;
  int row;  // 1-based CSV line when applicable, -1 otherwise
};

struct OhlcvBar {
  Date date;
  double open = 0.0;
  double high = 0.0;
  double low = 0.0;
  double close = 0.0;
  double volume = 0.0;

  // low <= min(open, close), high >= max(open, close), volume >= 0.
  bool well_formed() const;
};

// Daily bar series: strictly increasing dates with no calendar gaps.
struct Dataset {
  std::vector<OhlcvBar> bars;

  std::size_t size() const { return bars.size(); }
  bool empty() const { return bars.empty(); }
  Date first_date() const { return bars.front().date; }
  Date last_date() const { return bars.back().date; }
};

// Parses the daily OHLCV export format: header
// `Date,Open,High,Low,Close,Volume` (an `Adj Close` column is ignored),
// ISO dates, decimal prices. Gaps and out-of-order dates are hard errors.
Dataset parse_csv(std::string_view text);
Dataset parse_csv_file(const std::string& path);

// Canonical serialization; parse_csv(serialize_csv(d)) reproduces d exactly.
std::string serialize_csv(const Dataset& d);

// Half-open split boundaries: [train_start, train_end), [train_end, val_end),
// [val_end, test_end). A boundary day belongs to the later split.
struct SplitSpec {
  Date train_start;
  Date train_end;
  Date val_end;
  Date test_end;

  bool ordered() const {
    return train_start < train_end && train_end < val_end && val_end < test_end;
  }
};

struct Splits {
  Dataset train;
  Dataset val;
  Dataset test;
};

// Throws DataError{InsufficientCoverage} when the dataset does not cover
// [train_start, test_end) or the spec is degenerate.
Splits split(const Dataset& dataset, const SplitSpec& spec);

// Per-feature affine normalization (z-score), fitted on the training split
// only. The target (next-day close) shares the close feature's parameters so
// normalized predictions invert back to prices consistently.
class Normalizer {
 public:
  static constexpr int kCloseFeature = 3;  // open, high, low, close[, volume]

  static Normalizer fit(const Dataset& train_segment, bool use_volume);

  int num_features() const { return static_cast<int>(shift_.size()); }
  bool uses_volume() const { return num_features() == 5; }

  double apply(int feature, double raw) const {
    return (raw - shift_[feature]) / scale_[feature];
  }
  double invert(int feature, double normalized) const {
    return normalized * scale_[feature] + shift_[feature];
  }
  double normalize_target(double close) const { return apply(kCloseFeature, close); }
  double denormalize_target(double z) const { return invert(kCloseFeature, z); }

  // Normalized feature row for one bar, ordered (open, high, low, close[, volume]).
  Eigen::RowVectorXd feature_row(const OhlcvBar& bar) const;

  const Eigen::VectorXd& shift() const { return shift_; }
  const Eigen::VectorXd& scale() const { return scale_; }

 private:
  Normalizer(Eigen::VectorXd shift, Eigen::VectorXd scale)
      : shift_(std::move(shift)), scale_(std::move(scale)) {}

  Eigen::VectorXd shift_;
  Eigen::VectorXd scale_;
};

// One supervised sample: `lookback` normalized feature rows and the
// normalized close of the following day.
struct WindowSample {
  Eigen::MatrixXd inputs;  // lookback x num_features
  double target = 0.0;
  Date target_date;
};

// Builds one sample per day whose full lookback window lies inside the
// segment; sample count is segment size - lookback. Because windows never
// leave the segment, the first `lookback` days of each split are warm-up
// only and no input row crosses a split boundary.
std::vector<WindowSample> make_windows(const Dataset& segment, int lookback,
                                       bool use_volume, const Normalizer& normalizer);

}  // namespace cm::data
