#include "cm/data.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace cm::data {

namespace {

using Kind = DataError::Kind;

[[noreturn]] void fail(Kind kind, const std::string& msg, int row = -1) {
  throw DataError(kind, msg, row);
}

std::chrono::sys_days epoch() {
  using namespace std::chrono;
  return sys_days{year{1970} / January / 1};
}

}  // namespace

Date Date::from_ymd(int y, unsigned m, unsigned d) {
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{m}, day{d}};
  if (!ymd.ok()) {
    fail(Kind::MalformedRow, "invalid calendar date");
  }
  return Date(static_cast<std::int32_t>((sys_days{ymd} - epoch()).count()));
}

Date Date::parse(std::string_view text) {
  int y = 0;
  unsigned m = 0, d = 0;
  if (text.size() != 10 || text[4] != '-' || text[7] != '-' ||
      std::from_chars(text.data(), text.data() + 4, y).ec != std::errc{} ||
      std::from_chars(text.data() + 5, text.data() + 7, m).ec != std::errc{} ||
      std::from_chars(text.data() + 8, text.data() + 10, d).ec != std::errc{}) {
    fail(Kind::MalformedRow, "expected date as YYYY-MM-DD, got '" + std::string(text) + "'");
  }
  return from_ymd(y, m, d);
}

std::string Date::str() const {
  using namespace std::chrono;
  const year_month_day ymd{epoch() + days{days_}};
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

Date Date::operator+(int n) const { return Date(days_ + n); }

bool OhlcvBar::well_formed() const {
  if (!(std::isfinite(open) && std::isfinite(high) && std::isfinite(low) &&
        std::isfinite(close) && std::isfinite(volume))) {
    return false;
  }
  return low <= std::min(open, close) && high >= std::max(open, close) &&
         low <= high && volume >= 0.0;
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

double parse_number(std::string_view field, int row) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size() || !std::isfinite(value)) {
    fail(Kind::MalformedRow, "unparseable numeric field '" + std::string(field) + "'", row);
  }
  return value;
}

struct HeaderLayout {
  int date = -1, open = -1, high = -1, low = -1, close = -1, volume = -1;
  std::size_t columns = 0;
};

HeaderLayout parse_header(std::string_view line) {
  HeaderLayout h;
  const auto names = split_fields(line);
  h.columns = names.size();
  for (std::size_t i = 0; i < names.size(); ++i) {
    const std::string_view n = names[i];
    const int idx = static_cast<int>(i);
    if (n == "Date") h.date = idx;
    else if (n == "Open") h.open = idx;
    else if (n == "High") h.high = idx;
    else if (n == "Low") h.low = idx;
    else if (n == "Close") h.close = idx;
    else if (n == "Volume") h.volume = idx;
    else if (n == "Adj Close") continue;  // present in Yahoo exports, ignored
    else fail(Kind::MalformedRow, "unknown column '" + std::string(n) + "'", 1);
  }
  if (h.date < 0 || h.open < 0 || h.high < 0 || h.low < 0 || h.close < 0 || h.volume < 0) {
    fail(Kind::MalformedRow, "header must name Date,Open,High,Low,Close,Volume", 1);
  }
  return h;
}

}  // namespace

Dataset parse_csv(std::string_view text) {
  Dataset out;
  std::size_t pos = 0;
  int row = 0;
  HeaderLayout header;
  bool saw_header = false;

  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) {
      if (pos > text.size()) break;
      continue;
    }
    ++row;

    if (!saw_header) {
      header = parse_header(line);
      saw_header = true;
      continue;
    }

    const auto fields = split_fields(line);
    if (fields.size() != header.columns) {
      fail(Kind::MalformedRow, "expected " + std::to_string(header.columns) +
                                   " fields, got " + std::to_string(fields.size()),
           row);
    }

    OhlcvBar bar;
    bar.date = Date::parse(fields[header.date]);
    bar.open = parse_number(fields[header.open], row);
    bar.high = parse_number(fields[header.high], row);
    bar.low = parse_number(fields[header.low], row);
    bar.close = parse_number(fields[header.close], row);
    bar.volume = parse_number(fields[header.volume], row);
    if (!bar.well_formed()) {
      fail(Kind::MalformedRow, "bar violates OHLCV bounds on " + bar.date.str(), row);
    }

    if (!out.bars.empty()) {
      const Date prev = out.bars.back().date;
      if (bar.date <= prev) {
        fail(Kind::NonMonotonicDates,
             "date " + bar.date.str() + " does not follow " + prev.str(), row);
      }
      if (bar.date - prev != 1) {
        fail(Kind::MissingDay,
             "calendar gap between " + prev.str() + " and " + bar.date.str(), row);
      }
    }
    out.bars.push_back(bar);
  }

  if (!saw_header || out.bars.empty()) {
    fail(Kind::EmptyInput, "no data rows");
  }
  return out;
}

Dataset parse_csv_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    fail(Kind::EmptyInput, "cannot open '" + path + "'");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str());
}

std::string serialize_csv(const Dataset& d) {
  std::string out = "Date,Open,High,Low,Close,Volume\n";
  char line[256];
  for (const OhlcvBar& b : d.bars) {
    std::snprintf(line, sizeof(line), "%s,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  b.date.str().c_str(), b.open, b.high, b.low, b.close, b.volume);
    out += line;
  }
  return out;
}

Splits split(const Dataset& dataset, const SplitSpec& spec) {
  if (!spec.ordered()) {
    fail(Kind::InsufficientCoverage, "split boundaries must be strictly increasing");
  }
  if (dataset.empty() || dataset.first_date() > spec.train_start ||
      dataset.last_date() < spec.test_end - 1) {
    fail(Kind::InsufficientCoverage, "dataset does not cover the requested span");
  }

  auto take = [&dataset](Date begin, Date end) {
    Dataset seg;
    // Contiguous daily series, so the range is a direct slice.
    const int offset = begin - dataset.first_date();
    const int count = end - begin;
    seg.bars.assign(dataset.bars.begin() + offset, dataset.bars.begin() + offset + count);
    return seg;
  };

  return Splits{take(spec.train_start, spec.train_end),
                take(spec.train_end, spec.val_end),
                take(spec.val_end, spec.test_end)};
}

Normalizer Normalizer::fit(const Dataset& train_segment, bool use_volume) {
  if (train_segment.empty()) {
    fail(Kind::EmptyInput, "cannot fit a normalizer on an empty segment");
  }
  const int features = use_volume ? 5 : 4;
  const Eigen::Index n = static_cast<Eigen::Index>(train_segment.size());

  Eigen::MatrixXd raw(n, features);
  for (Eigen::Index i = 0; i < n; ++i) {
    const OhlcvBar& b = train_segment.bars[static_cast<std::size_t>(i)];
    raw(i, 0) = b.open;
    raw(i, 1) = b.high;
    raw(i, 2) = b.low;
    raw(i, 3) = b.close;
    if (use_volume) raw(i, 4) = b.volume;
  }

  Eigen::VectorXd shift = raw.colwise().mean();
  Eigen::VectorXd scale(features);
  for (int f = 0; f < features; ++f) {
    // Population standard deviation.
    scale(f) = std::sqrt((raw.col(f).array() - shift(f)).square().mean());
    if (scale(f) <= 0.0) {
      static const char* kNames[] = {"open", "high", "low", "close", "volume"};
      fail(Kind::DegenerateFeature,
           std::string("feature '") + kNames[f] + "' is constant over the training split");
    }
  }
  return Normalizer(std::move(shift), std::move(scale));
}

Eigen::RowVectorXd Normalizer::feature_row(const OhlcvBar& bar) const {
  Eigen::RowVectorXd row(num_features());
  row(0) = apply(0, bar.open);
  row(1) = apply(1, bar.high);
  row(2) = apply(2, bar.low);
  row(3) = apply(3, bar.close);
  if (uses_volume()) row(4) = apply(4, bar.volume);
  return row;
}

std::vector<WindowSample> make_windows(const Dataset& segment, int lookback,
                                       bool use_volume, const Normalizer& normalizer) {
  if (lookback <= 0) {
    fail(Kind::SegmentTooShort, "lookback must be positive");
  }
  const int features = use_volume ? 5 : 4;
  if (normalizer.num_features() < features) {
    fail(Kind::DegenerateFeature, "normalizer was fitted without volume");
  }
  const int n = static_cast<int>(segment.size());
  if (n <= lookback) {
    fail(Kind::SegmentTooShort, "segment of " + std::to_string(n) +
                                    " bars has no full " + std::to_string(lookback) +
                                    "-day window with a target");
  }

  std::vector<WindowSample> out;
  out.reserve(static_cast<std::size_t>(n - lookback));
  for (int t = lookback; t < n; ++t) {
    WindowSample s;
    s.inputs.resize(lookback, features);
    for (int r = 0; r < lookback; ++r) {
      s.inputs.row(r) = normalizer.feature_row(segment.bars[static_cast<std::size_t>(t - lookback + r)])
                            .head(features);
    }
    s.target = normalizer.normalize_target(segment.bars[static_cast<std::size_t>(t)].close);
    s.target_date = segment.bars[static_cast<std::size_t>(t)].date;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace cm::data
