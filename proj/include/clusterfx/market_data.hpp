#pragma once

#include "clusterfx/time.hpp"

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace clusterfx {

struct Bar {
    Timestamp timestamp;
    double open = 0.0;
    double high = 0.0;
    double low = 0.0;
    double close = 0.0;
    std::optional<double> volume;

    friend bool operator==(const Bar&, const Bar&) = default;
};

/// Returns an empty string when the bar is well formed, otherwise a description
/// of the first broken price invariant.
std::string check_bar(const Bar& bar);

/// Time-ordered bars at a fixed interval. Market-closure gaps are kept as-is;
/// indicators treat the sequence as index-contiguous.
struct BarSeries {
    std::string symbol;
    int interval_minutes = 15;
    std::vector<Bar> bars;

    std::size_t size() const { return bars.size(); }
    bool empty() const { return bars.empty(); }
    const Bar& operator[](std::size_t i) const { return bars[i]; }
    std::int64_t interval_seconds() const { return std::int64_t{interval_minutes} * kSecondsPerMinute; }

    std::vector<double> opens() const;
    std::vector<double> highs() const;
    std::vector<double> lows() const;
    std::vector<double> closes() const;

    /// Index of the bar stamped exactly `t`, if any. Requires sorted bars.
    std::optional<std::size_t> find(Timestamp t) const;

    friend bool operator==(const BarSeries&, const BarSeries&) = default;
};

/// Reads header-prefixed CSV (timestamp,open,high,low,close[,volume]) and
/// returns a sorted series. Throws MalformedRow, InvariantViolation or
/// DuplicateTimestamp; messages carry the 1-based file line.
BarSeries parse_csv(std::istream& in, int interval_minutes, std::string symbol = {});
BarSeries load_csv(const std::string& path, int interval_minutes, std::string symbol = {});

void write_csv(std::ostream& out, const BarSeries& series);

struct SeriesGap {
    std::size_t index = 0; ///< index of the bar after the gap
    Timestamp from;
    Timestamp to;
    std::int64_t missing_bars = 0;
};

struct InvariantBreach {
    std::size_t index = 0;
    Timestamp timestamp;
    std::string message;
};

struct ValidationReport {
    std::vector<SeriesGap> gaps;
    std::vector<Timestamp> duplicates;
    std::vector<InvariantBreach> breaches;

    bool clean() const { return gaps.empty() && duplicates.empty() && breaches.empty(); }
    /// Duplicates or price/ordering breaches; gaps alone are not hard errors.
    bool has_errors() const { return !duplicates.empty() || !breaches.empty(); }

    std::string to_text() const;
    std::string to_json() const;
};

/// Report-only scan; never throws and never modifies the series.
ValidationReport validate_series(const BarSeries& series);

enum class SplitMode { ByRatio, ByDate };

struct SplitSpec {
    SplitMode mode = SplitMode::ByRatio;
    double train_fraction = 0.8;
    Timestamp train_end;
    Timestamp test_start;
    double gap_hours = 0.0;

    static SplitSpec by_ratio(double fraction, double gap_hours = 0.0);
    static SplitSpec by_date(Timestamp train_end, Timestamp test_start, double gap_hours);

    std::int64_t gap_seconds() const;
    /// Throws InvalidArgument when the spec cannot be honoured.
    void validate() const;
};

struct SplitResult {
    BarSeries train;
    BarSeries test;
};

/// Ratio mode: first floor(N * fraction) bars train; date mode: bars stamped
/// <= train_end train, bars >= test_start test. In both modes test bars closer
/// than gap_hours to the last training bar are dropped.
SplitResult split_with_gap(const BarSeries& series, const SplitSpec& spec);

} // namespace clusterfx
