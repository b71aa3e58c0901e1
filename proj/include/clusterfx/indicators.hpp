#pragma once

#include "clusterfx/market_data.hpp"

#include <cmath>
#include <cstddef>
#include <iosfwd>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace clusterfx {

inline constexpr double kUndefined = std::numeric_limits<double>::quiet_NaN();

/// Per-bar values aligned to a BarSeries. Leading `warmup` entries are NaN.
/// A few indicators (DX) may also leave isolated interior values undefined.
struct IndicatorColumn {
    std::string name;
    std::vector<double> values;
    std::size_t warmup = 0;

    std::size_t size() const { return values.size(); }
    bool defined(std::size_t i) const { return i < values.size() && !std::isnan(values[i]); }
    double operator[](std::size_t i) const { return values[i]; }
};

class FeatureFrame {
public:
    FeatureFrame() = default;
    FeatureFrame(std::string series_ref, std::vector<Timestamp> timestamps);

    const std::string& series_ref() const { return series_ref_; }
    const std::vector<Timestamp>& timestamps() const { return timestamps_; }
    std::size_t rows() const { return timestamps_.size(); }
    std::size_t cols() const { return columns_.size(); }

    /// Throws ShapeMismatch on length mismatch, InvalidArgument on a repeated name.
    void add(IndicatorColumn column);
    bool has(const std::string& name) const { return index_.count(name) != 0; }
    const IndicatorColumn& column(const std::string& name) const;
    const std::vector<IndicatorColumn>& columns() const { return columns_; }
    std::vector<std::string> names() const;

    /// One row per bar; undefined cells are left empty.
    void write_csv(std::ostream& out) const;
    /// Sidecar listing column names and warmups.
    std::string manifest_json() const;
    static FeatureFrame read_csv(std::istream& in, std::string series_ref = {});

private:
    std::string series_ref_;
    std::vector<Timestamp> timestamps_;
    std::vector<IndicatorColumn> columns_;
    std::map<std::string, std::size_t> index_;
};

struct EventMask {
    std::string kind;
    std::vector<bool> flags;

    std::size_t size() const { return flags.size(); }
    std::size_t count() const;
};

/// Rolling primitives skip any leading NaNs of their input, so they compose
/// (e.g. an SMA of the MACD line). They throw WindowTooLong when n exceeds the
/// input length; when n exceeds the defined suffix only, the result is all
/// undefined.
IndicatorColumn sma(std::span<const double> values, std::size_t n, std::string name = "sma");
IndicatorColumn ema(std::span<const double> values, std::size_t n, std::string name = "ema");

enum class RsiSmoothing { Simple, Wilder };

/// Simple mode averages the last n gains/losses directly; Wilder mode seeds
/// with that average and then applies avg = (avg * (n - 1) + x) / n.
IndicatorColumn rsi(std::span<const double> close, std::size_t n = 14, RsiSmoothing mode = RsiSmoothing::Simple,
                    std::string name = "rsi");

enum class SignalSmoothing { Sma, Ema };

struct MacdResult {
    IndicatorColumn line;
    IndicatorColumn signal;
};

MacdResult macd(std::span<const double> close, std::size_t fast = 12, std::size_t slow = 26, std::size_t signal = 9,
                SignalSmoothing mode = SignalSmoothing::Sma);

struct BollingerBands {
    IndicatorColumn mid, upper1, lower1, upper2, lower2;
};

/// Bands at +-1 and +-2 population standard deviations around the SMA.
BollingerBands bollinger(std::span<const double> close, std::size_t n = 20);

struct StochasticResult {
    IndicatorColumn k;
    IndicatorColumn d;
};

/// %K over the last n bars including the current one; 50 when the range is flat.
StochasticResult stochastic(const BarSeries& series, std::size_t n = 14, std::size_t d_period = 3);

struct DmiResult {
    IndicatorColumn plus_di;
    IndicatorColumn minus_di;
    IndicatorColumn dx;
};

/// Directional movement with Wilder smoothing S_t = S_{t-1} - S_{t-1}/n + DM_t,
/// seeded by the sum of the first n movements (bars 1..n). Throws
/// DegenerateRange when the smoothed true range is zero.
DmiResult dmi(const BarSeries& series, std::size_t n = 14);

/// Four-candle bearish reversal: marubozu, lower-opening bear, gap-down candle
/// whose upper shadow pokes into the prior body, then a bear engulfing it.
/// Shadows count as absent when <= tol * body.
EventMask detect_concealing_baby_swallow(const BarSeries& series, double tol = 0.05);

struct RsiEvents {
    EventMask oversold;
    EventMask overbought;
};

RsiEvents detect_oversold(const IndicatorColumn& rsi_col, double low_thresh = 30.0, double high_thresh = 80.0);

struct IndicatorRequest {
    std::string name;
    std::vector<std::string> params;

    friend bool operator==(const IndicatorRequest&, const IndicatorRequest&) = default;
};

using IndicatorSpec = std::vector<IndicatorRequest>;

/// Lines of the form `name: p1, p2`; blank lines and `#` comments ignored.
IndicatorSpec parse_indicator_spec(std::istream& in);
std::string format_indicator_spec(const IndicatorSpec& spec);

/// Every implemented indicator across a lookback grid; yields more than 130
/// indicator columns.
IndicatorSpec default_indicator_spec();

std::vector<std::string> known_indicators();

/// open/high/low/close columns first, then one column per requested output.
/// Requests that reproduce an existing column name are skipped.
FeatureFrame build_feature_frame(const BarSeries& series, const IndicatorSpec& spec);

} // namespace clusterfx
