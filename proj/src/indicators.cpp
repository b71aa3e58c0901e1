#include "clusterfx/indicators.hpp"

#include "clusterfx/error.hpp"
#include "clusterfx/format.hpp"

#include <json.hpp>

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>

namespace clusterfx {

FeatureFrame::FeatureFrame(std::string series_ref, std::vector<Timestamp> timestamps)
    : series_ref_(std::move(series_ref)), timestamps_(std::move(timestamps)) {}

void FeatureFrame::add(IndicatorColumn column) {
    if (column.size() != rows()) {
        throw Error(ErrorCode::ShapeMismatch, "column " + column.name + " has " + std::to_string(column.size()) +
                                                  " rows, frame has " + std::to_string(rows()));
    }
    if (has(column.name)) throw Error(ErrorCode::InvalidArgument, "duplicate column " + column.name);
    index_[column.name] = columns_.size();
    columns_.push_back(std::move(column));
}

const IndicatorColumn& FeatureFrame::column(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error(ErrorCode::UnknownIndicator, "frame has no column " + name);
    return columns_[it->second];
}

std::vector<std::string> FeatureFrame::names() const {
    std::vector<std::string> out;
    out.reserve(columns_.size());
    for (const auto& c : columns_) out.push_back(c.name);
    return out;
}

void FeatureFrame::write_csv(std::ostream& out) const {
    out << "timestamp";
    for (const auto& c : columns_) out << ',' << c.name;
    out << '\n';
    for (std::size_t i = 0; i < rows(); ++i) {
        out << format_timestamp(timestamps_[i]);
        for (const auto& c : columns_) out << ',' << format_number(c.values[i]);
        out << '\n';
    }
}

std::string FeatureFrame::manifest_json() const {
    nlohmann::ordered_json j;
    j["series_ref"] = series_ref_;
    j["rows"] = rows();
    j["columns"] = nlohmann::ordered_json::array();
    for (const auto& c : columns_) j["columns"].push_back({{"name", c.name}, {"warmup", c.warmup}});
    return j.dump(2) + "\n";
}

FeatureFrame FeatureFrame::read_csv(std::istream& in, std::string series_ref) {
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::MalformedRow, "line 1: empty feature frame");
    auto header = split(trim(line), ',');
    if (header.empty() || header[0] != "timestamp") throw Error(ErrorCode::MalformedRow, "line 1: bad frame header");
    std::vector<Timestamp> ts;
    std::vector<std::vector<double>> cols(header.size() - 1);
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto cells = split(trim(line), ',');
        if (cells.size() != header.size())
            throw Error(ErrorCode::MalformedRow, "line " + std::to_string(line_no) + ": wrong field count");
        auto t = parse_timestamp(cells[0]);
        if (!t) throw Error(ErrorCode::MalformedRow, "line " + std::to_string(line_no) + ": bad timestamp");
        ts.push_back(*t);
        for (std::size_t c = 1; c < cells.size(); ++c) {
            if (trim(cells[c]).empty()) {
                cols[c - 1].push_back(kUndefined);
            } else {
                auto v = parse_double(cells[c]);
                if (!v) throw Error(ErrorCode::MalformedRow, "line " + std::to_string(line_no) + ": bad value");
                cols[c - 1].push_back(*v);
            }
        }
    }
    FeatureFrame frame(std::move(series_ref), std::move(ts));
    for (std::size_t c = 0; c < cols.size(); ++c) {
        IndicatorColumn col{header[c + 1], std::move(cols[c]), 0};
        while (col.warmup < col.size() && std::isnan(col.values[col.warmup])) ++col.warmup;
        frame.add(std::move(col));
    }
    return frame;
}

std::size_t EventMask::count() const { return static_cast<std::size_t>(std::count(flags.begin(), flags.end(), true)); }

namespace {

std::size_t leading_undefined(std::span<const double> v) {
    std::size_t i = 0;
    while (i < v.size() && std::isnan(v[i])) ++i;
    return i;
}

IndicatorColumn undefined_column(std::string name, std::size_t len) {
    return {std::move(name), std::vector<double>(len, kUndefined), len};
}

void require_window(std::size_t n, std::size_t len, const char* what) {
    if (n == 0) throw Error(ErrorCode::InvalidArgument, std::string(what) + ": window must be >= 1");
    if (n > len) {
        throw Error(ErrorCode::WindowTooLong, std::string(what) + ": window " + std::to_string(n) +
                                                  " exceeds series length " + std::to_string(len));
    }
}

double window_mean(std::span<const double> v, std::size_t end_inclusive, std::size_t n) {
    double s = 0.0;
    for (std::size_t j = end_inclusive + 1 - n; j <= end_inclusive; ++j) s += v[j];
    return s / static_cast<double>(n);
}

} // namespace

IndicatorColumn sma(std::span<const double> values, std::size_t n, std::string name) {
    require_window(n, values.size(), "sma");
    const std::size_t lead = leading_undefined(values);
    if (lead + n > values.size()) return undefined_column(std::move(name), values.size());
    IndicatorColumn out{std::move(name), std::vector<double>(values.size(), kUndefined), lead + n - 1};
    for (std::size_t i = out.warmup; i < values.size(); ++i) out.values[i] = window_mean(values, i, n);
    return out;
}

IndicatorColumn ema(std::span<const double> values, std::size_t n, std::string name) {
    require_window(n, values.size(), "ema");
    const std::size_t lead = leading_undefined(values);
    if (lead + n > values.size()) return undefined_column(std::move(name), values.size());
    IndicatorColumn out{std::move(name), std::vector<double>(values.size(), kUndefined), lead + n - 1};
    const double alpha = 2.0 / (static_cast<double>(n) + 1.0);
    double prev = window_mean(values, out.warmup, n);
    out.values[out.warmup] = prev;
    for (std::size_t i = out.warmup + 1; i < values.size(); ++i) {
        prev = alpha * values[i] + (1.0 - alpha) * prev;
        out.values[i] = prev;
    }
    return out;
}

IndicatorColumn rsi(std::span<const double> close, std::size_t n, RsiSmoothing mode, std::string name) {
    if (n == 0) throw Error(ErrorCode::InvalidArgument, "rsi: window must be >= 1");
    if (close.size() <= n) {
        throw Error(ErrorCode::WindowTooLong, "rsi: need more than " + std::to_string(n) + " closes, got " +
                                                  std::to_string(close.size()));
    }
    const std::size_t len = close.size();
    std::vector<double> gain(len, 0.0), loss(len, 0.0);
    for (std::size_t i = 1; i < len; ++i) {
        const double d = close[i] - close[i - 1];
        gain[i] = d > 0.0 ? d : 0.0;
        loss[i] = d < 0.0 ? -d : 0.0;
    }
    auto to_rsi = [](double avg_gain, double avg_loss) {
        if (avg_loss == 0.0) return 100.0;
        if (avg_gain == 0.0) return 0.0;
        const double rs = avg_gain / avg_loss;
        return 100.0 - 100.0 / (1.0 + rs);
    };
    IndicatorColumn out{std::move(name), std::vector<double>(len, kUndefined), n};
    const double dn = static_cast<double>(n);
    double avg_gain = window_mean(gain, n, n);
    double avg_loss = window_mean(loss, n, n);
    out.values[n] = to_rsi(avg_gain, avg_loss);
    for (std::size_t i = n + 1; i < len; ++i) {
        if (mode == RsiSmoothing::Simple) {
            avg_gain = window_mean(gain, i, n);
            avg_loss = window_mean(loss, i, n);
        } else {
            avg_gain = (avg_gain * (dn - 1.0) + gain[i]) / dn;
            avg_loss = (avg_loss * (dn - 1.0) + loss[i]) / dn;
        }
        out.values[i] = to_rsi(avg_gain, avg_loss);
    }
    return out;
}

MacdResult macd(std::span<const double> close, std::size_t fast, std::size_t slow, std::size_t signal,
                SignalSmoothing mode) {
    if (fast == 0 || slow == 0 || signal == 0 || fast >= slow)
        throw Error(ErrorCode::InvalidArgument, "macd: need 0 < fast < slow and signal >= 1");
    if (close.size() <= slow) {
        throw Error(ErrorCode::WindowTooLong, "macd: need more than " + std::to_string(slow) + " closes");
    }
    const auto suffix = "_" + std::to_string(fast) + "_" + std::to_string(slow);
    auto fast_ema = ema(close, fast);
    auto slow_ema = ema(close, slow);
    IndicatorColumn line{"macd_line" + suffix, std::vector<double>(close.size(), kUndefined), slow_ema.warmup};
    for (std::size_t i = line.warmup; i < close.size(); ++i) line.values[i] = fast_ema[i] - slow_ema[i];
    const auto sig_name =
        std::string(mode == SignalSmoothing::Sma ? "macd_signal" : "macd_signal_ema") + suffix + "_" + std::to_string(signal);
    auto sig = mode == SignalSmoothing::Sma ? sma(line.values, signal, sig_name) : ema(line.values, signal, sig_name);
    return {std::move(line), std::move(sig)};
}

BollingerBands bollinger(std::span<const double> close, std::size_t n) {
    if (n < 2) throw Error(ErrorCode::InvalidArgument, "bollinger: window must be >= 2");
    require_window(n, close.size(), "bollinger");
    const auto tag = "_" + std::to_string(n);
    BollingerBands b;
    b.mid = sma(close, n, "bb_mid" + tag);
    const std::size_t len = close.size();
    auto blank = [&](const char* nm) {
        return IndicatorColumn{std::string(nm) + tag, std::vector<double>(len, kUndefined), b.mid.warmup};
    };
    b.upper1 = blank("bb_upper1");
    b.lower1 = blank("bb_lower1");
    b.upper2 = blank("bb_upper2");
    b.lower2 = blank("bb_lower2");
    for (std::size_t i = b.mid.warmup; i < len; ++i) {
        const double m = b.mid[i];
        double ss = 0.0;
        for (std::size_t j = i + 1 - n; j <= i; ++j) ss += (close[j] - m) * (close[j] - m);
        const double sd = std::sqrt(ss / static_cast<double>(n));
        b.upper1.values[i] = m + sd;
        b.lower1.values[i] = m - sd;
        b.upper2.values[i] = m + 2.0 * sd;
        b.lower2.values[i] = m - 2.0 * sd;
    }
    return b;
}

StochasticResult stochastic(const BarSeries& series, std::size_t n, std::size_t d_period) {
    require_window(n, series.size(), "stochastic");
    const auto tag = "_" + std::to_string(n);
    const std::size_t len = series.size();
    IndicatorColumn k{"stoch_k" + tag, std::vector<double>(len, kUndefined), n - 1};
    for (std::size_t i = n - 1; i < len; ++i) {
        double hn = series[i].high, ln = series[i].low;
        for (std::size_t j = i + 1 - n; j < i; ++j) {
            hn = std::max(hn, series[j].high);
            ln = std::min(ln, series[j].low);
        }
        k.values[i] = hn == ln ? 50.0 : 100.0 * ((series[i].close - ln) / (hn - ln));
    }
    auto d = sma(k.values, d_period, "stoch_d" + tag);
    return {std::move(k), std::move(d)};
}

DmiResult dmi(const BarSeries& series, std::size_t n) {
    if (n == 0) throw Error(ErrorCode::InvalidArgument, "dmi: window must be >= 1");
    const std::size_t len = series.size();
    if (len <= n) throw Error(ErrorCode::WindowTooLong, "dmi: need more than " + std::to_string(n) + " bars");
    std::vector<double> plus_dm(len, 0.0), minus_dm(len, 0.0), tr(len, 0.0);
    for (std::size_t i = 1; i < len; ++i) {
        const Bar& cur = series[i];
        const Bar& prev = series[i - 1];
        double up = std::max(cur.high - prev.high, 0.0);
        double down = std::max(prev.low - cur.low, 0.0);
        if (up > 0.0 && down > 0.0) {
            // Only the dominant direction counts; a tie cancels both.
            if (up > down) {
                down = 0.0;
            } else if (down > up) {
                up = 0.0;
            } else {
                up = down = 0.0;
            }
        }
        plus_dm[i] = up;
        minus_dm[i] = down;
        tr[i] = std::max({cur.high - cur.low, std::abs(cur.high - prev.close), std::abs(cur.low - prev.close)});
    }
    const auto tag = "_" + std::to_string(n);
    DmiResult r{{"plus_di" + tag, std::vector<double>(len, kUndefined), n},
                {"minus_di" + tag, std::vector<double>(len, kUndefined), n},
                {"dx" + tag, std::vector<double>(len, kUndefined), n}};
    const double dn = static_cast<double>(n);
    double sp = 0.0, sm = 0.0, atr = 0.0;
    for (std::size_t i = 1; i <= n; ++i) {
        sp += plus_dm[i];
        sm += minus_dm[i];
        atr += tr[i];
    }
    for (std::size_t i = n; i < len; ++i) {
        if (i > n) {
            sp = sp - sp / dn + plus_dm[i];
            sm = sm - sm / dn + minus_dm[i];
            atr = atr - atr / dn + tr[i];
        }
        if (atr == 0.0) {
            throw Error(ErrorCode::DegenerateRange, "dmi: zero average true range at " + format_timestamp(series[i].timestamp));
        }
        const double pdi = 100.0 * sp / atr;
        const double mdi = 100.0 * sm / atr;
        r.plus_di.values[i] = pdi;
        r.minus_di.values[i] = mdi;
        const double denom = std::abs(pdi + mdi);
        r.dx.values[i] = denom == 0.0 ? kUndefined : 100.0 * (std::abs(pdi - mdi) / denom);
    }
    return r;
}

namespace {

struct Candle {
    double open, high, low, close;
    double body() const { return std::abs(close - open); }
    double top() const { return std::max(open, close); }
    double bottom() const { return std::min(open, close); }
    double upper_shadow() const { return high - top(); }
    double lower_shadow() const { return bottom() - low; }
    bool bearish() const { return close < open; }
};

Candle candle(const Bar& b) { return {b.open, b.high, b.low, b.close}; }

} // namespace

EventMask detect_concealing_baby_swallow(const BarSeries& series, double tol) {
    if (!(tol >= 0.0 && tol < 0.5)) throw Error(ErrorCode::InvalidArgument, "cbs: tol must lie in [0, 0.5)");
    EventMask mask{"concealing_baby_swallow", std::vector<bool>(series.size(), false)};
    for (std::size_t i = 3; i < series.size(); ++i) {
        const Candle c1 = candle(series[i - 3]);
        const Candle c2 = candle(series[i - 2]);
        const Candle c3 = candle(series[i - 1]);
        const Candle c4 = candle(series[i]);
        const bool first = c1.bearish() && c1.upper_shadow() <= tol * c1.body() && c1.lower_shadow() <= tol * c1.body();
        const bool second = c2.bearish() && c2.open <= c1.open && c2.open >= c1.close && c2.close < c1.close;
        const bool third = c3.open < c2.close && c3.high > c2.close && c3.lower_shadow() <= tol * c3.body();
        const bool fourth = c4.bearish() && c4.open >= c3.high && c4.close <= c3.low;
        mask.flags[i] = first && second && third && fourth;
    }
    return mask;
}

RsiEvents detect_oversold(const IndicatorColumn& rsi_col, double low_thresh, double high_thresh) {
    if (!(low_thresh < high_thresh)) throw Error(ErrorCode::InvalidArgument, "oversold: low_thresh must be < high_thresh");
    RsiEvents ev{{"oversold", std::vector<bool>(rsi_col.size(), false)},
                 {"overbought", std::vector<bool>(rsi_col.size(), false)}};
    for (std::size_t i = 0; i < rsi_col.size(); ++i) {
        if (!rsi_col.defined(i)) continue;
        ev.oversold.flags[i] = rsi_col[i] <= low_thresh;
        ev.overbought.flags[i] = rsi_col[i] >= high_thresh;
    }
    return ev;
}

IndicatorSpec parse_indicator_spec(std::istream& in) {
    IndicatorSpec spec;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto hash = line.find('#');
        std::string_view body = trim(std::string_view(line).substr(0, hash));
        if (body.empty()) continue;
        IndicatorRequest req;
        auto colon = body.find(':');
        req.name = std::string(trim(body.substr(0, colon)));
        if (req.name.empty()) throw Error(ErrorCode::ConfigError, "indicator spec line " + std::to_string(line_no));
        if (colon != std::string_view::npos) {
            auto rest = trim(body.substr(colon + 1));
            if (!rest.empty()) {
                for (auto& p : split(rest, ',')) req.params.emplace_back(trim(p));
            }
        }
        spec.push_back(std::move(req));
    }
    return spec;
}

std::string format_indicator_spec(const IndicatorSpec& spec) {
    std::ostringstream os;
    for (const auto& r : spec) {
        os << r.name;
        if (!r.params.empty()) {
            os << ": ";
            for (std::size_t i = 0; i < r.params.size(); ++i) os << (i ? ", " : "") << r.params[i];
        }
        os << '\n';
    }
    return os.str();
}

IndicatorSpec default_indicator_spec() {
    IndicatorSpec spec;
    auto num = [](auto v) { return std::to_string(v); };
    for (int n : {3, 5, 8, 10, 14, 20, 30, 50, 100, 200}) {
        spec.push_back({"sma", {"close", num(n)}});
        spec.push_back({"ema", {"close", num(n)}});
    }
    for (const char* src : {"open", "high", "low"}) {
        for (int n : {5, 10, 20, 50}) {
            spec.push_back({"sma", {src, num(n)}});
            spec.push_back({"ema", {src, num(n)}});
        }
    }
    for (int n : {2, 4, 6, 9, 14, 21, 28, 50}) {
        spec.push_back({"rsi", {num(n)}});
        spec.push_back({"rsi_wilder", {num(n)}});
    }
    spec.push_back({"macd", {"12", "26", "9", "sma"}});
    spec.push_back({"macd", {"12", "26", "9", "ema"}});
    spec.push_back({"macd", {"5", "35", "5", "sma"}});
    spec.push_back({"macd", {"8", "17", "9", "sma"}});
    for (int n : {10, 14, 20, 30, 50, 100}) spec.push_back({"bollinger", {num(n)}});
    for (int n : {3, 5, 9, 14, 21, 28, 50}) spec.push_back({"stochastic", {num(n)}});
    for (int n : {5, 7, 10, 14, 21, 28}) spec.push_back({"dmi", {num(n)}});
    for (const char* tol : {"0.05", "0.1", "0.2"}) spec.push_back({"cbs", {tol}});
    return spec;
}

std::vector<std::string> known_indicators() {
    return {"sma", "ema", "rsi", "rsi_wilder", "macd", "bollinger", "stochastic", "dmi", "cbs"};
}

namespace {

std::size_t param_size(const IndicatorRequest& r, std::size_t idx, std::size_t fallback) {
    if (idx >= r.params.size()) return fallback;
    auto v = parse_int(r.params[idx]);
    if (!v || *v <= 0) throw Error(ErrorCode::ConfigError, r.name + ": bad window '" + r.params[idx] + "'");
    return static_cast<std::size_t>(*v);
}

std::vector<double> source_values(const BarSeries& s, const std::string& src) {
    if (src == "close") return s.closes();
    if (src == "open") return s.opens();
    if (src == "high") return s.highs();
    if (src == "low") return s.lows();
    throw Error(ErrorCode::ConfigError, "unknown price source '" + src + "'");
}

} // namespace

FeatureFrame build_feature_frame(const BarSeries& series, const IndicatorSpec& spec) {
    std::vector<Timestamp> ts;
    ts.reserve(series.size());
    for (const auto& b : series.bars) ts.push_back(b.timestamp);
    FeatureFrame frame(series.symbol, std::move(ts));
    frame.add({"open", series.opens(), 0});
    frame.add({"high", series.highs(), 0});
    frame.add({"low", series.lows(), 0});
    frame.add({"close", series.closes(), 0});

    auto put = [&](IndicatorColumn c) {
        if (!frame.has(c.name)) frame.add(std::move(c));
    };
    const auto close = series.closes();
    for (const auto& r : spec) {
        if (r.name == "sma" || r.name == "ema") {
            // Accept `sma: 20` or `sma: close, 20`.
            std::string src = "close";
            std::size_t idx = 0;
            if (!r.params.empty() && !parse_int(r.params[0])) {
                src = r.params[0];
                idx = 1;
            }
            const std::size_t n = param_size(r, idx, 20);
            const auto name = r.name + "_" + src + "_" + std::to_string(n);
            if (frame.has(name)) continue;
            const auto vals = source_values(series, src);
            put(r.name == "sma" ? sma(vals, n, name) : ema(vals, n, name));
        } else if (r.name == "rsi" || r.name == "rsi_wilder") {
            const std::size_t n = param_size(r, 0, 14);
            put(rsi(close, n, r.name == "rsi" ? RsiSmoothing::Simple : RsiSmoothing::Wilder,
                    r.name + "_" + std::to_string(n)));
        } else if (r.name == "macd") {
            SignalSmoothing mode = SignalSmoothing::Sma;
            if (r.params.size() > 3) {
                if (r.params[3] == "ema") {
                    mode = SignalSmoothing::Ema;
                } else if (r.params[3] != "sma") {
                    throw Error(ErrorCode::ConfigError, "macd: signal smoothing must be sma or ema");
                }
            }
            auto m = macd(close, param_size(r, 0, 12), param_size(r, 1, 26), param_size(r, 2, 9), mode);
            put(std::move(m.line));
            put(std::move(m.signal));
        } else if (r.name == "bollinger") {
            auto b = bollinger(close, param_size(r, 0, 20));
            put(std::move(b.mid));
            put(std::move(b.upper1));
            put(std::move(b.lower1));
            put(std::move(b.upper2));
            put(std::move(b.lower2));
        } else if (r.name == "stochastic") {
            auto s = stochastic(series, param_size(r, 0, 14), param_size(r, 1, 3));
            put(std::move(s.k));
            put(std::move(s.d));
        } else if (r.name == "dmi") {
            auto d = dmi(series, param_size(r, 0, 14));
            put(std::move(d.plus_di));
            put(std::move(d.minus_di));
            put(std::move(d.dx));
        } else if (r.name == "cbs") {
            double tol = 0.05;
            if (!r.params.empty()) {
                auto v = parse_double(r.params[0]);
                if (!v) throw Error(ErrorCode::ConfigError, "cbs: bad tolerance '" + r.params[0] + "'");
                tol = *v;
            }
            const auto name = "cbs_" + format_number(tol);
            if (frame.has(name)) continue;
            auto mask = detect_concealing_baby_swallow(series, tol);
            IndicatorColumn col{name, std::vector<double>(series.size(), kUndefined), std::min<std::size_t>(3, series.size())};
            for (std::size_t i = col.warmup; i < series.size(); ++i) col.values[i] = mask.flags[i] ? 1.0 : 0.0;
            put(std::move(col));
        } else {
            throw Error(ErrorCode::UnknownIndicator, "unknown indicator '" + r.name + "'");
        }
    }
    return frame;
}

} // namespace clusterfx
