#include "clusterfx/backtest.hpp"

#include "clusterfx/error.hpp"
#include "clusterfx/format.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <sstream>

namespace clusterfx {

namespace {

/// Neumaier compensated running sum.
class CompensatedSum {
public:
    explicit CompensatedSum(double start = 0.0) : sum_(start) {}
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) {
            comp_ += (sum_ - t) + x;
        } else {
            comp_ += (x - t) + sum_;
        }
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

std::string trim_zeros(std::string s) {
    if (s.find('.') == std::string::npos) return s;
    while (s.back() == '0') s.pop_back();
    if (s.back() == '.') s.pop_back();
    return s;
}

std::string plain_decimal(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10f", v);
    return trim_zeros(buf);
}

} // namespace

void StrategyConfig::validate() const {
    if (!(spread >= 0.0)) throw Error(ErrorCode::ConfigError, "spread must be >= 0");
    if (!(max_leverage >= 1.0)) throw Error(ErrorCode::ConfigError, "max_leverage must be >= 1");
    if (!(initial_capital > 0.0)) throw Error(ErrorCode::ConfigError, "initial_capital must be > 0");
    if (!(leverage_trigger_mae >= 0.0)) throw Error(ErrorCode::ConfigError, "leverage_trigger_mae must be >= 0");
    if (horizon_bars == 0) throw Error(ErrorCode::ConfigError, "horizon_bars must be >= 1");
}

std::optional<double> default_spread(const std::string& symbol) {
    std::string s;
    for (char ch : symbol) {
        if (std::isalpha(static_cast<unsigned char>(ch))) s.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(ch))));
    }
    if (s.size() != 6) return std::nullopt;
    const std::string a = s.substr(0, 3), b = s.substr(3);
    const std::string other = a == "USD" ? b : (b == "USD" ? a : "");
    if (other == "AUD") return 0.00008;
    if (other == "CAD" || other == "NZD") return 0.0002;
    if (other == "CHF") return 0.00017;
    return std::nullopt;
}

Signal generate_signal(double predicted_high, double close, const StrategyConfig& config) {
    Signal s;
    s.enter = predicted_high > close;
    const double edge = predicted_high - close;
    s.leverage = s.enter && edge >= 2.0 * config.leverage_trigger_mae ? config.max_leverage : 1.0;
    return s;
}

Signal generate_signal(const Forecast& forecast, double close, const StrategyConfig& config) {
    return generate_signal(forecast.predicted_high, close, config);
}

std::string to_string(ExitReason r) { return r == ExitReason::TargetHit ? "target-hit" : "timeout"; }

BacktestReport report_metrics(const std::vector<TradeRecord>& trades, const StrategyConfig& config) {
    BacktestReport r;
    r.initial_capital = config.initial_capital;
    r.trade_count = trades.size();
    r.equity_curve.reserve(trades.size() + 1);
    r.equity_curve.push_back(config.initial_capital);
    CompensatedSum pnl_sum;
    double lowest_marked = config.initial_capital;
    for (const auto& t : trades) {
        lowest_marked = std::min(lowest_marked, r.equity_curve.back() + t.marked_pnl);
        pnl_sum.add(t.pnl);
        r.equity_curve.push_back(config.initial_capital + pnl_sum.value());
        if (t.exit_reason == ExitReason::TargetHit) ++r.target_hits;
        if (t.leverage > 1.0) ++r.leveraged_trades;
    }
    r.total_pnl = pnl_sum.value();
    r.final_capital = config.initial_capital + r.total_pnl;
    r.lowest_capital_realized = *std::min_element(r.equity_curve.begin(), r.equity_curve.end());
    r.lowest_capital_marked = std::min(lowest_marked, r.lowest_capital_realized);
    if (!trades.empty()) {
        auto [lo, hi] = std::minmax_element(trades.begin(), trades.end(),
                                            [](const TradeRecord& a, const TradeRecord& b) { return a.pnl < b.pnl; });
        r.worst_trade = lo->pnl;
        r.best_trade = hi->pnl;
    }
    return r;
}

BacktestResult simulate(const BarSeries& bars, const std::vector<Forecast>& forecasts, const StrategyConfig& config) {
    config.validate();
    BacktestResult out;
    const std::size_t h = config.horizon_bars;
    CompensatedSum pnl_sum;
    std::size_t free_from = 0;
    Timestamp previous{std::numeric_limits<std::int64_t>::min()};
    for (const auto& f : forecasts) {
        if (f.timestamp < previous)
            throw Error(ErrorCode::MisalignedForecast, "forecasts are not in time order at " + format_timestamp(f.timestamp));
        previous = f.timestamp;
        const auto found = bars.find(f.timestamp);
        if (!found) throw Error(ErrorCode::MisalignedForecast, "no bar at " + format_timestamp(f.timestamp));
        const std::size_t e = *found;
        if (e + h >= bars.size()) {
            throw Error(ErrorCode::InsufficientHorizon,
                        "forecast at " + format_timestamp(f.timestamp) + " needs " + std::to_string(h) + " later bars");
        }
        if (e < free_from) {
            ++out.skipped_overlapping;
            continue;
        }
        const double entry = bars[e].close;
        const Signal sig = generate_signal(f.predicted_high, entry, config);
        if (!sig.enter) continue;

        TradeRecord t;
        t.entry_time = bars[e].timestamp;
        t.entry_index = e;
        t.entry_price = entry;
        t.predicted_high = f.predicted_high;
        t.leverage = sig.leverage;
        t.exit_index = e + h;
        t.exit_price = bars[e + h].close;
        t.exit_reason = ExitReason::Timeout;
        double min_low = std::numeric_limits<double>::infinity();
        for (std::size_t k = e + 1; k <= e + h; ++k) {
            min_low = std::min(min_low, bars[k].low);
            if (bars[k].high >= f.predicted_high) {
                t.exit_index = k;
                t.exit_price = f.predicted_high;
                t.exit_reason = ExitReason::TargetHit;
                break;
            }
        }
        t.exit_time = bars[t.exit_index].timestamp;
        t.min_price_during_hold = min_low;
        t.capital_at_entry = config.initial_capital + pnl_sum.value();
        t.pnl_per_unit = t.exit_price - t.entry_price - config.spread;
        t.pnl = t.pnl_per_unit / t.entry_price * t.capital_at_entry * t.leverage;
        t.marked_pnl = (min_low - t.entry_price - config.spread) / t.entry_price * t.capital_at_entry * t.leverage;
        pnl_sum.add(t.pnl);
        free_from = t.exit_index;
        out.trades.push_back(t);
    }
    out.report = report_metrics(out.trades, config);
    return out;
}

ErrorMetrics evaluate_forecasts(std::span<const double> predicted, std::span<const double> actual) {
    return error_metrics(predicted, actual);
}

void write_trade_log_csv(std::ostream& out, const std::vector<TradeRecord>& trades) {
    out << "entry_time,entry_price,predicted_high,leverage_used,exit_time,exit_price,exit_reason,pnl_per_unit,"
           "capital_at_entry,pnl,min_price_during_hold,marked_pnl\n";
    for (const auto& t : trades) {
        out << format_timestamp(t.entry_time) << ',' << format_number(t.entry_price) << ','
            << format_number(t.predicted_high) << ',' << format_number(t.leverage) << ','
            << format_timestamp(t.exit_time) << ',' << format_number(t.exit_price) << ',' << to_string(t.exit_reason)
            << ',' << format_number(t.pnl_per_unit) << ',' << format_number(t.capital_at_entry) << ','
            << format_number(t.pnl) << ',' << format_number(t.min_price_during_hold) << ','
            << format_number(t.marked_pnl) << '\n';
    }
}

std::string format_money(double amount) {
    const double rounded = std::round(amount);
    const bool negative = rounded < 0.0;
    char digits[64];
    std::snprintf(digits, sizeof digits, "%.0f", std::abs(rounded));
    std::string d = digits;
    std::string grouped;
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (i > 0 && (d.size() - i) % 3 == 0) grouped.push_back(',');
        grouped.push_back(d[i]);
    }
    return negative ? "($" + grouped + ")" : "$" + grouped;
}

std::string format_scientific(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3E", v);
    return buf;
}

std::string describe_period(const BarSeries& bars) {
    if (bars.empty()) return "0 days";
    const double days = static_cast<double>(bars.bars.back().timestamp - bars.bars.front().timestamp) / 86400.0;
    char buf[64];
    if (days >= 365.0) {
        std::snprintf(buf, sizeof buf, "%.1f years", days / 365.25);
    } else {
        std::snprintf(buf, sizeof buf, "%.0f days", std::round(days));
    }
    return buf;
}

namespace {

std::string capital_label(double initial) {
    if (initial >= 1000.0 && std::fmod(initial, 1000.0) == 0.0) return "$" + plain_decimal(initial / 1000.0) + "k";
    return format_money(initial);
}

std::vector<std::pair<std::string, std::string>> report_rows(const ReportContext& c, const BacktestReport& r,
                                                              const StrategyConfig& s) {
    return {
        {"Cluster method", c.cluster_method},
        {"Currency Pair", c.currency_pair},
        {"Forecast Period", "Next " + std::to_string(c.forecast_minutes) + " mins"},
        {"Input Sequence", "last " + std::to_string(c.input_minutes) + " mins"},
        {"# of cluster", std::to_string(c.clusters)},
        {"MSE", format_scientific(c.forecast_error.mse)},
        {"RMSE", format_scientific(c.forecast_error.rmse)},
        {"MAE", format_scientific(c.forecast_error.mae)},
        {"Backtest Data Period", c.data_period},
        {"Max Leverage Ratio", plain_decimal(s.max_leverage)},
        {"Spread", plain_decimal(s.spread)},
        {"Backtest P&L with " + capital_label(r.initial_capital) + " initial capital", format_money(r.total_pnl)},
        {"Lowest Capital level based on valid trades", format_money(r.lowest_capital_realized)},
        {"Lowest Capital level based on Minimum price hit", format_money(r.lowest_capital_marked)},
        {"Worst Trade", format_money(r.worst_trade)},
        {"Best Trade", format_money(r.best_trade)},
        {"Trades", std::to_string(r.trade_count)},
        {"Target hits", std::to_string(r.target_hits)},
        {"Leveraged trades", std::to_string(r.leveraged_trades)},
    };
}

} // namespace

std::string format_report_table(const ReportContext& context, const BacktestReport& report, const StrategyConfig& config) {
    const auto rows = report_rows(context, report, config);
    std::size_t width = 0;
    for (const auto& [label, _] : rows) width = std::max(width, label.size());
    std::ostringstream out;
    for (const auto& [label, value] : rows) out << label << std::string(width + 2 - label.size(), ' ') << value << '\n';
    return out.str();
}

std::string report_json(const ReportContext& c, const BacktestReport& r, const StrategyConfig& s) {
    nlohmann::ordered_json j;
    j["cluster_method"] = c.cluster_method;
    j["currency_pair"] = c.currency_pair;
    j["forecast_minutes"] = c.forecast_minutes;
    j["input_minutes"] = c.input_minutes;
    j["clusters"] = c.clusters;
    j["mse"] = c.forecast_error.mse;
    j["rmse"] = c.forecast_error.rmse;
    j["mae"] = c.forecast_error.mae;
    j["data_period"] = c.data_period;
    j["max_leverage"] = s.max_leverage;
    j["spread"] = s.spread;
    j["leverage_trigger_mae"] = s.leverage_trigger_mae;
    j["initial_capital"] = r.initial_capital;
    j["total_pnl"] = r.total_pnl;
    j["final_capital"] = r.final_capital;
    j["lowest_capital_realized"] = r.lowest_capital_realized;
    j["lowest_capital_marked"] = r.lowest_capital_marked;
    j["worst_trade"] = r.worst_trade;
    j["best_trade"] = r.best_trade;
    j["trade_count"] = r.trade_count;
    j["target_hits"] = r.target_hits;
    j["leveraged_trades"] = r.leveraged_trades;
    j["equity_curve"] = r.equity_curve;
    return j.dump(2);
}

} // namespace clusterfx
