#pragma once

#include "clusterfx/ensemble.hpp"
#include "clusterfx/market_data.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace clusterfx {

struct StrategyConfig {
    double spread = 0.00008;               ///< price units, deducted once per round trip
    double max_leverage = 200.0;
    double leverage_trigger_mae = 0.0;     ///< validation MAE, price units
    double initial_capital = 10000.0;
    std::size_t horizon_bars = 4;

    void validate() const;
};

/// Bundled per-pair spreads; nullopt for pairs without a default. Accepts
/// "AUD/USD", "AUDUSD", "audusd" and the reversed quote order.
std::optional<double> default_spread(const std::string& symbol);

struct Signal {
    bool enter = false;
    double leverage = 1.0;
};

/// Long when predicted_high > close. Full leverage when the edge
/// predicted_high - close is at least twice the trigger MAE.
Signal generate_signal(double predicted_high, double close, const StrategyConfig& config);
Signal generate_signal(const Forecast& forecast, double close, const StrategyConfig& config);

enum class ExitReason { TargetHit, Timeout };

std::string to_string(ExitReason r);

struct TradeRecord {
    Timestamp entry_time;
    std::size_t entry_index = 0;
    double entry_price = 0.0;
    double predicted_high = 0.0;
    double leverage = 1.0;
    Timestamp exit_time;
    std::size_t exit_index = 0;
    double exit_price = 0.0;
    ExitReason exit_reason = ExitReason::Timeout;
    double pnl_per_unit = 0.0;
    double capital_at_entry = 0.0;
    double pnl = 0.0;
    double min_price_during_hold = 0.0;
    /// (min_price - entry - spread) / entry * capital_at_entry * leverage
    double marked_pnl = 0.0;

    friend bool operator==(const TradeRecord&, const TradeRecord&) = default;
};

struct BacktestReport {
    double initial_capital = 0.0;
    double total_pnl = 0.0;
    double final_capital = 0.0;
    double lowest_capital_realized = 0.0;
    double lowest_capital_marked = 0.0;
    double worst_trade = 0.0;
    double best_trade = 0.0;
    std::size_t trade_count = 0;
    std::size_t target_hits = 0;
    std::size_t leveraged_trades = 0;
    std::vector<double> equity_curve; ///< initial capital, then capital after each trade

    friend bool operator==(const BacktestReport&, const BacktestReport&) = default;
};

/// Aggregates a finished log. Capital after trade i is the compensated
/// running sum of initial capital and pnls; the marked trough adds each
/// trade's marked_pnl to the capital before it.
BacktestReport report_metrics(const std::vector<TradeRecord>& trades, const StrategyConfig& config);

struct BacktestResult {
    std::vector<TradeRecord> trades;
    BacktestReport report;
    std::size_t skipped_overlapping = 0;
};

/// Replays forecasts (ascending timestamps, each matching a bar) against the
/// bars. Positions are sequential: a forecast before the previous exit bar is
/// skipped. Throws MisalignedForecast and InsufficientHorizon.
BacktestResult simulate(const BarSeries& bars, const std::vector<Forecast>& forecasts, const StrategyConfig& config);

/// Forecast error in price units against the realised horizon high.
ErrorMetrics evaluate_forecasts(std::span<const double> predicted, std::span<const double> actual);

void write_trade_log_csv(std::ostream& out, const std::vector<TradeRecord>& trades);

/// Labels for the human-readable summary table.
struct ReportContext {
    std::string cluster_method = "K-means";
    std::string currency_pair;
    std::int64_t forecast_minutes = 60;
    std::int64_t input_minutes = 135;
    std::size_t clusters = 0;
    std::string data_period;
    ErrorMetrics forecast_error;
};

/// "$13,926" for positive amounts and "($5,940)" for negative ones.
std::string format_money(double amount);
/// Four significant digits in E notation, e.g. "4.093E-07".
std::string format_scientific(double v);

std::string format_report_table(const ReportContext& context, const BacktestReport& report, const StrategyConfig& config);
std::string report_json(const ReportContext& context, const BacktestReport& report, const StrategyConfig& config);

/// "N days" spanned by the bars, or "N.N years" beyond a year.
std::string describe_period(const BarSeries& bars);

} // namespace clusterfx
