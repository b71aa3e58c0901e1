#pragma once

#include "clusterfx/market_data.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace clusterfx {

struct Regime {
    double drift = 0.0;      ///< per-minute log drift
    double volatility = 0.0; ///< per-minute log volatility
};

struct SyntheticConfig {
    std::size_t bars = 10000;
    int interval_minutes = 15;
    Timestamp start = from_civil(2019, 1, 7); // a Monday
    double start_price = 0.70;
    std::uint64_t seed = 7;
    /// Per-bar probability of leaving the current regime.
    double switch_probability = 0.01;
    std::vector<Regime> regimes{{0.000004, 0.00012}, {-0.000004, 0.00012}, {0.0, 0.00007}};
    bool skip_weekends = true;
    int price_decimals = 5;
    std::string symbol = "SYNTH";
};

/// Regime-switching geometric random walk simulated at one-minute steps and
/// aggregated into OHLC bars. Saturdays and Sundays are left out when
/// skip_weekends is set. Deterministic for a given config on every platform.
BarSeries generate_series(const SyntheticConfig& config);

/// Regime index in force for each generated bar.
std::vector<std::size_t> generate_regimes(const SyntheticConfig& config);

} // namespace clusterfx
