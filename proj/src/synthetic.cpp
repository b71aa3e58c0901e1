#include "clusterfx/synthetic.hpp"

#include "clusterfx/error.hpp"
#include "clusterfx/rng.hpp"

#include <algorithm>
#include <cmath>

namespace clusterfx {

namespace {

struct Generated {
    BarSeries series;
    std::vector<std::size_t> regimes;
};

Generated generate(const SyntheticConfig& cfg) {
    if (cfg.interval_minutes <= 0) throw Error(ErrorCode::InvalidArgument, "interval must be positive");
    if (cfg.regimes.empty()) throw Error(ErrorCode::InvalidArgument, "at least one regime is required");
    if (!(cfg.start_price > 0.0)) throw Error(ErrorCode::InvalidArgument, "start price must be positive");

    Rng rng(cfg.seed);
    const double scale = std::pow(10.0, cfg.price_decimals);
    auto round_price = [&](double p) { return std::round(p * scale) / scale; };

    Generated g;
    g.series.symbol = cfg.symbol;
    g.series.interval_minutes = cfg.interval_minutes;
    g.series.bars.reserve(cfg.bars);
    g.regimes.reserve(cfg.bars);

    std::size_t regime = 0;
    double log_price = std::log(cfg.start_price);
    double last_close = round_price(cfg.start_price);
    Timestamp t = cfg.start;
    const std::int64_t step = static_cast<std::int64_t>(cfg.interval_minutes) * kSecondsPerMinute;
    while (g.series.bars.size() < cfg.bars) {
        if (cfg.skip_weekends) {
            const int wd = weekday(t);
            if (wd == 0 || wd == 6) {
                t = t + step;
                continue;
            }
        }
        if (cfg.regimes.size() > 1 && rng.uniform() < cfg.switch_probability) {
            regime = (regime + 1 + rng.below(cfg.regimes.size() - 1)) % cfg.regimes.size();
        }
        const Regime& r = cfg.regimes[regime];
        Bar b;
        b.timestamp = t;
        b.open = last_close;
        b.high = b.open;
        b.low = b.open;
        for (int m = 0; m < cfg.interval_minutes; ++m) {
            log_price += r.drift + r.volatility * rng.normal();
            const double p = round_price(std::exp(log_price));
            b.high = std::max(b.high, p);
            b.low = std::min(b.low, p);
            b.close = p;
        }
        last_close = b.close;
        g.series.bars.push_back(b);
        g.regimes.push_back(regime);
        t = t + step;
    }
    return g;
}

} // namespace

BarSeries generate_series(const SyntheticConfig& config) { return generate(config).series; }

std::vector<std::size_t> generate_regimes(const SyntheticConfig& config) { return generate(config).regimes; }

} // namespace clusterfx
