// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails.

#include "clusterfx/backtest.hpp"
#include "clusterfx/clustering.hpp"
#include "clusterfx/config.hpp"
#include "clusterfx/ensemble.hpp"
#include "clusterfx/error.hpp"
#include "clusterfx/features.hpp"
#include "clusterfx/forecaster.hpp"
#include "clusterfx/indicators.hpp"
#include "clusterfx/pipeline.hpp"
#include "clusterfx/rng.hpp"
#include "clusterfx/synthetic.hpp"
#include "oracles.hpp"

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <string>

using namespace clusterfx;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;
std::string only; // optional substring filter from argv

void criterion(const char* name, double limit_seconds, const std::function<Outcome()>& body) {
    if (!only.empty() && std::string(name).find(only) == std::string::npos) return;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < limit_seconds;
    const bool pass = o.pass && in_time;
    failures += !pass;
    std::printf("%s  %-28s %s (%.2f s, limit %.0f s%s)\n", pass ? "PASS" : "FAIL", name, o.detail.c_str(), secs,
                limit_seconds, in_time ? "" : ", too slow");
    std::fflush(stdout);
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

bool same_values(const std::vector<double>& a, const std::vector<double>& b, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        if (std::isnan(a[i]) != std::isnan(b[i])) return false;
        if (!std::isnan(a[i]) && a[i] != b[i]) return false;
    }
    return true;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// ---------------------------------------------------------------- indicators

Outcome indicator_oracles() {
    double worst = 0.0;
    bool shape_ok = true;
    auto track = [&](double d) {
        if (d < 0) shape_ok = false;
        worst = std::max(worst, d);
    };
    std::size_t fixtures = 0;
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
        const auto s = oracle::random_series(seed, 20);
        const auto c = s.closes();
        for (std::size_t n : {2u, 3u, 5u, 8u, 14u}) {
            track(oracle::max_abs_diff(sma(c, n).values, oracle::sma(c, n)));
            track(oracle::max_abs_diff(ema(c, n).values, oracle::ema(c, n)));
            track(oracle::max_abs_diff(rsi(c, n).values, oracle::rsi_simple(c, n)));
            track(oracle::max_abs_diff(rsi(c, n, RsiSmoothing::Wilder).values, oracle::rsi_wilder(c, n)));
            const auto b = bollinger(c, n);
            const auto ob = oracle::bollinger(c, n);
            track(oracle::max_abs_diff(b.mid.values, ob.mid));
            track(oracle::max_abs_diff(b.upper1.values, ob.up1));
            track(oracle::max_abs_diff(b.lower1.values, ob.lo1));
            track(oracle::max_abs_diff(b.upper2.values, ob.up2));
            track(oracle::max_abs_diff(b.lower2.values, ob.lo2));
            const auto st = stochastic(s, n, 3);
            const auto ost = oracle::stochastic(s, n, 3);
            track(oracle::max_abs_diff(st.k.values, ost.k));
            track(oracle::max_abs_diff(st.d.values, ost.d));
            if (n <= 8) {
                const auto d = dmi(s, n);
                const auto od = oracle::dmi(s, n);
                track(oracle::max_abs_diff(d.plus_di.values, od.plus));
                track(oracle::max_abs_diff(d.minus_di.values, od.minus));
                track(oracle::max_abs_diff(d.dx.values, od.dx));
            }
            ++fixtures;
        }
        const auto m = macd(c, 3, 6, 3);
        const auto om = oracle::macd(c, 3, 6, 3);
        track(oracle::max_abs_diff(m.line.values, om.line));
        track(oracle::max_abs_diff(m.signal.values, om.signal));
    }
    return {shape_ok && worst <= 1e-9,
            std::to_string(fixtures) + " fixtures, max |diff| " + fmt("%.3g", worst) + (shape_ok ? "" : ", definedness differs")};
}

Outcome indicator_invariants() {
    std::size_t violations = 0, causal_breaks = 0;
    Rng cut_rng(2024);
    for (std::uint64_t seed = 1; seed <= 1000; ++seed) {
        const auto s = oracle::random_series(seed * 7919, 500, 1.0, 0.001 + 0.004 * static_cast<double>(seed % 5));
        const auto c = s.closes();
        const auto r = rsi(c, 14);
        const auto rw = rsi(c, 14, RsiSmoothing::Wilder);
        const auto st = stochastic(s, 14, 3);
        const auto d = dmi(s, 14);
        const auto b = bollinger(c, 20);
        auto in_0_100 = [&](const IndicatorColumn& col) {
            for (double v : col.values)
                if (!std::isnan(v) && (v < 0.0 || v > 100.0)) ++violations;
        };
        in_0_100(r);
        in_0_100(rw);
        in_0_100(st.k);
        in_0_100(st.d);
        in_0_100(d.dx);
        in_0_100(d.plus_di);
        in_0_100(d.minus_di);
        for (std::size_t i = 0; i < c.size(); ++i) {
            if (std::isnan(b.mid[i])) continue;
            if (!(b.lower2[i] <= b.lower1[i] && b.lower1[i] <= b.mid[i] && b.mid[i] <= b.upper1[i] &&
                  b.upper1[i] <= b.upper2[i]))
                ++violations;
        }

        // Values up to a cut must not change when later bars are removed.
        // MACD(12, 26, 9) rejects series shorter than its slow span.
        const std::size_t cut = 27 + cut_rng.below(473);
        BarSeries head = s;
        head.bars.resize(cut);
        const auto hc = head.closes();
        const auto m = macd(c, 12, 26, 9);
        const auto hm = macd(hc, 12, 26, 9);
        const auto hb = bollinger(hc, 20);
        const auto hst = stochastic(head, 14, 3);
        const auto hd = dmi(head, 14);
        const bool ok = same_values(sma(c, 10).values, sma(hc, 10).values, cut) &&
                        same_values(ema(c, 10).values, ema(hc, 10).values, cut) &&
                        same_values(r.values, rsi(hc, 14).values, cut) &&
                        same_values(rw.values, rsi(hc, 14, RsiSmoothing::Wilder).values, cut) &&
                        same_values(m.line.values, hm.line.values, cut) &&
                        same_values(m.signal.values, hm.signal.values, cut) &&
                        same_values(b.upper2.values, hb.upper2.values, cut) &&
                        same_values(st.k.values, hst.k.values, cut) && same_values(st.d.values, hst.d.values, cut) &&
                        same_values(d.dx.values, hd.dx.values, cut);
        causal_breaks += !ok;
    }
    return {violations == 0 && causal_breaks == 0,
            "1000 series x 500 bars, " + std::to_string(violations) + " range/order violations, " +
                std::to_string(causal_breaks) + " truncation mismatches"};
}

// ---------------------------------------------------------------- clustering

PointSet uniform_points(std::uint64_t seed, std::size_t n, std::size_t dim) {
    Rng rng(seed);
    PointSet p;
    p.dim = dim;
    for (std::size_t i = 0; i < n * dim; ++i) p.data.push_back(rng.uniform());
    return p;
}

PointSet blobs(std::uint64_t seed, std::size_t per_blob, const std::vector<std::vector<double>>& centres, double sd) {
    Rng rng(seed);
    PointSet p;
    p.dim = centres[0].size();
    for (std::size_t i = 0; i < per_blob; ++i) {
        for (const auto& c : centres) {
            std::vector<double> x(c);
            for (double& v : x) v += sd * rng.normal();
            p.push_back(x);
        }
    }
    return p;
}

Outcome kmeans_checks() {
    std::size_t traces = 0, rises = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto p = uniform_points(seed, 300, 4);
        for (auto init : {KMeansInit::PlusPlus, KMeansInit::Uniform}) {
            KMeansOptions o;
            o.k = 2 + seed % 7;
            o.seed = seed;
            o.init = init;
            const auto m = kmeans_fit(p, o);
            ++traces;
            for (std::size_t i = 1; i < m.inertia_trace.size(); ++i) rises += m.inertia_trace[i] > m.inertia_trace[i - 1];
        }
    }
    PointSet four;
    four.dim = 1;
    four.data = {0, 1, 10, 11};
    KMeansOptions o;
    o.k = 2;
    const double j = kmeans_fit_best(four, o, 20).inertia;
    const double brute = oracle::kmeans_global_optimum({{0}, {1}, {10}, {11}}, 2);
    return {rises == 0 && j == 1.0 && brute == 1.0,
            std::to_string(traces) + " traces, " + std::to_string(rises) + " increases; {0,1,10,11} J = " +
                fmt("%.17g", j)};
}

Outcome birch_checks() {
    const auto two = blobs(3, 100, {{0, 0, 0}, {6, 6, 6}}, 0.4);
    const auto m = birch_fit(two, 0.6, 2);
    bool pure = m.cluster_count() == 2;
    const auto a = birch_assign(m, two[0]);
    const auto b = birch_assign(m, two[1]);
    pure = pure && a != b;
    for (std::size_t i = 0; pure && i < two.size(); ++i) pure = birch_assign(m, two[i]) == (i % 2 == 0 ? a : b);

    std::size_t over = 0, runs = 0;
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
        const auto p = uniform_points(seed, 200, 3);
        for (std::size_t k : {1u, 2u, 5u, 10u}) {
            const auto fit = birch_fit(p, 0.02 * static_cast<double>(1 + seed % 10), k);
            over += fit.cluster_count() > k || fit.cluster_count() == 0;
            ++runs;
        }
    }

    std::vector<std::vector<double>> centres;
    for (int i = 0; i < 9; ++i) centres.push_back({10.0 * i, 0.0});
    centres.push_back({0.2, 0.1});
    const auto near = birch_fit(blobs(5, 10, centres, 0.05), 1.0, 10);
    const bool reduced = near.requested_k == 10 && near.cluster_count() == 9 && near.reduced;
    return {pure && over == 0 && reduced, std::string("two blobs ") + (pure ? "pure" : "mixed") + ", " +
                                              std::to_string(over) + "/" + std::to_string(runs) +
                                              " fits above k, near-duplicate fixture: requested 10, produced " +
                                              std::to_string(near.cluster_count())};
}

// ---------------------------------------------------------------- forecaster

SampleSet random_samples(std::uint64_t seed, std::size_t n, std::size_t len, std::size_t f) {
    Rng rng(seed);
    SampleSet s;
    s.input_len = len;
    for (std::size_t j = 0; j < f; ++j) s.feature_names.push_back("f" + std::to_string(j));
    for (std::size_t i = 0; i < n; ++i) {
        Sample x;
        for (std::size_t k = 0; k < len * f; ++k) x.window.push_back(rng.uniform());
        x.target = rng.uniform();
        x.bar_index = i;
        s.samples.push_back(x);
    }
    return s;
}

ModelConfig model_config(std::size_t h, std::size_t len, std::size_t f, std::uint64_t seed) {
    ModelConfig c;
    c.hidden_size = h;
    c.input_len_bars = len;
    c.n_features = f;
    c.seed = seed;
    return c;
}

Outcome gradient_check() {
    double worst = 0.0;
    for (std::uint64_t draw = 1; draw <= 10; ++draw) {
        auto m = init_model(model_config(4, 5, 3, draw));
        Rng rng(1000 + draw);
        for (double& p : m.params()) p = rng.uniform(-0.5, 0.5);
        const auto batch = random_samples(2000 + draw, 4, 5, 3);
        std::vector<double> g;
        backward(m, batch, g);
        const double eps = 1e-5;
        auto p = m.params();
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double keep = p[i];
            p[i] = keep + eps;
            const double up = evaluate_mse(m, batch);
            p[i] = keep - eps;
            const double dn = evaluate_mse(m, batch);
            p[i] = keep;
            const double fd = (up - dn) / (2 * eps);
            num += (fd - g[i]) * (fd - g[i]);
            den += fd * fd + g[i] * g[i];
        }
        worst = std::max(worst, std::sqrt(num) / std::sqrt(den));
    }
    return {worst < 1e-4, "10 draws, max relative error " + fmt("%.3g", worst)};
}

Outcome attention_checks() {
    double worst_sum = 0.0, min_weight = 1.0;
    std::size_t passes = 0;
    const auto windows = random_samples(77, 50, 9, 6);
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        for (bool scaled : {false, true}) {
            auto cfg = model_config(8, 9, 6, 500 + seed);
            cfg.scaled_attention = scaled;
            auto model = init_model(cfg);
            // Larger weights push the scores apart and stress the softmax.
            Rng rng(seed);
            for (double& p : model.params()) p *= 1.0 + 9.0 * rng.uniform();
            for (const auto& x : windows.samples) {
                const auto tr = forward(model, x.window);
                double sum = 0.0;
                for (double a : tr.attention) {
                    sum += a;
                    min_weight = std::min(min_weight, a);
                }
                worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
                ++passes;
            }
        }
    }
    return {passes == 1000 && worst_sum <= 1e-9 && min_weight >= 0.0,
            std::to_string(passes) + " passes, max |sum - 1| " + fmt("%.3g", worst_sum) + ", min weight " +
                fmt("%.3g", min_weight)};
}

Outcome overfit_one() {
    auto cfg = model_config(8, 9, 6, 3);
    cfg.epochs = 500;
    cfg.batch_size = 1;
    const auto one = random_samples(31, 1, 9, 6);
    const auto r = train(init_model(cfg), one, one, cfg);
    std::size_t first = 0;
    for (const auto& h : r.history) {
        if (h.val_mse < 1e-6) {
            first = h.epoch;
            break;
        }
    }
    const double final_loss = evaluate_mse(r.model, one);
    return {first != 0 && final_loss < 1e-6,
            "loss " + fmt("%.3g", final_loss) + (first ? ", below 1e-6 from step " + std::to_string(first) : ", never below 1e-6")};
}

/// Uptrend and downtrend windows with different continuation rules. The
/// second feature is the per-bar step, which separates the two regimes.
SampleSet two_regimes(std::uint64_t seed, std::size_t n) {
    Rng rng(seed);
    SampleSet s;
    s.input_len = 9;
    s.feature_names = {"level", "step"};
    for (std::size_t i = 0; i < n; ++i) {
        const bool up = rng.uniform() < 0.5;
        const double base = rng.uniform(0.3, 0.7);
        const double step = rng.uniform(0.005, 0.025) * (up ? 1.0 : -1.0);
        Sample x;
        for (int t = 0; t < 9; ++t) {
            x.window.push_back(base + step * t + 0.002 * rng.normal());
            x.window.push_back(0.5 + 10.0 * step);
        }
        const double last = base + step * 8;
        x.target = up ? last + 3.0 * step : last - 6.0 * step;
        x.target_price = x.target;
        x.entry_close = last;
        x.timestamp = Timestamp{static_cast<std::int64_t>(i) * 900};
        x.bar_index = i;
        s.samples.push_back(x);
    }
    return s;
}

Outcome regime_separation() {
    const auto data = two_regimes(11, 1200);
    Scaler scaler;
    scaler.set("high", {0.0, 1.0});
    EnsembleConfig cfg;
    cfg.model.hidden_size = 8;
    cfg.model.epochs = 160;
    cfg.model.batch_size = 16;
    cfg.model.seed = 5;
    cfg.cluster_features = {"step"};

    PointSet steps;
    steps.dim = 9;
    for (const auto& x : data.samples) {
        std::vector<double> v;
        for (std::size_t t = 0; t < 9; ++t) v.push_back(x.window[t * 2 + 1]);
        steps.push_back(v);
    }
    KMeansOptions ko;
    ko.k = 2;
    ko.seed = 5;
    const auto two = kmeans_fit_best(steps, ko, 10);

    KMeansModel one;
    one.k = 1;
    one.dim = 9;
    one.centroids = {std::vector<double>(9, 0.5)};

    const auto split = train_ensemble(data, two, scaler, cfg);
    const auto global = train_ensemble(data, one, scaler, cfg);
    const double a = split.pooled_validation.mse;
    const double b = global.pooled_validation.mse;
    return {split.trained_count() == 2 && a <= b,
            "per-cluster val MSE " + fmt("%.4g", a) + " vs global " + fmt("%.4g", b)};
}

// ---------------------------------------------------------------- backtest

BarSeries random_walk_bars(std::uint64_t seed, std::size_t n) {
    auto s = oracle::random_series(seed, n, 0.7, 0.0008);
    s.symbol = "SYNTH";
    return s;
}

std::vector<Forecast> random_forecasts(const BarSeries& s, std::uint64_t seed, std::size_t every, std::size_t horizon) {
    Rng rng(seed);
    std::vector<Forecast> f;
    for (std::size_t i = 0; i + horizon < s.size(); i += every) {
        Forecast x;
        x.timestamp = s[i].timestamp;
        x.entry_close = s[i].close;
        x.predicted_high = s[i].close * (1.0 + rng.uniform(0.0001, 0.002));
        f.push_back(x);
    }
    return f;
}

Outcome backtest_checks() {
    StrategyConfig four;
    four.horizon_bars = 4;

    // Hand-computed trades.
    auto hand = [](const std::vector<std::array<double, 3>>& hlc) {
        BarSeries s;
        s.interval_minutes = 15;
        double prev = hlc[0][2];
        for (std::size_t i = 0; i < hlc.size(); ++i) {
            Bar b;
            b.timestamp = Timestamp{1'600'000'000 + static_cast<std::int64_t>(i) * 900};
            b.open = std::clamp(prev, hlc[i][1], hlc[i][0]);
            b.high = hlc[i][0];
            b.low = hlc[i][1];
            b.close = hlc[i][2];
            prev = b.close;
            s.bars.push_back(b);
        }
        return s;
    };
    auto first_trade = [&](const BarSeries& s) {
        Forecast f;
        f.timestamp = s[0].timestamp;
        f.predicted_high = 0.7010;
        f.entry_close = s[0].close;
        return simulate(s, {f}, four).trades.at(0).pnl_per_unit;
    };
    const double hit = first_trade(hand({{0.7002, 0.6998, 0.7000}, {0.7004, 0.6999, 0.7003}, {0.7012, 0.7001, 0.7008},
                                         {0.7009, 0.7003, 0.7005}, {0.7006, 0.7001, 0.7002}}));
    const double miss = first_trade(hand({{0.7002, 0.6998, 0.7000}, {0.7005, 0.6999, 0.7001}, {0.7003, 0.6996, 0.6998},
                                          {0.7000, 0.6992, 0.6994}, {0.6999, 0.6993, 0.6995}}));
    const bool hand_ok = std::abs(hit - 0.00092) <= 1e-15 && std::abs(miss - (-0.00058)) <= 1e-15;

    // Accounting identity on 10,000-trade logs.
    double worst_identity = 0.0;
    std::size_t logged = 0;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const auto bars = random_walk_bars(seed, 60'010);
        StrategyConfig c = four;
        c.leverage_trigger_mae = 0.0004;
        const auto r = simulate(bars, random_forecasts(bars, seed, 5, 4), c);
        logged = std::max(logged, r.trades.size());
        long double capital = c.initial_capital;
        for (const auto& t : r.trades) {
            const double expect = t.pnl_per_unit / t.entry_price * t.capital_at_entry * t.leverage;
            worst_identity = std::max(worst_identity, std::abs(expect - t.pnl));
            worst_identity = std::max(worst_identity, std::abs(static_cast<double>(capital) - t.capital_at_entry));
            capital += t.pnl;
        }
        worst_identity = std::max(worst_identity, std::abs(static_cast<double>(capital) - r.report.final_capital));

        // Random logs straight into the report.
        Rng rng(seed);
        std::vector<TradeRecord> log(10'000);
        long double sum = c.initial_capital;
        for (auto& t : log) {
            t.pnl = rng.uniform(-500.0, 520.0);
            t.marked_pnl = std::min(t.pnl, 0.0) - rng.uniform(0.0, 50.0);
            sum += t.pnl;
        }
        const auto rep = report_metrics(log, c);
        worst_identity = std::max(worst_identity, std::abs(static_cast<double>(sum) - rep.final_capital));
        worst_identity =
            std::max(worst_identity, std::abs(rep.total_pnl - (rep.final_capital - rep.initial_capital)));
    }

    // Truncating bars after a trade's exit leaves that trade and all before it unchanged.
    const auto bars = random_walk_bars(9, 4000);
    const auto forecasts = random_forecasts(bars, 9, 3, 4);
    const auto full = simulate(bars, forecasts, four);
    std::size_t lookahead = 0, probed = 0;
    for (std::size_t k = 0; k < full.trades.size(); k += 7) {
        // Keep the trade's full horizon: the simulator needs it before entering.
        const std::size_t end = std::max(full.trades[k].exit_index, full.trades[k].entry_index + 4) + 1;
        BarSeries head = bars;
        head.bars.resize(end);
        std::vector<Forecast> fs;
        for (const auto& f : forecasts)
            if (f.timestamp.seconds + 4 * 900 <= head.bars.back().timestamp.seconds) fs.push_back(f);
        const auto part = simulate(head, fs, four);
        ++probed;
        bool same = part.trades.size() >= k + 1;
        for (std::size_t i = 0; same && i <= k; ++i) same = part.trades[i] == full.trades[i];
        lookahead += !same;
    }
    return {hand_ok && logged >= 10'000 && worst_identity <= 1e-9 && lookahead == 0,
            "pnl_per_unit " + fmt("%.17g", hit) + " / " + fmt("%.17g", miss) + ", identity error " +
                fmt("%.3g", worst_identity) + " over " + std::to_string(logged) + "-trade logs, " +
                std::to_string(lookahead) + "/" + std::to_string(probed) + " truncations changed a trade"};
}

Outcome leverage_gate() {
    StrategyConfig c;
    const double close = 0.5;
    const double pred = close + 0.0008;
    c.leverage_trigger_mae = (pred - close) / 2.0;
    const bool at = generate_signal(pred, close, c).leverage == 200.0;
    const bool below = generate_signal(std::nextafter(pred, 0.0), close, c).leverage == 1.0;
    c.leverage_trigger_mae = std::nextafter(c.leverage_trigger_mae, 1.0);
    const bool mae_up = generate_signal(pred, close, c).leverage == 1.0;
    return {at && below && mae_up, std::string("boundary ") + (at ? "leveraged" : "not leveraged") +
                                       ", one ulp under " + (below ? "unleveraged" : "leveraged") +
                                       ", mae one ulp up " + (mae_up ? "unleveraged" : "leveraged")};
}

// ---------------------------------------------------------------- pipeline

Outcome determinism() {
    const fs::path dir = fs::temp_directory_path() / "clusterfx_acceptance";
    fs::remove_all(dir);
    fs::create_directories(dir);
    {
        std::ofstream out(dir / "bars.csv");
        write_csv(out, generate_series(SyntheticConfig{}));
    }
    Config cfg;
    cfg.set("data.input", (dir / "bars.csv").string());
    cfg.set("data.symbol", "AUDUSD");
    for (const char* sub : {"a", "b"}) {
        PipelineOptions o;
        o.out_dir = dir / sub;
        run_all(cfg, o);
    }
    std::size_t differing = 0;
    for (const char* f : {"report.txt", "report.json", "trades.csv", "forecasts.csv", "ensemble.json"})
        differing += slurp(dir / "a" / f) != slurp(dir / "b" / f) || slurp(dir / "a" / f).empty();
    return {differing == 0, "10000 bars, " + std::to_string(differing) + " of 5 artifacts differ or are empty"};
}

Outcome leakage() {
    auto base = oracle::random_series(3, 600);
    auto mutated = base;
    for (std::size_t i = 450; i < mutated.size(); ++i) {
        mutated.bars[i].high *= 5.0;
        mutated.bars[i].low *= 0.2;
        mutated.bars[i].close *= 3.0;
    }
    const IndicatorSpec spec{{"sma", {"5"}}, {"rsi", {"14"}}, {"bollinger", {"20"}}, {"stochastic", {"14"}}};
    const std::vector<std::string> names{"open", "close", "sma_close_5", "rsi_14", "bb_upper2_20", "stoch_k_14"};
    const bool scaler_ok = fit_scaler(build_feature_frame(base, spec), names, {0, 400}) ==
                           fit_scaler(build_feature_frame(mutated, spec), names, {0, 400});

    SyntheticConfig sc;
    sc.start = from_civil(2019, 3, 25);
    sc.bars = 2000;
    const auto series = generate_series(sc);
    const auto split = split_with_gap(series, SplitSpec::by_date(*parse_timestamp("2019-04-02"),
                                                                 *parse_timestamp("2019-04-03"), 24.0));
    const std::int64_t gap = split.test.bars.front().timestamp - split.train.bars.back().timestamp;
    return {scaler_ok && gap >= 24 * 3600, std::string("scaler ") + (scaler_ok ? "unchanged" : "changed") +
                                               " by test mutation, date split gap " + fmt("%.2f", gap / 3600.0) + " h"};
}

} // namespace

int main(int argc, char** argv) {
    if (argc > 1) only = argv[1];
    criterion("indicator oracles", 1, indicator_oracles);
    criterion("indicator invariants", 10, indicator_invariants);
    criterion("k-means", 1, kmeans_checks);
    criterion("birch", 5, birch_checks);
    criterion("gradient check", 30, gradient_check);
    criterion("attention weights", 5, attention_checks);
    criterion("overfit one sample", 10, overfit_one);
    criterion("regime separation", 120, regime_separation);
    criterion("backtest accounting", 10, backtest_checks);
    criterion("leverage gate", 1, leverage_gate);
    criterion("pipeline determinism", 300, determinism);
    criterion("leakage", 5, leakage);
    std::printf("%d failed\n", failures);
    return failures == 0 ? 0 : 1;
}
