#include "clusterfx/error.hpp"
#include "clusterfx/indicators.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <array>
#include <cmath>
#include <sstream>

using namespace clusterfx;

namespace {

constexpr double kTol = 1e-9;

BarSeries bars_from(const std::vector<std::array<double, 4>>& ohlc) {
    BarSeries s;
    for (std::size_t i = 0; i < ohlc.size(); ++i) {
        s.bars.push_back({Timestamp{static_cast<std::int64_t>(i) * 900}, ohlc[i][0], ohlc[i][1], ohlc[i][2], ohlc[i][3], {}});
    }
    return s;
}

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::Io;
}

} // namespace

TEST_CASE("hand-computed values") {
    const std::vector<double> x{1, 2, 3, 4};
    const auto s = sma(x, 2);
    CHECK(std::isnan(s[0]));
    CHECK(s[1] == 1.5);
    CHECK(s[3] == 3.5);
    CHECK(s.warmup == 1);

    const auto e = ema(std::vector<double>{1, 2, 3}, 2);
    CHECK(e[1] == doctest::Approx(1.5).epsilon(1e-15));
    CHECK(e[2] == doctest::Approx(2.5).epsilon(1e-15));

    const auto b = bollinger(std::vector<double>{1, 3}, 2);
    CHECK(b.mid[1] == 2.0);
    CHECK(b.upper1[1] == 3.0);
    CHECK(b.upper2[1] == 4.0);
    CHECK(b.lower2[1] == 0.0);

    const auto r = rsi(std::vector<double>{1, 2, 3, 2}, 3);
    CHECK(r[3] == doctest::Approx(200.0 / 3.0).epsilon(1e-14));
    CHECK(r.warmup == 3);
}

TEST_CASE("RSI edge cases") {
    const std::vector<double> flat(20, 1.0);
    CHECK(rsi(flat, 14)[19] == 100.0);
    std::vector<double> down;
    for (int i = 0; i < 20; ++i) down.push_back(2.0 - 0.01 * i);
    CHECK(rsi(down, 14)[19] == 0.0);
    CHECK(rsi(down, 14, RsiSmoothing::Wilder)[19] == 0.0);
    CHECK(code_of([&] { rsi(std::vector<double>(14, 1.0), 14); }) == ErrorCode::WindowTooLong);
}

TEST_CASE("stochastic hand values and flat range") {
    const auto s = bars_from({{1, 2, 1, 1.5}, {1.5, 3, 1, 2}, {2, 2.5, 1.5, 2.5}});
    const auto st = stochastic(s, 3, 1);
    CHECK(std::isnan(st.k[1]));
    CHECK(st.k[2] == doctest::Approx(75.0));
    const auto flat = bars_from({{1, 1, 1, 1}, {1, 1, 1, 1}});
    CHECK(stochastic(flat, 2, 1).k[1] == 50.0);
}

TEST_CASE("DMI tie rule and degenerate range") {
    // Bar 1: outside bar with equal expansions up and down.
    const auto s = bars_from({{1, 2, 1, 1.5}, {1.5, 2.5, 0.5, 1.5}, {1.5, 3.0, 1.0, 2.5}});
    const auto d = dmi(s, 1);
    CHECK(d.plus_di[1] == 0.0);
    CHECK(d.minus_di[1] == 0.0);
    CHECK(std::isnan(d.dx[1]));
    CHECK(d.plus_di[2] > 0.0);
    CHECK(d.dx[2] == doctest::Approx(100.0));
    const auto flat = bars_from({{1, 1, 1, 1}, {1, 1, 1, 1}, {1, 1, 1, 1}});
    CHECK(code_of([&] { dmi(flat, 2); }) == ErrorCode::DegenerateRange);
}

TEST_CASE("library matches brute-force oracles on small fixtures") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto s = oracle::random_series(seed, 20);
        const auto c = s.closes();
        for (std::size_t n : {2u, 3u, 5u, 8u}) {
            CHECK(oracle::max_abs_diff(sma(c, n).values, oracle::sma(c, n)) <= kTol);
            CHECK(oracle::max_abs_diff(ema(c, n).values, oracle::ema(c, n)) <= kTol);
            CHECK(oracle::max_abs_diff(rsi(c, n).values, oracle::rsi_simple(c, n)) <= kTol);
            CHECK(oracle::max_abs_diff(rsi(c, n, RsiSmoothing::Wilder).values, oracle::rsi_wilder(c, n)) <= kTol);
            const auto b = bollinger(c, n);
            const auto ob = oracle::bollinger(c, n);
            CHECK(oracle::max_abs_diff(b.mid.values, ob.mid) <= kTol);
            CHECK(oracle::max_abs_diff(b.upper1.values, ob.up1) <= kTol);
            CHECK(oracle::max_abs_diff(b.lower1.values, ob.lo1) <= kTol);
            CHECK(oracle::max_abs_diff(b.upper2.values, ob.up2) <= kTol);
            CHECK(oracle::max_abs_diff(b.lower2.values, ob.lo2) <= kTol);
            const auto st = stochastic(s, n, 3);
            const auto ost = oracle::stochastic(s, n, 3);
            CHECK(oracle::max_abs_diff(st.k.values, ost.k) <= kTol);
            CHECK(oracle::max_abs_diff(st.d.values, ost.d) <= kTol);
            const auto d = dmi(s, n);
            const auto od = oracle::dmi(s, n);
            CHECK(oracle::max_abs_diff(d.plus_di.values, od.plus) <= kTol);
            CHECK(oracle::max_abs_diff(d.minus_di.values, od.minus) <= kTol);
            CHECK(oracle::max_abs_diff(d.dx.values, od.dx) <= kTol);
        }
        const auto m = macd(c, 3, 6, 3);
        const auto om = oracle::macd(c, 3, 6, 3);
        CHECK(oracle::max_abs_diff(m.line.values, om.line) <= kTol);
        CHECK(oracle::max_abs_diff(m.signal.values, om.signal) <= kTol);
        CHECK(m.line.name == "macd_line_3_6");
        CHECK(m.signal.name == "macd_signal_3_6_3");
    }
}

TEST_CASE("windows longer than the series") {
    const std::vector<double> x{1, 2, 3};
    CHECK(code_of([&] { sma(x, 4); }) == ErrorCode::WindowTooLong);
    CHECK(code_of([&] { macd(std::vector<double>(26, 1.0)); }) == ErrorCode::WindowTooLong);
    // MACD defined but its signal needs more bars than remain.
    std::vector<double> c;
    for (int i = 0; i < 30; ++i) c.push_back(1.0 + 0.01 * i);
    const auto m = macd(c);
    CHECK(m.line.defined(29));
    CHECK_FALSE(m.signal.defined(29));
}

TEST_CASE("warmup is the count of leading undefined values") {
    const auto s = oracle::random_series(99, 300);
    const auto frame = build_feature_frame(s, default_indicator_spec());
    CHECK(frame.cols() > 130);
    for (const auto& col : frame.columns()) {
        INFO(col.name);
        for (std::size_t i = 0; i < col.warmup; ++i) CHECK_FALSE(col.defined(i));
        if (col.warmup < col.size()) CHECK(col.defined(col.warmup));
    }
    CHECK(frame.column("rsi_14").warmup == 14);
    CHECK(frame.column("sma_close_20").warmup == 19);
    CHECK(frame.column("macd_line_12_26").warmup == 25);
    CHECK(frame.column("macd_signal_12_26_9").warmup == 33);
    CHECK(frame.column("plus_di_14").warmup == 14);
}

TEST_CASE("feature frame CSV round trip") {
    const auto s = oracle::random_series(5, 60);
    std::istringstream spec_in("sma: 5\nrsi: 14  # momentum\n\nbollinger: 10\ncbs: 0.1\n");
    const auto spec = parse_indicator_spec(spec_in);
    REQUIRE(spec.size() == 4);
    CHECK(spec[1] == IndicatorRequest{"rsi", {"14"}});
    const auto frame = build_feature_frame(s, spec);
    CHECK(frame.has("sma_close_5"));
    CHECK(frame.has("cbs_0.1"));
    std::ostringstream out;
    frame.write_csv(out);
    std::istringstream in(out.str());
    const auto back = FeatureFrame::read_csv(in);
    REQUIRE(back.names() == frame.names());
    CHECK(back.timestamps() == frame.timestamps());
    for (const auto& col : frame.columns()) {
        CHECK(back.column(col.name).warmup == col.warmup);
        CHECK(oracle::max_abs_diff(back.column(col.name).values, col.values) == 0.0);
    }
    std::istringstream bad("frobnicate: 3\n");
    CHECK(code_of([&] { build_feature_frame(s, parse_indicator_spec(bad)); }) == ErrorCode::UnknownIndicator);
}

TEST_CASE("concealing baby swallow on a constructed pattern") {
    const auto s = bars_from({
        {1.00, 1.00, 0.90, 0.90}, // black marubozu
        {0.95, 0.95, 0.85, 0.85}, // opens inside the first body, closes lower
        {0.83, 0.88, 0.80, 0.80}, // gaps down, upper shadow into the prior body
        {0.89, 0.89, 0.76, 0.77}, // engulfs the third candle
    });
    const auto m = detect_concealing_baby_swallow(s, 0.05);
    CHECK(m.count() == 1);
    CHECK(m.flags[3]);
    auto broken = s;
    broken.bars[3].close = 0.81;
    CHECK(detect_concealing_baby_swallow(broken, 0.05).count() == 0);
}

TEST_CASE("oversold and overbought flags") {
    IndicatorColumn r{"rsi", {oracle::nan, 25, 30, 50, 80, 90}, 1};
    const auto ev = detect_oversold(r, 30, 80);
    CHECK(ev.oversold.count() == 2);
    CHECK(ev.overbought.count() == 2);
    CHECK_FALSE(ev.oversold.flags[0]);
    CHECK(code_of([&] { detect_oversold(r, 80, 30); }) == ErrorCode::InvalidArgument);
}
