#include "clusterfx/error.hpp"
#include "clusterfx/market_data.hpp"
#include "clusterfx/synthetic.hpp"

#include <doctest.h>

#include <sstream>

using namespace clusterfx;

namespace {

BarSeries parse(const std::string& text, int interval = 15) {
    std::istringstream in(text);
    return parse_csv(in, interval, "AUDUSD");
}

ErrorCode code_of(const std::string& text) {
    try {
        parse(text);
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::Io;
}

BarSeries hourly_days(Timestamp start, int days) {
    BarSeries s;
    s.interval_minutes = 60;
    for (int h = 0; h < days * 24; ++h) s.bars.push_back({start + h * kSecondsPerHour, 1.0, 1.1, 0.9, 1.0, {}});
    return s;
}

} // namespace

TEST_CASE("timestamps parse in several forms") {
    CHECK(parse_timestamp("2019-04-03")->seconds == 1554249600);
    CHECK(parse_timestamp("1554249600")->seconds == 1554249600);
    CHECK(parse_timestamp("2019-04-03T10:15:00Z")->seconds == 1554249600 + 10 * 3600 + 15 * 60);
    CHECK(parse_timestamp("2019-04-03 10:15")->seconds == 1554249600 + 10 * 3600 + 15 * 60);
    CHECK(parse_timestamp("2019-04-03T10:15:00+10:00")->seconds == 1554249600 + 15 * 60);
    CHECK_FALSE(parse_timestamp("yesterday"));
    CHECK(format_timestamp(from_civil(2005, 1, 2, 22, 0)) == "2005-01-02T22:00:00Z");
    CHECK(weekday(from_civil(2019, 4, 3)) == 3);
}

TEST_CASE("parse sorts rows and round-trips through write_csv") {
    const auto s = parse("timestamp,open,high,low,close\n"
                         "2019-04-03T00:15:00Z,0.7101,0.7105,0.7099,0.7103\n"
                         "2019-04-03T00:00:00Z,0.7100,0.7102,0.7098,0.7101\n");
    REQUIRE(s.size() == 2);
    CHECK(s[0].timestamp < s[1].timestamp);
    CHECK(s[0].close == 0.7101);
    CHECK(s.find(s[1].timestamp) == 1u);
    CHECK_FALSE(s.find(Timestamp{5}));

    std::ostringstream out;
    write_csv(out, s);
    CHECK(parse(out.str()) == s);
}

TEST_CASE("volume column is optional") {
    const auto s = parse("timestamp,open,high,low,close,volume\n2019-04-03,1,1,1,1,\n2019-04-03T00:15:00Z,1,2,1,2,10\n");
    CHECK_FALSE(s[0].volume);
    CHECK(*s[1].volume == 10.0);
}

TEST_CASE("malformed input is rejected with the right code") {
    const std::string h = "timestamp,open,high,low,close\n";
    CHECK(code_of("") == ErrorCode::MalformedRow);
    CHECK(code_of("time,o,h,l,c\n") == ErrorCode::MalformedRow);
    CHECK(code_of(h + "2019-04-03,1,1,1\n") == ErrorCode::MalformedRow);
    CHECK(code_of(h + "2019-04-03,abc,1,1,1\n") == ErrorCode::MalformedRow);
    CHECK(code_of(h + "not-a-date,1,1,1,1\n") == ErrorCode::MalformedRow);
    CHECK(code_of(h + "2019-04-03,1,0.9,0.8,1\n") == ErrorCode::InvariantViolation);
    CHECK(code_of(h + "2019-04-03,1,1,1.1,1\n") == ErrorCode::InvariantViolation);
    CHECK(code_of(h + "2019-04-03,-1,1,-2,1\n") == ErrorCode::InvariantViolation);
    CHECK(code_of(h + "2019-04-03,1,1,1,1\n2019-04-03,1,1,1,1\n") == ErrorCode::DuplicateTimestamp);
    CHECK(code_of(h + "2019-04-03T00:00:00Z,1,1,1,1\n2019-04-03T00:07:00Z,1,1,1,1\n") ==
          ErrorCode::InvariantViolation);
}

TEST_CASE("error messages carry the file line") {
    try {
        parse("timestamp,open,high,low,close\n2019-04-03,1,1,1,1\n2019-04-03T00:15:00Z,x,1,1,1\n");
        FAIL("no throw");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
}

TEST_CASE("validation reports gaps and breaches without throwing") {
    BarSeries s;
    s.interval_minutes = 15;
    const Timestamp t0 = from_civil(2019, 4, 5, 21, 0);
    s.bars.push_back({t0, 1, 1, 1, 1, {}});
    s.bars.push_back({t0 + 900, 1, 1, 1, 1, {}});
    s.bars.push_back({t0 + 900 * 5, 1, 1, 1, 1, {}});
    s.bars.push_back({t0 + 900 * 5, 1, 1, 1, 1, {}});
    s.bars.push_back({t0 + 900 * 6, 1, 0.5, 1, 1, {}});
    const auto r = validate_series(s);
    REQUIRE(r.gaps.size() == 1);
    CHECK(r.gaps[0].missing_bars == 3);
    CHECK(r.duplicates.size() == 1);
    CHECK(r.breaches.size() == 1);
    CHECK(r.has_errors());
    CHECK(validate_series(generate_series({})).clean() == false); // weekend gaps
    CHECK_FALSE(validate_series(generate_series({})).has_errors());
}

TEST_CASE("ratio split keeps order and honours the gap") {
    const auto s = hourly_days(from_civil(2020, 1, 1), 10);
    const auto plain = split_with_gap(s, SplitSpec::by_ratio(0.5));
    CHECK(plain.train.size() == 120);
    CHECK(plain.test.size() == 120);
    const auto gapped = split_with_gap(s, SplitSpec::by_ratio(0.5, 24));
    CHECK(gapped.train.size() == 120);
    CHECK(gapped.test.bars.front().timestamp - gapped.train.bars.back().timestamp >= 24 * kSecondsPerHour);
    CHECK(gapped.test.size() == 97);
    CHECK_THROWS_AS(split_with_gap(s, SplitSpec::by_ratio(1.0)), Error);
    CHECK_THROWS_AS(split_with_gap(s, SplitSpec::by_ratio(0.5, 1000)), Error);
}

TEST_CASE("date split on a calendar boundary") {
    const auto s = hourly_days(from_civil(2019, 3, 30), 8);
    const auto spec = SplitSpec::by_date(from_civil(2019, 4, 2, 23), from_civil(2019, 4, 3, 23), 24);
    const auto r = split_with_gap(s, spec);
    CHECK(r.train.bars.back().timestamp == from_civil(2019, 4, 2, 23));
    CHECK(r.test.bars.front().timestamp == from_civil(2019, 4, 3, 23));
    CHECK_THROWS_AS(split_with_gap(s, SplitSpec::by_date(from_civil(2019, 4, 2), from_civil(2019, 4, 2, 12), 24)), Error);
    try {
        split_with_gap(s, SplitSpec::by_date(from_civil(2019, 3, 1), from_civil(2019, 3, 3), 24));
        FAIL("no throw");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::EmptyPartition);
    }
}

TEST_CASE("synthetic series is deterministic and valid") {
    SyntheticConfig cfg;
    cfg.bars = 500;
    const auto a = generate_series(cfg);
    CHECK(a == generate_series(cfg));
    CHECK(a.size() == 500);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(check_bar(a[i]).empty());
    cfg.seed = 8;
    CHECK_FALSE(a == generate_series(cfg));
    CHECK(generate_regimes(cfg).size() == 500);
}
