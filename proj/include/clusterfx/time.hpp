#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace clusterfx {

/// UTC instant with one-second resolution.
struct Timestamp {
    std::int64_t seconds = 0;

    friend constexpr auto operator<=>(Timestamp, Timestamp) = default;
};

constexpr std::int64_t kSecondsPerMinute = 60;
constexpr std::int64_t kSecondsPerHour = 3600;

constexpr Timestamp operator+(Timestamp t, std::int64_t secs) { return {t.seconds + secs}; }
constexpr std::int64_t operator-(Timestamp a, Timestamp b) { return a.seconds - b.seconds; }

Timestamp from_civil(int year, unsigned month, unsigned day, int hour = 0, int minute = 0, int second = 0);

/// Accepts epoch seconds ("1554249600") or ISO-8601 dates/datetimes
/// ("2019-04-03", "2019-04-03 10:15", "2019-04-03T10:15:00Z", "...+10:00").
/// Inputs without an offset are taken as UTC.
std::optional<Timestamp> parse_timestamp(std::string_view text);

/// "YYYY-MM-DDTHH:MM:SSZ"
std::string format_timestamp(Timestamp t);

/// 0 = Sunday ... 6 = Saturday.
int weekday(Timestamp t);

} // namespace clusterfx
