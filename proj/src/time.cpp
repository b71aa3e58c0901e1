#include "clusterfx/time.hpp"

#include <charconv>
#include <chrono>
#include <cstdio>

namespace clusterfx {

namespace {

bool read_int(std::string_view s, std::size_t pos, std::size_t len, int& out) {
    if (pos + len > s.size()) return false;
    for (std::size_t i = pos; i < pos + len; ++i) {
        if (s[i] < '0' || s[i] > '9') return false;
    }
    auto res = std::from_chars(s.data() + pos, s.data() + pos + len, out);
    return res.ec == std::errc{};
}

} // namespace

Timestamp from_civil(int year, unsigned month, unsigned day, int hour, int minute, int second) {
    using namespace std::chrono;
    const sys_days d{std::chrono::year{year} / std::chrono::month{month} / std::chrono::day{day}};
    return {static_cast<std::int64_t>(d.time_since_epoch().count()) * 86400 + hour * kSecondsPerHour +
            minute * kSecondsPerMinute + second};
}

std::optional<Timestamp> parse_timestamp(std::string_view text) {
    while (!text.empty() && (text.front() == ' ' || text.front() == '"')) text.remove_prefix(1);
    while (!text.empty() && (text.back() == ' ' || text.back() == '"' || text.back() == '\r')) text.remove_suffix(1);
    if (text.empty()) return std::nullopt;

    // Epoch seconds: optional sign followed by digits only.
    {
        std::size_t start = (text.front() == '-' || text.front() == '+') ? 1 : 0;
        bool digits = text.size() > start;
        for (std::size_t i = start; i < text.size() && digits; ++i) digits = text[i] >= '0' && text[i] <= '9';
        if (digits) {
            std::int64_t v = 0;
            const char* b = text.data() + (text.front() == '+' ? 1 : 0);
            auto res = std::from_chars(b, text.data() + text.size(), v);
            if (res.ec == std::errc{} && res.ptr == text.data() + text.size()) return Timestamp{v};
        }
    }

    int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
    if (text.size() < 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
    if (!read_int(text, 0, 4, y) || !read_int(text, 5, 2, mo) || !read_int(text, 8, 2, d)) return std::nullopt;
    if (mo < 1 || mo > 12 || d < 1 || d > 31) return std::nullopt;
    std::size_t pos = 10;
    std::int64_t offset = 0;
    if (pos < text.size()) {
        if (text[pos] != 'T' && text[pos] != ' ') return std::nullopt;
        ++pos;
        if (!read_int(text, pos, 2, h) || pos + 2 >= text.size() || text[pos + 2] != ':' ||
            !read_int(text, pos + 3, 2, mi))
            return std::nullopt;
        pos += 5;
        if (pos < text.size() && text[pos] == ':') {
            if (!read_int(text, pos + 1, 2, sec)) return std::nullopt;
            pos += 3;
            // Fractional seconds are truncated.
            if (pos < text.size() && text[pos] == '.') {
                ++pos;
                while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') ++pos;
            }
        }
        if (pos < text.size()) {
            if (text[pos] == 'Z' && pos + 1 == text.size()) {
                pos += 1;
            } else if ((text[pos] == '+' || text[pos] == '-') && pos + 6 == text.size() && text[pos + 3] == ':') {
                int oh = 0, om = 0;
                if (!read_int(text, pos + 1, 2, oh) || !read_int(text, pos + 4, 2, om)) return std::nullopt;
                offset = (text[pos] == '+' ? 1 : -1) * (oh * kSecondsPerHour + om * kSecondsPerMinute);
                pos += 6;
            } else {
                return std::nullopt;
            }
        }
        if (h > 23 || mi > 59 || sec > 60) return std::nullopt;
    }
    if (pos != text.size()) return std::nullopt;

    using namespace std::chrono;
    const year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(mo)},
                             std::chrono::day{static_cast<unsigned>(d)}};
    if (!ymd.ok()) return std::nullopt;
    Timestamp t = from_civil(y, mo, d, h, mi, sec);
    t.seconds -= offset;
    return t;
}

std::string format_timestamp(Timestamp t) {
    using namespace std::chrono;
    std::int64_t days = t.seconds / 86400;
    std::int64_t rem = t.seconds % 86400;
    if (rem < 0) {
        rem += 86400;
        days -= 1;
    }
    const year_month_day ymd{sys_days{std::chrono::days{days}}};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), static_cast<int>(rem / 3600),
                  static_cast<int>((rem / 60) % 60), static_cast<int>(rem % 60));
    return buf;
}

int weekday(Timestamp t) {
    std::int64_t days = t.seconds / 86400;
    if (t.seconds % 86400 < 0) days -= 1;
    // 1970-01-01 was a Thursday.
    return static_cast<int>(((days % 7) + 11) % 7);
}

} // namespace clusterfx
