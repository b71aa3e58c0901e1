#include "clusterfx/market_data.hpp"

#include "clusterfx/error.hpp"
#include "clusterfx/format.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace clusterfx {

std::string check_bar(const Bar& b) {
    const double prices[] = {b.open, b.high, b.low, b.close};
    for (double p : prices) {
        if (!std::isfinite(p) || p <= 0.0) return "prices must be finite and strictly positive";
    }
    if (b.low > b.high) return "low > high";
    if (b.open < b.low || b.open > b.high) return "open outside [low, high]";
    if (b.close < b.low || b.close > b.high) return "close outside [low, high]";
    if (b.volume && (!std::isfinite(*b.volume) || *b.volume < 0.0)) return "volume must be non-negative";
    return {};
}

namespace {

template <typename F>
std::vector<double> column(const std::vector<Bar>& bars, F f) {
    std::vector<double> out;
    out.reserve(bars.size());
    for (const auto& b : bars) out.push_back(f(b));
    return out;
}

} // namespace

std::vector<double> BarSeries::opens() const { return column(bars, [](const Bar& b) { return b.open; }); }
std::vector<double> BarSeries::highs() const { return column(bars, [](const Bar& b) { return b.high; }); }
std::vector<double> BarSeries::lows() const { return column(bars, [](const Bar& b) { return b.low; }); }
std::vector<double> BarSeries::closes() const { return column(bars, [](const Bar& b) { return b.close; }); }

std::optional<std::size_t> BarSeries::find(Timestamp t) const {
    auto it = std::lower_bound(bars.begin(), bars.end(), t,
                               [](const Bar& b, Timestamp ts) { return b.timestamp < ts; });
    if (it == bars.end() || it->timestamp != t) return std::nullopt;
    return static_cast<std::size_t>(it - bars.begin());
}

BarSeries parse_csv(std::istream& in, int interval_minutes, std::string symbol) {
    if (interval_minutes <= 0) throw Error(ErrorCode::InvalidArgument, "interval_minutes must be positive");

    std::string line;
    std::size_t line_no = 0;
    bool has_volume = false;
    bool saw_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto cols = split(trim(line), ',');
        for (auto& c : cols) c = std::string(trim(c));
        const std::vector<std::string> base{"timestamp", "open", "high", "low", "close"};
        const bool exact = cols.size() == 5 && std::equal(base.begin(), base.end(), cols.begin());
        const bool with_volume = cols.size() == 6 && std::equal(base.begin(), base.end(), cols.begin()) &&
                                 cols[5] == "volume";
        if (!exact && !with_volume) {
            throw Error(ErrorCode::MalformedRow,
                        "line " + std::to_string(line_no) + ": expected header timestamp,open,high,low,close[,volume]");
        }
        has_volume = with_volume;
        saw_header = true;
        break;
    }
    if (!saw_header) throw Error(ErrorCode::MalformedRow, "line 1: missing header row");

    struct Row {
        Bar bar;
        std::size_t line;
    };
    std::vector<Row> rows;
    const std::size_t ncols = has_volume ? 6 : 5;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto cols = split(trim(line), ',');
        const auto where = "line " + std::to_string(line_no);
        if (cols.size() != ncols) throw Error(ErrorCode::MalformedRow, where + ": expected " + std::to_string(ncols) + " fields");
        auto ts = parse_timestamp(cols[0]);
        if (!ts) throw Error(ErrorCode::MalformedRow, where + ": unparseable timestamp '" + cols[0] + "'");
        Bar bar;
        bar.timestamp = *ts;
        double* fields[] = {&bar.open, &bar.high, &bar.low, &bar.close};
        for (int k = 0; k < 4; ++k) {
            auto v = parse_double(cols[k + 1]);
            if (!v) throw Error(ErrorCode::MalformedRow, where + ": unparseable price '" + cols[k + 1] + "'");
            *fields[k] = *v;
        }
        if (has_volume && !trim(cols[5]).empty()) {
            auto v = parse_double(cols[5]);
            if (!v) throw Error(ErrorCode::MalformedRow, where + ": unparseable volume '" + cols[5] + "'");
            bar.volume = *v;
        }
        if (auto msg = check_bar(bar); !msg.empty()) throw Error(ErrorCode::InvariantViolation, where + ": " + msg);
        rows.push_back({bar, line_no});
    }

    std::stable_sort(rows.begin(), rows.end(),
                     [](const Row& a, const Row& b) { return a.bar.timestamp < b.bar.timestamp; });

    BarSeries series;
    series.symbol = std::move(symbol);
    series.interval_minutes = interval_minutes;
    series.bars.reserve(rows.size());
    const std::int64_t step = series.interval_seconds();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (i > 0) {
            const std::int64_t delta = rows[i].bar.timestamp - rows[i - 1].bar.timestamp;
            if (delta == 0) {
                throw Error(ErrorCode::DuplicateTimestamp, "line " + std::to_string(rows[i].line) + ": timestamp " +
                                                               format_timestamp(rows[i].bar.timestamp) +
                                                               " also on line " + std::to_string(rows[i - 1].line));
            }
            if (delta % step != 0) {
                throw Error(ErrorCode::InvariantViolation,
                            "line " + std::to_string(rows[i].line) + ": timestamp " +
                                format_timestamp(rows[i].bar.timestamp) + " is off the " +
                                std::to_string(interval_minutes) + "-minute grid");
            }
        }
        series.bars.push_back(rows[i].bar);
    }
    return series;
}

BarSeries load_csv(const std::string& path, int interval_minutes, std::string symbol) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
    return parse_csv(in, interval_minutes, std::move(symbol));
}

void write_csv(std::ostream& out, const BarSeries& series) {
    const bool has_volume =
        std::any_of(series.bars.begin(), series.bars.end(), [](const Bar& b) { return b.volume.has_value(); });
    out << "timestamp,open,high,low,close" << (has_volume ? ",volume" : "") << '\n';
    for (const auto& b : series.bars) {
        out << format_timestamp(b.timestamp) << ',' << format_number(b.open) << ',' << format_number(b.high) << ','
            << format_number(b.low) << ',' << format_number(b.close);
        if (has_volume) out << ',' << (b.volume ? format_number(*b.volume) : std::string{});
        out << '\n';
    }
}

ValidationReport validate_series(const BarSeries& series) {
    ValidationReport report;
    const std::int64_t step = series.interval_seconds();
    for (std::size_t i = 0; i < series.size(); ++i) {
        const Bar& b = series[i];
        if (auto msg = check_bar(b); !msg.empty()) report.breaches.push_back({i, b.timestamp, msg});
        if (i == 0) continue;
        const std::int64_t delta = b.timestamp - series[i - 1].timestamp;
        if (delta == 0) {
            if (report.duplicates.empty() || report.duplicates.back() != b.timestamp)
                report.duplicates.push_back(b.timestamp);
        } else if (delta < 0) {
            report.breaches.push_back({i, b.timestamp, "timestamp earlier than previous bar"});
        } else if (step > 0 && delta % step != 0) {
            report.breaches.push_back({i, b.timestamp, "timestamp off the interval grid"});
        } else if (delta > step) {
            report.gaps.push_back({i, series[i - 1].timestamp, b.timestamp, delta / step - 1});
        }
    }
    return report;
}

std::string ValidationReport::to_text() const {
    std::ostringstream os;
    for (const auto& g : gaps) {
        os << "gap " << format_timestamp(g.from) << " -> " << format_timestamp(g.to) << " missing_bars=" << g.missing_bars
           << '\n';
    }
    for (const auto& d : duplicates) os << "duplicate " << format_timestamp(d) << '\n';
    for (const auto& b : breaches) {
        os << "breach index=" << b.index << ' ' << format_timestamp(b.timestamp) << ' ' << b.message << '\n';
    }
    return os.str();
}

std::string ValidationReport::to_json() const {
    nlohmann::ordered_json j;
    j["gaps"] = nlohmann::ordered_json::array();
    for (const auto& g : gaps) {
        j["gaps"].push_back({{"index", g.index},
                             {"from", format_timestamp(g.from)},
                             {"to", format_timestamp(g.to)},
                             {"missing_bars", g.missing_bars}});
    }
    j["duplicates"] = nlohmann::ordered_json::array();
    for (const auto& d : duplicates) j["duplicates"].push_back(format_timestamp(d));
    j["breaches"] = nlohmann::ordered_json::array();
    for (const auto& b : breaches) {
        j["breaches"].push_back({{"index", b.index}, {"timestamp", format_timestamp(b.timestamp)}, {"message", b.message}});
    }
    return j.dump(2) + "\n";
}

SplitSpec SplitSpec::by_ratio(double fraction, double gap_hours) {
    SplitSpec s;
    s.mode = SplitMode::ByRatio;
    s.train_fraction = fraction;
    s.gap_hours = gap_hours;
    return s;
}

SplitSpec SplitSpec::by_date(Timestamp train_end, Timestamp test_start, double gap_hours) {
    SplitSpec s;
    s.mode = SplitMode::ByDate;
    s.train_end = train_end;
    s.test_start = test_start;
    s.gap_hours = gap_hours;
    return s;
}

std::int64_t SplitSpec::gap_seconds() const { return std::llround(gap_hours * static_cast<double>(kSecondsPerHour)); }

void SplitSpec::validate() const {
    if (!(gap_hours >= 0.0) || !std::isfinite(gap_hours)) throw Error(ErrorCode::InvalidArgument, "gap_hours must be >= 0");
    if (mode == SplitMode::ByRatio) {
        if (!(train_fraction > 0.0 && train_fraction < 1.0))
            throw Error(ErrorCode::InvalidArgument, "train_fraction must lie in (0, 1)");
    } else if (test_start - train_end < gap_seconds()) {
        throw Error(ErrorCode::InvalidArgument, "test_start - train_end is shorter than the gap");
    }
}

SplitResult split_with_gap(const BarSeries& series, const SplitSpec& spec) {
    spec.validate();
    SplitResult out;
    out.train.symbol = out.test.symbol = series.symbol;
    out.train.interval_minutes = out.test.interval_minutes = series.interval_minutes;

    std::size_t train_count = 0;
    if (spec.mode == SplitMode::ByRatio) {
        train_count = static_cast<std::size_t>(std::floor(static_cast<double>(series.size()) * spec.train_fraction));
    } else {
        while (train_count < series.size() && series[train_count].timestamp <= spec.train_end) ++train_count;
    }
    if (train_count == 0) throw Error(ErrorCode::EmptyPartition, "training partition is empty");
    out.train.bars.assign(series.bars.begin(), series.bars.begin() + static_cast<std::ptrdiff_t>(train_count));

    const Timestamp earliest_test = out.train.bars.back().timestamp + spec.gap_seconds();
    for (std::size_t i = train_count; i < series.size(); ++i) {
        const Bar& b = series[i];
        if (b.timestamp < earliest_test) continue;
        if (spec.mode == SplitMode::ByDate && b.timestamp < spec.test_start) continue;
        out.test.bars.push_back(b);
    }
    if (out.test.empty()) throw Error(ErrorCode::EmptyPartition, "gap consumes the test partition");
    return out;
}

} // namespace clusterfx
