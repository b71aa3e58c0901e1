#include "clusterfx/config.hpp"

#include "clusterfx/error.hpp"
#include "clusterfx/format.hpp"
#include "clusterfx/rng.hpp"

#include <cstdio>
#include <fstream>
#include <istream>
#include <sstream>

namespace clusterfx {

const std::map<std::string, std::string>& Config::defaults() {
    static const std::map<std::string, std::string> d{
        {"data.input", ""},
        {"data.symbol", "AUDUSD"},
        {"data.interval_minutes", "15"},
        {"split.mode", "ratio"},
        {"split.train_fraction", "0.8"},
        {"split.train_end", ""},
        {"split.test_start", ""},
        {"split.gap_hours", "24"},
        {"indicators.spec", "default"},
        {"events.kind", "oversold"},
        {"events.rsi_period", "14"},
        {"events.low", "30"},
        {"events.high", "80"},
        {"events.cbs_tol", "0.05"},
        {"window.input_len_bars", "9"},
        {"window.horizon_bars", "4"},
        {"features.model", ""},
        {"select.candidates", "all"},
        {"select.base", "open,close"},
        {"select.top_k", "4"},
        {"select.epochs", "35"},
        {"select.tail", "10"},
        {"select.max_samples", "2000"},
        {"select.val_fraction", "0.2"},
        {"select.hidden_size", "8"},
        {"select.learning_rate", "0.05"},
        {"select.batch_size", "32"},
        {"cluster.method", "kmeans"},
        {"cluster.k", "8"},
        {"cluster.threshold", "0.5"},
        {"cluster.features", "selected"},
        {"cluster.restarts", "10"},
        {"cluster.max_iter", "300"},
        {"model.hidden_size", "32"},
        {"model.learning_rate", "0.05"},
        {"model.epochs", "50"},
        {"model.batch_size", "32"},
        {"model.scaled_attention", "false"},
        {"model.clip_norm", "5"},
        {"model.val_fraction", "0.2"},
        {"strategy.spread", "auto"},
        {"strategy.max_leverage", "200"},
        {"strategy.initial_capital", "10000"},
        {"strategy.leverage_mae", "pooled"},
        {"seed", "42"},
        {"synthetic.bars", "10000"},
        {"synthetic.seed", "7"},
    };
    return d;
}

Config::Config() : values_(defaults()) {}

void Config::set(const std::string& key, const std::string& value) {
    if (!defaults().count(key)) throw Error(ErrorCode::ConfigError, "unknown config key '" + key + "'");
    values_[key] = std::string(trim(value));
}

void Config::set_assignment(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::ConfigError, "expected key=value, got '" + assignment + "'");
    set(std::string(trim(std::string_view(assignment).substr(0, eq))), assignment.substr(eq + 1));
}

void Config::merge(std::istream& in, const std::string& source) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        try {
            set_assignment(std::string(t));
        } catch (const Error& e) {
            throw Error(ErrorCode::ConfigError, source + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

void Config::merge_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open config file " + path);
    merge(in, path);
}

const std::string& Config::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw Error(ErrorCode::ConfigError, "unknown config key '" + key + "'");
    return it->second;
}

double Config::get_double(const std::string& key) const {
    auto v = parse_double(get(key));
    if (!v) throw Error(ErrorCode::ConfigError, key + " must be a number, got '" + get(key) + "'");
    return *v;
}

long long Config::get_int(const std::string& key) const {
    auto v = parse_int(get(key));
    if (!v) throw Error(ErrorCode::ConfigError, key + " must be an integer, got '" + get(key) + "'");
    return *v;
}

std::size_t Config::get_size(const std::string& key) const {
    const long long v = get_int(key);
    if (v < 0) throw Error(ErrorCode::ConfigError, key + " must be non-negative");
    return static_cast<std::size_t>(v);
}

bool Config::get_bool(const std::string& key) const {
    const auto& v = get(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw Error(ErrorCode::ConfigError, key + " must be true or false, got '" + v + "'");
}

std::vector<std::string> Config::get_list(const std::string& key) const {
    std::vector<std::string> out;
    const auto& v = get(key);
    if (trim(v).empty()) return out;
    for (const auto& item : split(v, ',')) {
        const auto t = trim(item);
        if (!t.empty()) out.emplace_back(t);
    }
    return out;
}

std::string Config::to_text() const {
    std::ostringstream out;
    for (const auto& [k, v] : values_) out << k << " = " << v << '\n';
    return out.str();
}

std::uint64_t Config::hash(const std::vector<std::string>& prefixes, std::uint64_t basis) const {
    std::uint64_t h = basis;
    for (const auto& [k, v] : values_) {
        bool match = false;
        for (const auto& p : prefixes) match = match || k.rfind(p, 0) == 0;
        if (!match) continue;
        h = fnv1a(k, h);
        h = fnv1a("=", h);
        h = fnv1a(v, h);
        h = fnv1a("\n", h);
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

} // namespace clusterfx
