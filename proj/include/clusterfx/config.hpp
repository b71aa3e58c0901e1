#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace clusterfx {

/// Flat `key = value` run configuration. Every key has a default; unknown
/// keys are rejected so typos surface as ConfigError.
class Config {
public:
    /// All keys at their default values.
    Config();

    /// Applies `key = value` lines on top of the current values. Blank lines
    /// and lines starting with '#' are ignored.
    void merge(std::istream& in, const std::string& source = "config");
    void merge_file(const std::string& path);
    void set(const std::string& key, const std::string& value);
    /// "key=value" as given on the command line.
    void set_assignment(const std::string& assignment);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    const std::string& get(const std::string& key) const;
    double get_double(const std::string& key) const;
    long long get_int(const std::string& key) const;
    std::size_t get_size(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    /// Comma-separated list; an empty value gives an empty list.
    std::vector<std::string> get_list(const std::string& key) const;

    const std::map<std::string, std::string>& values() const { return values_; }

    /// Sorted `key = value` lines; parses back to the same config.
    std::string to_text() const;
    /// FNV-1a over the sorted entries whose key starts with one of `prefixes`.
    std::uint64_t hash(const std::vector<std::string>& prefixes, std::uint64_t basis = 0xcbf29ce484222325ULL) const;

    static const std::map<std::string, std::string>& defaults();

    friend bool operator==(const Config&, const Config&) = default;

private:
    std::map<std::string, std::string> values_;
};

std::string hex64(std::uint64_t v);

} // namespace clusterfx
