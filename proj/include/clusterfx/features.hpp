#pragma once

#include "clusterfx/indicators.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace clusterfx {

struct WindowSpec {
    std::size_t input_len_bars = 9; ///< 135 minutes of 15-minute bars
    std::size_t horizon_bars = 4;   ///< next 60 minutes
    std::vector<std::string> feature_names;

    std::int64_t input_minutes(int interval_minutes) const { return static_cast<std::int64_t>(input_len_bars) * interval_minutes; }
    std::int64_t horizon_minutes(int interval_minutes) const { return static_cast<std::int64_t>(horizon_bars) * interval_minutes; }
};

/// One decision point: the scaled window ending at `bar_index` and the scaled
/// maximum High over the following horizon.
struct Sample {
    std::vector<double> window; ///< row-major, input_len x n_features
    double target = 0.0;
    double target_price = 0.0; ///< unscaled future max-high
    double entry_close = 0.0;
    Timestamp timestamp;
    std::size_t bar_index = 0;

    friend bool operator==(const Sample&, const Sample&) = default;
};

struct SampleSet {
    std::size_t input_len = 0;
    std::vector<std::string> feature_names;
    std::vector<Sample> samples;

    std::size_t n_features() const { return feature_names.size(); }
    std::size_t window_size() const { return input_len * n_features(); }
    std::size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }

    /// Same samples restricted to `names` (columns re-ordered accordingly).
    SampleSet project(const std::vector<std::string>& names) const;
    SampleSet subset(const std::vector<std::size_t>& indices) const;
    /// Chronological split: the last `fraction` of samples become the second set.
    std::pair<SampleSet, SampleSet> split_tail(double fraction) const;

    /// Text export with a shape header (n_samples, input_len, n_features).
    void write_text(std::ostream& out) const;
    static SampleSet read_text(std::istream& in);

    friend bool operator==(const SampleSet&, const SampleSet&) = default;
};

struct FeatureScale {
    double min = 0.0;
    double max = 0.0;

    friend bool operator==(const FeatureScale&, const FeatureScale&) = default;
};

/// Per-feature min/max fitted on training rows. Constant features map to 0.5.
/// Out-of-range values are not clamped.
class Scaler {
public:
    void set(const std::string& name, FeatureScale s);
    bool has(const std::string& name) const { return scales_.count(name) != 0; }
    const FeatureScale& at(const std::string& name) const;
    double scale(const std::string& name, double v) const { return scale(at(name), v); }
    double inverse(const std::string& name, double s) const { return inverse(at(name), s); }

    static double scale(const FeatureScale& fs, double v);
    static double inverse(const FeatureScale& fs, double s);

    const std::map<std::string, FeatureScale>& scales() const { return scales_; }
    /// Features whose training min equals max (reported as warnings).
    const std::vector<std::string>& constant_features() const { return constant_; }

    std::string to_json() const;
    static Scaler from_json(const std::string& text);

    friend bool operator==(const Scaler&, const Scaler&) = default;

private:
    std::map<std::string, FeatureScale> scales_;
    std::vector<std::string> constant_;
};

/// Half-open row range [begin, end).
struct IndexRange {
    std::size_t begin = 0;
    std::size_t end = 0;
};

/// Fits `feature_names` plus "high" (the target scale) over the given rows.
/// Throws EmptyRange when the range is empty or a feature has no defined value.
Scaler fit_scaler(const FeatureFrame& frame, const std::vector<std::string>& feature_names, IndexRange train_range);

/// One sample per window-end index e with e >= input_len - 1, e + horizon < rows,
/// every window cell defined and, when a mask is given, mask[e] set. With a
/// range, the window and the horizon must both lie inside it.
SampleSet build_samples(const FeatureFrame& frame, const WindowSpec& spec, const Scaler& scaler,
                        const EventMask* event_mask = nullptr, std::optional<IndexRange> range = std::nullopt);

struct FeatureScore {
    std::string feature;
    double score = 0.0; ///< mean validation MSE over the final epochs; +inf if training diverged

    friend bool operator==(const FeatureScore&, const FeatureScore&) = default;
};

struct FeatureRanking {
    std::vector<FeatureScore> entries; ///< ascending score, lower is better

    void write_csv(std::ostream& out) const;
    static FeatureRanking read_csv(std::istream& in);
};

struct RankingConfig {
    std::size_t epochs = 35;
    std::size_t tail = 10;
    std::vector<std::string> base_features{"open", "close"};
    std::size_t input_len_bars = 9;
    std::size_t horizon_bars = 4;
    std::size_t max_samples = 2000; ///< evenly spaced subsample of the training windows
    double val_fraction = 0.2;
    std::size_t hidden_size = 8;
    double learning_rate = 0.05;
    std::size_t batch_size = 32;
    std::uint64_t seed = 42;
    unsigned jobs = 1;
};

/// Trains one forecaster per candidate on {base features, candidate} and
/// ranks candidates by the mean validation loss of the last `tail` epochs.
/// Every candidate shares the same initialisation and shuffling stream.
FeatureRanking rank_features(const FeatureFrame& frame, const std::vector<std::string>& candidates,
                             const RankingConfig& config, IndexRange train_range,
                             const EventMask* event_mask = nullptr);

/// Top-k names followed by the base features, de-duplicated in order.
std::vector<std::string> select_top(const FeatureRanking& ranking, std::size_t k = 4,
                                    const std::vector<std::string>& base = {"open", "close"});

} // namespace clusterfx
