#include "clusterfx/features.hpp"

#include "clusterfx/error.hpp"
#include "clusterfx/forecaster.hpp"
#include "clusterfx/format.hpp"
#include "clusterfx/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <set>

namespace clusterfx {

namespace {

std::vector<std::size_t> column_indices(const std::vector<std::string>& have, const std::vector<std::string>& want) {
    std::vector<std::size_t> idx;
    idx.reserve(want.size());
    for (const auto& w : want) {
        auto it = std::find(have.begin(), have.end(), w);
        if (it == have.end()) throw Error(ErrorCode::UnknownIndicator, "sample set has no feature '" + w + "'");
        idx.push_back(static_cast<std::size_t>(it - have.begin()));
    }
    return idx;
}

} // namespace

SampleSet SampleSet::project(const std::vector<std::string>& names) const {
    const auto idx = column_indices(feature_names, names);
    const std::size_t nf = n_features();
    SampleSet out;
    out.input_len = input_len;
    out.feature_names = names;
    out.samples.reserve(samples.size());
    for (const auto& s : samples) {
        Sample p = s;
        p.window.resize(input_len * names.size());
        for (std::size_t t = 0; t < input_len; ++t) {
            for (std::size_t j = 0; j < idx.size(); ++j) p.window[t * idx.size() + j] = s.window[t * nf + idx[j]];
        }
        out.samples.push_back(std::move(p));
    }
    return out;
}

SampleSet SampleSet::subset(const std::vector<std::size_t>& indices) const {
    SampleSet out;
    out.input_len = input_len;
    out.feature_names = feature_names;
    out.samples.reserve(indices.size());
    for (std::size_t i : indices) out.samples.push_back(samples.at(i));
    return out;
}

std::pair<SampleSet, SampleSet> SampleSet::split_tail(double fraction) const {
    if (!(fraction >= 0.0 && fraction < 1.0)) throw Error(ErrorCode::InvalidArgument, "split fraction must be in [0, 1)");
    const std::size_t n_tail = static_cast<std::size_t>(std::floor(static_cast<double>(size()) * fraction));
    std::pair<SampleSet, SampleSet> out;
    out.first.input_len = out.second.input_len = input_len;
    out.first.feature_names = out.second.feature_names = feature_names;
    out.first.samples.assign(samples.begin(), samples.end() - static_cast<std::ptrdiff_t>(n_tail));
    out.second.samples.assign(samples.end() - static_cast<std::ptrdiff_t>(n_tail), samples.end());
    return out;
}

void SampleSet::write_text(std::ostream& out) const {
    out << "samples " << size() << " input_len " << input_len << " features " << n_features() << '\n';
    out << "names";
    for (const auto& n : feature_names) out << ' ' << n;
    out << '\n';
    for (const auto& s : samples) {
        out << s.timestamp.seconds << ' ' << s.bar_index << ' ' << format_number(s.target) << ' '
            << format_number(s.target_price) << ' ' << format_number(s.entry_close);
        for (double v : s.window) out << ' ' << format_number(v);
        out << '\n';
    }
}

SampleSet SampleSet::read_text(std::istream& in) {
    auto bad = [](const std::string& why) { return Error(ErrorCode::MalformedRow, "sample file: " + why); };
    std::string line;
    if (!std::getline(in, line)) throw bad("missing header");
    auto head = split(trim(line), ' ');
    if (head.size() != 6 || head[0] != "samples" || head[2] != "input_len" || head[4] != "features")
        throw bad("bad header");
    const auto n = parse_int(head[1]), len = parse_int(head[3]), nf = parse_int(head[5]);
    if (!n || !len || !nf || *n < 0 || *len < 0 || *nf < 0) throw bad("bad shape");
    SampleSet set;
    set.input_len = static_cast<std::size_t>(*len);
    if (!std::getline(in, line)) throw bad("missing names");
    auto names = split(trim(line), ' ');
    if (names.empty() || names[0] != "names" || names.size() != static_cast<std::size_t>(*nf) + 1) throw bad("bad names");
    set.feature_names.assign(names.begin() + 1, names.end());
    const std::size_t w = set.window_size();
    for (long long i = 0; i < *n; ++i) {
        if (!std::getline(in, line)) throw bad("truncated");
        auto f = split(trim(line), ' ');
        if (f.size() != 5 + w) throw bad("row " + std::to_string(i) + " has wrong width");
        Sample s;
        auto ts = parse_int(f[0]);
        auto bi = parse_int(f[1]);
        auto tg = parse_double(f[2]), tp = parse_double(f[3]), ec = parse_double(f[4]);
        if (!ts || !bi || !tg || !tp || !ec) throw bad("row " + std::to_string(i));
        s.timestamp = Timestamp{*ts};
        s.bar_index = static_cast<std::size_t>(*bi);
        s.target = *tg;
        s.target_price = *tp;
        s.entry_close = *ec;
        s.window.reserve(w);
        for (std::size_t k = 0; k < w; ++k) {
            auto v = parse_double(f[5 + k]);
            if (!v) throw bad("row " + std::to_string(i));
            s.window.push_back(*v);
        }
        set.samples.push_back(std::move(s));
    }
    return set;
}

void Scaler::set(const std::string& name, FeatureScale s) {
    scales_[name] = s;
    auto it = std::find(constant_.begin(), constant_.end(), name);
    if (s.min == s.max) {
        if (it == constant_.end()) constant_.push_back(name);
    } else if (it != constant_.end()) {
        constant_.erase(it);
    }
}

const FeatureScale& Scaler::at(const std::string& name) const {
    auto it = scales_.find(name);
    if (it == scales_.end()) throw Error(ErrorCode::UnknownIndicator, "no scale fitted for '" + name + "'");
    return it->second;
}

double Scaler::scale(const FeatureScale& fs, double v) {
    if (fs.max == fs.min) return 0.5;
    return (v - fs.min) / (fs.max - fs.min);
}

double Scaler::inverse(const FeatureScale& fs, double s) {
    if (fs.max == fs.min) return fs.min;
    return fs.min + s * (fs.max - fs.min);
}

std::string Scaler::to_json() const {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [name, fs] : scales_) j[name] = {{"min", fs.min}, {"max", fs.max}};
    return j.dump(2);
}

Scaler Scaler::from_json(const std::string& text) {
    Scaler s;
    const auto j = nlohmann::json::parse(text);
    for (auto it = j.begin(); it != j.end(); ++it)
        s.set(it.key(), FeatureScale{it.value().at("min").get<double>(), it.value().at("max").get<double>()});
    return s;
}

Scaler fit_scaler(const FeatureFrame& frame, const std::vector<std::string>& feature_names, IndexRange range) {
    if (range.begin >= range.end || range.end > frame.rows())
        throw Error(ErrorCode::EmptyRange, "scaler fit range is empty or out of bounds");
    std::vector<std::string> names = feature_names;
    if (std::find(names.begin(), names.end(), "high") == names.end()) names.push_back("high");
    Scaler scaler;
    for (const auto& name : names) {
        const auto& col = frame.column(name);
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (std::size_t i = range.begin; i < range.end; ++i) {
            if (!col.defined(i)) continue;
            lo = std::min(lo, col[i]);
            hi = std::max(hi, col[i]);
        }
        if (lo > hi) throw Error(ErrorCode::EmptyRange, "feature '" + name + "' has no defined value in the fit range");
        scaler.set(name, FeatureScale{lo, hi});
    }
    return scaler;
}

SampleSet build_samples(const FeatureFrame& frame, const WindowSpec& spec, const Scaler& scaler,
                        const EventMask* mask, std::optional<IndexRange> range) {
    if (spec.input_len_bars == 0 || spec.horizon_bars == 0)
        throw Error(ErrorCode::InvalidArgument, "window and horizon must be at least one bar");
    if (spec.feature_names.empty()) throw Error(ErrorCode::InvalidArgument, "no features selected");
    if (mask && mask->size() != frame.rows()) throw Error(ErrorCode::ShapeMismatch, "event mask length differs from frame");

    const std::size_t L = spec.input_len_bars;
    const std::size_t H = spec.horizon_bars;
    std::vector<const IndicatorColumn*> cols;
    std::vector<FeatureScale> scales;
    for (const auto& name : spec.feature_names) {
        cols.push_back(&frame.column(name));
        scales.push_back(scaler.at(name));
    }
    const auto& high = frame.column("high");
    const auto& close = frame.column("close");
    const FeatureScale high_scale = scaler.at("high");

    IndexRange r = range.value_or(IndexRange{0, frame.rows()});
    r.end = std::min(r.end, frame.rows());

    SampleSet set;
    set.input_len = L;
    set.feature_names = spec.feature_names;
    const std::size_t nf = cols.size();
    if (r.end < r.begin + L + H) return set;
    for (std::size_t e = r.begin + L - 1; e + H < r.end; ++e) {
        if (mask && !mask->flags[e]) continue;
        Sample s;
        s.window.resize(L * nf);
        bool ok = true;
        for (std::size_t t = 0; t < L && ok; ++t) {
            const std::size_t row = e + 1 - L + t;
            for (std::size_t j = 0; j < nf; ++j) {
                const double v = (*cols[j])[row];
                if (std::isnan(v)) {
                    ok = false;
                    break;
                }
                s.window[t * nf + j] = Scaler::scale(scales[j], v);
            }
        }
        if (!ok) continue;
        double future_high = -std::numeric_limits<double>::infinity();
        for (std::size_t k = e + 1; k <= e + H; ++k) future_high = std::max(future_high, high[k]);
        s.target_price = future_high;
        s.target = Scaler::scale(high_scale, future_high);
        s.entry_close = close[e];
        s.timestamp = frame.timestamps()[e];
        s.bar_index = e;
        set.samples.push_back(std::move(s));
    }
    return set;
}

void FeatureRanking::write_csv(std::ostream& out) const {
    out << "rank,feature,score\n";
    for (std::size_t i = 0; i < entries.size(); ++i)
        out << i + 1 << ',' << entries[i].feature << ',' << format_number(entries[i].score) << '\n';
}

FeatureRanking FeatureRanking::read_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || trim(line) != "rank,feature,score")
        throw Error(ErrorCode::MalformedRow, "ranking file: bad header");
    FeatureRanking r;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto f = split(trim(line), ',');
        std::optional<double> score = f.size() == 3 ? parse_double(f[2]) : std::nullopt;
        if (!score) throw Error(ErrorCode::MalformedRow, "ranking file: line " + std::to_string(lineno));
        r.entries.push_back({f[1], *score});
    }
    return r;
}

FeatureRanking rank_features(const FeatureFrame& frame, const std::vector<std::string>& candidates_in,
                             const RankingConfig& config, IndexRange train_range, const EventMask* event_mask) {
    if (config.tail == 0 || config.tail > config.epochs)
        throw Error(ErrorCode::InvalidArgument, "ranking tail must be in [1, epochs]");
    std::vector<std::string> candidates;
    for (const auto& c : candidates_in) {
        if (std::find(config.base_features.begin(), config.base_features.end(), c) != config.base_features.end()) continue;
        if (std::find(candidates.begin(), candidates.end(), c) != candidates.end()) continue;
        if (!frame.has(c)) throw Error(ErrorCode::UnknownIndicator, "unknown candidate feature '" + c + "'");
        candidates.push_back(c);
    }
    if (candidates.empty()) throw Error(ErrorCode::NotEnoughCandidates, "no candidate features to rank");

    std::vector<std::string> all = config.base_features;
    all.insert(all.end(), candidates.begin(), candidates.end());
    const Scaler scaler = fit_scaler(frame, all, train_range);
    WindowSpec spec{config.input_len_bars, config.horizon_bars, all};
    SampleSet pool = build_samples(frame, spec, scaler, event_mask, train_range);

    if (config.max_samples > 0 && pool.size() > config.max_samples) {
        std::vector<std::size_t> keep(config.max_samples);
        for (std::size_t j = 0; j < keep.size(); ++j) keep[j] = j * pool.size() / config.max_samples;
        pool = pool.subset(keep);
    }
    auto [train_pool, val_pool] = pool.split_tail(config.val_fraction);
    if (train_pool.empty() || val_pool.empty())
        throw Error(ErrorCode::TooFewSamples, "ranking needs training and validation windows; got " +
                                                  std::to_string(pool.size()) + " samples");

    ModelConfig mc;
    mc.hidden_size = config.hidden_size;
    mc.n_features = config.base_features.size() + 1;
    mc.input_len_bars = config.input_len_bars;
    mc.learning_rate = config.learning_rate;
    mc.epochs = config.epochs;
    mc.batch_size = config.batch_size;
    mc.seed = config.seed;
    const AttentionForecaster initial = init_model(mc);

    std::vector<FeatureScore> scores(candidates.size());
    parallel_for(candidates.size(), config.jobs, [&](std::size_t i) {
        std::vector<std::string> names = config.base_features;
        names.push_back(candidates[i]);
        const SampleSet tr = train_pool.project(names);
        const SampleSet va = val_pool.project(names);
        double score = std::numeric_limits<double>::infinity();
        try {
            const auto result = train(initial, tr, va, mc);
            double sum = 0.0;
            for (std::size_t e = result.history.size() - config.tail; e < result.history.size(); ++e)
                sum += result.history[e].val_mse;
            score = sum / static_cast<double>(config.tail);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::TrainingDiverged) throw;
        }
        scores[i] = {candidates[i], score};
    });
    std::stable_sort(scores.begin(), scores.end(),
                     [](const FeatureScore& a, const FeatureScore& b) { return a.score < b.score; });
    return FeatureRanking{std::move(scores)};
}

std::vector<std::string> select_top(const FeatureRanking& ranking, std::size_t k, const std::vector<std::string>& base) {
    std::vector<std::string> out;
    for (const auto& e : ranking.entries) {
        if (out.size() == k) break;
        if (std::find(base.begin(), base.end(), e.feature) != base.end()) continue;
        if (!std::isfinite(e.score)) continue;
        out.push_back(e.feature);
    }
    if (out.size() < k) {
        throw Error(ErrorCode::NotEnoughCandidates, "ranking has " + std::to_string(out.size()) +
                                                        " usable candidates, need " + std::to_string(k));
    }
    for (const auto& b : base) {
        if (std::find(out.begin(), out.end(), b) == out.end()) out.push_back(b);
    }
    return out;
}

} // namespace clusterfx
