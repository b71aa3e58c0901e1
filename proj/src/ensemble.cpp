#include "clusterfx/ensemble.hpp"

#include "clusterfx/error.hpp"
#include "clusterfx/format.hpp"
#include "clusterfx/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

namespace clusterfx {

namespace {

std::vector<std::size_t> indices_of(const std::vector<std::string>& have, const std::vector<std::string>& want) {
    std::vector<std::size_t> idx;
    for (const auto& w : want) {
        auto it = std::find(have.begin(), have.end(), w);
        if (it == have.end()) throw Error(ErrorCode::UnknownIndicator, "ensemble input lacks feature '" + w + "'");
        idx.push_back(static_cast<std::size_t>(it - have.begin()));
    }
    return idx;
}

void gather(std::span<const double> window, std::size_t input_len, std::size_t width, const std::vector<std::size_t>& idx,
            std::vector<double>& out) {
    out.resize(input_len * idx.size());
    for (std::size_t t = 0; t < input_len; ++t) {
        for (std::size_t j = 0; j < idx.size(); ++j) out[t * idx.size() + j] = window[t * width + idx[j]];
    }
}

ErrorMetrics price_metrics(const AttentionForecaster& model, const SampleSet& set, const FeatureScale& scale,
                           std::vector<double>& preds, std::vector<double>& actual) {
    std::vector<double> p, a;
    for (double s : predict_all(model, set)) p.push_back(Scaler::inverse(scale, s));
    for (const auto& s : set.samples) a.push_back(s.target_price);
    preds.insert(preds.end(), p.begin(), p.end());
    actual.insert(actual.end(), a.begin(), a.end());
    return error_metrics(p, a);
}

} // namespace

std::size_t ClusterEnsemble::trained_count() const {
    return static_cast<std::size_t>(std::count_if(models.begin(), models.end(), [](const auto& m) { return m.has_value(); }));
}

ClusterEnsemble train_ensemble(const SampleSet& samples, const ClusterModel& clustering, const Scaler& scaler,
                               const EnsembleConfig& config) {
    ClusterEnsemble ens;
    ens.clustering = clustering;
    ens.input_features = samples.feature_names;
    ens.cluster_features = config.cluster_features.empty() ? samples.feature_names : config.cluster_features;
    ens.model_features = config.model_features.empty() ? samples.feature_names : config.model_features;
    ens.input_len = samples.input_len;
    ens.target_scale = scaler.at("high");

    ModelConfig mc = config.model;
    mc.n_features = ens.model_features.size();
    mc.input_len_bars = samples.input_len;
    mc.validate();

    const SampleSet routed = samples.project(ens.cluster_features);
    const SampleSet modelled = samples.project(ens.model_features);
    const std::size_t n_val = samples.size() - samples.split_tail(config.val_fraction).first.size();
    const std::size_t n_train = samples.size() - n_val;
    if (n_train == 0) throw Error(ErrorCode::InsufficientData, "no training samples for the ensemble");

    const std::size_t k = cluster_count(clustering);
    std::vector<std::vector<std::size_t>> train_idx(k), val_idx(k);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const std::size_t c = assign_cluster(clustering, routed.samples[i].window);
        (i < n_train ? train_idx : val_idx)[c].push_back(i);
    }

    ens.models.assign(k, std::nullopt);
    ens.histories.assign(k, {});
    ens.validation.assign(k, std::nullopt);
    ens.train_counts.assign(k, 0);
    ens.val_counts.assign(k, 0);
    for (std::size_t c = 0; c < k; ++c) {
        ens.train_counts[c] = train_idx[c].size();
        ens.val_counts[c] = val_idx[c].size();
    }

    const AttentionForecaster initial = init_model(mc);
    std::vector<std::optional<TrainResult>> results(k);
    parallel_for(k, config.jobs, [&](std::size_t c) {
        if (train_idx[c].empty()) return;
        const SampleSet tr = modelled.subset(train_idx[c]);
        const SampleSet va = val_idx[c].empty() ? tr : modelled.subset(val_idx[c]);
        results[c] = train(initial, tr, va, mc);
    });

    std::vector<double> pooled_pred, pooled_actual;
    for (std::size_t c = 0; c < k; ++c) {
        if (!results[c]) {
            ens.warnings.push_back("EmptyCluster: cluster " + std::to_string(c) + " has no training samples; skipped");
            if (!val_idx[c].empty()) {
                ens.warnings.push_back("cluster " + std::to_string(c) + ": " + std::to_string(val_idx[c].size()) +
                                       " validation samples have no model");
            }
            continue;
        }
        ens.models[c] = std::move(results[c]->model);
        ens.histories[c] = std::move(results[c]->history);
        if (val_idx[c].empty()) {
            ens.warnings.push_back("cluster " + std::to_string(c) + " has no validation samples; validated on training data");
            std::vector<double> p, a;
            ens.validation[c] = price_metrics(*ens.models[c], modelled.subset(train_idx[c]), ens.target_scale, p, a);
        } else {
            ens.validation[c] =
                price_metrics(*ens.models[c], modelled.subset(val_idx[c]), ens.target_scale, pooled_pred, pooled_actual);
        }
    }
    if (!pooled_pred.empty()) ens.pooled_validation = error_metrics(pooled_pred, pooled_actual);
    return ens;
}

Forecast predict(const ClusterEnsemble& ens, std::span<const double> window, double entry_close, Timestamp timestamp) {
    const std::size_t width = ens.input_features.size();
    if (window.size() != ens.input_len * width) {
        throw Error(ErrorCode::DimensionMismatch, "window has " + std::to_string(window.size()) + " values, expected " +
                                                      std::to_string(ens.input_len * width));
    }
    std::vector<double> buf;
    gather(window, ens.input_len, width, indices_of(ens.input_features, ens.cluster_features), buf);
    Forecast f;
    f.timestamp = timestamp;
    f.entry_close = entry_close;
    f.cluster = assign_cluster(ens.clustering, buf);
    if (f.cluster >= ens.models.size() || !ens.models[f.cluster])
        throw Error(ErrorCode::EmptyCluster, "cluster " + std::to_string(f.cluster) + " has no trained model");
    gather(window, ens.input_len, width, indices_of(ens.input_features, ens.model_features), buf);
    const ForwardTrace trace = forward(*ens.models[f.cluster], buf);
    f.scaled_prediction = trace.prediction;
    f.predicted_high = Scaler::inverse(ens.target_scale, trace.prediction);
    f.attention = trace.attention;
    return f;
}

Forecast predict(const ClusterEnsemble& ens, const Sample& sample) {
    return predict(ens, sample.window, sample.entry_close, sample.timestamp);
}

std::vector<Forecast> predict_all(const ClusterEnsemble& ens, const SampleSet& samples, std::size_t* skipped) {
    std::vector<Forecast> out;
    std::size_t missing = 0;
    for (const auto& s : samples.samples) {
        try {
            out.push_back(predict(ens, s));
        } catch (const Error& e) {
            if (e.code() != ErrorCode::EmptyCluster) throw;
            ++missing;
        }
    }
    if (skipped) *skipped = missing;
    return out;
}

void write_forecasts_csv(std::ostream& out, const std::vector<Forecast>& forecasts) {
    out << "timestamp,cluster,entry_close,predicted_high,scaled_prediction,attention\n";
    for (const auto& f : forecasts) {
        out << format_timestamp(f.timestamp) << ',' << f.cluster << ',' << format_number(f.entry_close) << ','
            << format_number(f.predicted_high) << ',' << format_number(f.scaled_prediction) << ',';
        for (std::size_t i = 0; i < f.attention.size(); ++i) out << (i ? ";" : "") << format_number(f.attention[i]);
        out << '\n';
    }
}

std::vector<Forecast> read_forecasts_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || trim(line) != "timestamp,cluster,entry_close,predicted_high,scaled_prediction,attention")
        throw Error(ErrorCode::MalformedRow, "forecast file: bad header");
    std::vector<Forecast> out;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto bad = [&] { return Error(ErrorCode::MalformedRow, "forecast file: line " + std::to_string(lineno)); };
        auto f = split(trim(line), ',');
        if (f.size() != 6) throw bad();
        Forecast fc;
        auto ts = parse_timestamp(f[0]);
        if (!ts) throw bad();
        fc.timestamp = *ts;
        auto c = parse_int(f[1]);
        auto ec = parse_double(f[2]), ph = parse_double(f[3]), sp = parse_double(f[4]);
        if (!c || !ec || !ph || !sp) throw bad();
        fc.cluster = static_cast<std::size_t>(*c);
        fc.entry_close = *ec;
        fc.predicted_high = *ph;
        fc.scaled_prediction = *sp;
        if (!f[5].empty()) {
            for (const auto& a : split(f[5], ';')) {
                auto v = parse_double(a);
                if (!v) throw bad();
                fc.attention.push_back(*v);
            }
        }
        out.push_back(std::move(fc));
    }
    return out;
}

std::string ClusterEnsemble::to_json() const {
    nlohmann::ordered_json j;
    j["clustering"] = nlohmann::ordered_json::parse(cluster_model_to_json(clustering));
    j["input_features"] = input_features;
    j["cluster_features"] = cluster_features;
    j["model_features"] = model_features;
    j["input_len"] = input_len;
    j["target_scale"] = {{"min", target_scale.min}, {"max", target_scale.max}};
    auto clusters = nlohmann::ordered_json::array();
    for (std::size_t c = 0; c < models.size(); ++c) {
        nlohmann::ordered_json e;
        e["cluster"] = c;
        e["train_count"] = train_counts[c];
        e["val_count"] = val_counts[c];
        if (validation[c]) {
            e["validation"] = {{"mse", validation[c]->mse}, {"rmse", validation[c]->rmse}, {"mae", validation[c]->mae}};
        } else {
            e["validation"] = nullptr;
        }
        e["model"] = models[c] ? nlohmann::ordered_json::parse(models[c]->to_json()) : nlohmann::ordered_json(nullptr);
        auto hist = nlohmann::ordered_json::array();
        for (const auto& h : histories[c]) hist.push_back({h.epoch, h.train_mse, h.val_mse});
        e["history"] = hist;
        clusters.push_back(std::move(e));
    }
    j["clusters"] = clusters;
    j["pooled_validation"] = {{"mse", pooled_validation.mse}, {"rmse", pooled_validation.rmse}, {"mae", pooled_validation.mae}};
    j["warnings"] = warnings;
    return j.dump();
}

ClusterEnsemble ClusterEnsemble::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    ClusterEnsemble ens;
    ens.clustering = cluster_model_from_json(j.at("clustering").dump());
    ens.input_features = j.at("input_features").get<std::vector<std::string>>();
    ens.cluster_features = j.at("cluster_features").get<std::vector<std::string>>();
    ens.model_features = j.at("model_features").get<std::vector<std::string>>();
    ens.input_len = j.at("input_len").get<std::size_t>();
    ens.target_scale = {j.at("target_scale").at("min").get<double>(), j.at("target_scale").at("max").get<double>()};
    auto metrics = [](const nlohmann::json& m) {
        return ErrorMetrics{m.at("mse").get<double>(), m.at("rmse").get<double>(), m.at("mae").get<double>()};
    };
    for (const auto& e : j.at("clusters")) {
        ens.train_counts.push_back(e.at("train_count").get<std::size_t>());
        ens.val_counts.push_back(e.at("val_count").get<std::size_t>());
        ens.validation.push_back(e.at("validation").is_null() ? std::nullopt : std::optional(metrics(e.at("validation"))));
        ens.models.emplace_back();
        if (!e.at("model").is_null()) ens.models.back().emplace(AttentionForecaster::from_json(e.at("model").dump()));
        std::vector<EpochLoss> hist;
        for (const auto& h : e.at("history"))
            hist.push_back({h.at(0).get<std::size_t>(), h.at(1).get<double>(), h.at(2).get<double>()});
        ens.histories.push_back(std::move(hist));
    }
    ens.pooled_validation = metrics(j.at("pooled_validation"));
    ens.warnings = j.at("warnings").get<std::vector<std::string>>();
    return ens;
}

} // namespace clusterfx
