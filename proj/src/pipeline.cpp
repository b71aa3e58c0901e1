#include "clusterfx/pipeline.hpp"

#include "clusterfx/backtest.hpp"
#include "clusterfx/clustering.hpp"
#include "clusterfx/ensemble.hpp"
#include "clusterfx/error.hpp"
#include "clusterfx/features.hpp"
#include "clusterfx/format.hpp"
#include "clusterfx/indicators.hpp"
#include "clusterfx/market_data.hpp"
#include "clusterfx/parallel.hpp"
#include "clusterfx/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace clusterfx {

namespace {

constexpr const char* kBars = "bars.csv";
constexpr const char* kValidation = "validation.json";
constexpr const char* kSplit = "split.json";
constexpr const char* kFeatures = "features.csv";
constexpr const char* kFeatureManifest = "features.json";
constexpr const char* kEvents = "events.csv";
constexpr const char* kRanking = "ranking.csv";
constexpr const char* kSelected = "selected.txt";
constexpr const char* kScaler = "scaler.json";
constexpr const char* kClusterModel = "cluster_model.json";
constexpr const char* kClusterSizes = "cluster_sizes.csv";
constexpr const char* kEnsemble = "ensemble.json";
constexpr const char* kClusterMetrics = "cluster_metrics.csv";
constexpr const char* kHistory = "training_history.csv";
constexpr const char* kForecasts = "forecasts.csv";
constexpr const char* kTrades = "trades.csv";
constexpr const char* kBacktest = "backtest.json";
constexpr const char* kReport = "report.txt";
constexpr const char* kReportJson = "report.json";

std::vector<std::string> stage_prefixes(Stage s) {
    switch (s) {
        case Stage::Ingest: return {"data.", "split."};
        case Stage::Features: return {"indicators.", "events."};
        case Stage::Select: return {"window.", "select.", "features.", "seed"};
        case Stage::Cluster: return {"cluster.", "seed"};
        case Stage::Train: return {"model.", "seed"};
        case Stage::Backtest: return {"strategy."};
        case Stage::Report: return {};
    }
    return {};
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::MissingArtifact, "missing artifact " + path.filename().string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    out << text;
    if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

template <typename Fn>
void write_with(const fs::path& path, Fn&& fn) {
    std::ostringstream s;
    fn(s);
    write_text(path, s.str());
}

class StageContext {
public:
    StageContext(Stage s, const Config& cfg, const PipelineOptions& opt) : stage_(s), cfg_(cfg), opt_(opt) {}

    const Config& cfg() const { return cfg_; }
    fs::path path(const char* name) const { return opt_.out_dir / name; }

    void log(const std::string& msg) const {
        if (opt_.log) *opt_.log << '[' << stage_name(stage_) << "] " << msg << '\n';
    }

    /// Checks the upstream manifest, its config hash and output file hashes.
    void require_upstream() {
        if (stage_ == Stage::Ingest) return;
        const Stage up = static_cast<Stage>(static_cast<int>(stage_) - 1);
        const fs::path mpath = opt_.out_dir / (std::string(stage_name(up)) + ".manifest.json");
        if (!fs::exists(mpath)) {
            throw Error(ErrorCode::MissingArtifact, std::string("stage '") + stage_name(up) + "' has not been run in " +
                                                        opt_.out_dir.string());
        }
        const auto m = nlohmann::json::parse(read_text(mpath));
        const std::string expected = hex64(stage_hash(cfg_, up));
        if (m.at("config_hash").get<std::string>() != expected) {
            throw Error(ErrorCode::ConfigHashMismatch, std::string("artifacts of stage '") + stage_name(up) +
                                                           "' were produced with a different configuration; re-run it");
        }
        for (auto it = m.at("outputs").begin(); it != m.at("outputs").end(); ++it) {
            const fs::path p = opt_.out_dir / it.key();
            if (!fs::exists(p)) throw Error(ErrorCode::MissingArtifact, "missing artifact " + it.key());
            if (hash_file(p) != it.value().get<std::string>())
                throw Error(ErrorCode::ConfigHashMismatch, "artifact " + it.key() + " was modified after it was written");
            inputs_[it.key()] = it.value().get<std::string>();
        }
    }

    void output(const char* name) { outputs_.push_back(name); }
    void input(const std::string& name, const std::string& hash) { inputs_[name] = hash; }

    void finish() {
        write_text(opt_.out_dir / "config.txt", cfg_.to_text());
        json m;
        m["stage"] = stage_name(stage_);
        m["config_hash"] = hex64(stage_hash(cfg_, stage_));
        m["seed"] = cfg_.get("seed");
        m["inputs"] = json::object();
        for (const auto& [k, v] : inputs_) m["inputs"][k] = v;
        m["outputs"] = json::object();
        for (const auto& name : outputs_) m["outputs"][name] = hash_file(opt_.out_dir / name);
        write_text(opt_.out_dir / (std::string(stage_name(stage_)) + ".manifest.json"), m.dump(2) + "\n");
    }

private:
    Stage stage_;
    const Config& cfg_;
    const PipelineOptions& opt_;
    std::map<std::string, std::string> inputs_;
    std::vector<std::string> outputs_;
};

int interval(const Config& cfg) { return static_cast<int>(cfg.get_int("data.interval_minutes")); }

BarSeries load_bars(const StageContext& ctx) {
    std::ifstream in(ctx.path(kBars));
    if (!in) throw Error(ErrorCode::MissingArtifact, "missing artifact bars.csv");
    return parse_csv(in, interval(ctx.cfg()), ctx.cfg().get("data.symbol"));
}

FeatureFrame load_frame(const StageContext& ctx) {
    std::ifstream in(ctx.path(kFeatures));
    if (!in) throw Error(ErrorCode::MissingArtifact, "missing artifact features.csv");
    return FeatureFrame::read_csv(in, kBars);
}

EventMask load_events(const StageContext& ctx) {
    std::ifstream in(ctx.path(kEvents));
    if (!in) throw Error(ErrorCode::MissingArtifact, "missing artifact events.csv");
    std::string line;
    std::getline(in, line);
    EventMask mask;
    mask.kind = ctx.cfg().get("events.kind");
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        auto f = split(trim(line), ',');
        mask.flags.push_back(f.size() == 2 && f[1] == "1");
    }
    return mask;
}

struct SplitIndices {
    std::size_t train_end = 0;  ///< exclusive
    std::size_t test_begin = 0;
    std::size_t rows = 0;
};

SplitIndices load_split(const StageContext& ctx) {
    const auto j = nlohmann::json::parse(read_text(ctx.path(kSplit)));
    return {j.at("train_end_index").get<std::size_t>(), j.at("test_begin_index").get<std::size_t>(),
            j.at("rows").get<std::size_t>()};
}

std::vector<std::string> load_selected(const StageContext& ctx) {
    std::vector<std::string> out;
    std::istringstream in(read_text(ctx.path(kSelected)));
    std::string line;
    while (std::getline(in, line)) {
        if (!trim(line).empty()) out.emplace_back(trim(line));
    }
    return out;
}

std::vector<std::string> cluster_features(const Config& cfg, const std::vector<std::string>& selected) {
    const auto list = cfg.get_list("cluster.features");
    if (list.size() == 1 && list[0] == "selected") return selected;
    if (list.empty()) throw Error(ErrorCode::ConfigError, "cluster.features is empty");
    return list;
}

std::vector<std::string> union_features(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::vector<std::string> out = a;
    for (const auto& x : b) {
        if (std::find(out.begin(), out.end(), x) == out.end()) out.push_back(x);
    }
    return out;
}

ModelConfig model_config(const Config& cfg) {
    ModelConfig mc;
    mc.hidden_size = cfg.get_size("model.hidden_size");
    mc.input_len_bars = cfg.get_size("window.input_len_bars");
    mc.learning_rate = cfg.get_double("model.learning_rate");
    mc.epochs = cfg.get_size("model.epochs");
    mc.batch_size = cfg.get_size("model.batch_size");
    mc.seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
    mc.scaled_attention = cfg.get_bool("model.scaled_attention");
    mc.clip_norm = cfg.get_double("model.clip_norm");
    return mc;
}

WindowSpec window_spec(const Config& cfg, std::vector<std::string> names) {
    return {cfg.get_size("window.input_len_bars"), cfg.get_size("window.horizon_bars"), std::move(names)};
}

void stage_ingest(StageContext& ctx, const PipelineOptions& opt) {
    const Config& cfg = ctx.cfg();
    const std::string input = cfg.get("data.input");
    if (input.empty()) throw Error(ErrorCode::ConfigError, "data.input is not set");
    const BarSeries bars = load_csv(input, interval(cfg), cfg.get("data.symbol"));
    ctx.input(fs::path(input).filename().string(), hash_file(input));
    const ValidationReport report = validate_series(bars);
    ctx.log(std::to_string(bars.size()) + " bars, " + std::to_string(report.gaps.size()) + " gaps");
    if (report.has_errors()) throw Error(ErrorCode::InvariantViolation, report.to_text());

    SplitSpec spec;
    const std::string mode = cfg.get("split.mode");
    const double gap = cfg.get_double("split.gap_hours");
    if (mode == "ratio") {
        spec = SplitSpec::by_ratio(cfg.get_double("split.train_fraction"), gap);
    } else if (mode == "date") {
        auto te = parse_timestamp(cfg.get("split.train_end"));
        auto ts = parse_timestamp(cfg.get("split.test_start"));
        if (!te || !ts) throw Error(ErrorCode::ConfigError, "date split needs split.train_end and split.test_start");
        spec = SplitSpec::by_date(*te, *ts, gap);
    } else {
        throw Error(ErrorCode::ConfigError, "split.mode must be ratio or date");
    }
    const SplitResult split = split_with_gap(bars, spec);
    const std::size_t test_begin = *bars.find(split.test.bars.front().timestamp);
    ctx.log("train " + std::to_string(split.train.size()) + " bars, test " + std::to_string(split.test.size()) + " bars");
    if (opt.validate_only) return;

    write_with(ctx.path(kBars), [&](std::ostream& o) { write_csv(o, bars); });
    write_text(ctx.path(kValidation), report.to_json());
    json sj;
    sj["rows"] = bars.size();
    sj["train_end_index"] = split.train.size();
    sj["test_begin_index"] = test_begin;
    sj["train_first"] = format_timestamp(split.train.bars.front().timestamp);
    sj["train_last"] = format_timestamp(split.train.bars.back().timestamp);
    sj["test_first"] = format_timestamp(split.test.bars.front().timestamp);
    sj["test_last"] = format_timestamp(split.test.bars.back().timestamp);
    sj["gap_hours"] = static_cast<double>(split.test.bars.front().timestamp - split.train.bars.back().timestamp) /
                      static_cast<double>(kSecondsPerHour);
    write_text(ctx.path(kSplit), sj.dump(2) + "\n");
    for (const char* f : {kBars, kValidation, kSplit}) ctx.output(f);
}

void stage_features(StageContext& ctx) {
    const Config& cfg = ctx.cfg();
    const BarSeries bars = load_bars(ctx);
    IndicatorSpec spec;
    const std::string spec_path = cfg.get("indicators.spec");
    if (spec_path == "default") {
        spec = default_indicator_spec();
    } else {
        std::ifstream in(spec_path);
        if (!in) throw Error(ErrorCode::Io, "cannot open indicator spec " + spec_path);
        spec = parse_indicator_spec(in);
    }
    const FeatureFrame frame = build_feature_frame(bars, spec);

    EventMask mask;
    const std::string kind = cfg.get("events.kind");
    if (kind == "all") {
        mask = {"all", std::vector<bool>(bars.size(), true)};
    } else if (kind == "oversold" || kind == "overbought") {
        const auto col = rsi(bars.closes(), cfg.get_size("events.rsi_period"));
        auto ev = detect_oversold(col, cfg.get_double("events.low"), cfg.get_double("events.high"));
        mask = kind == "oversold" ? ev.oversold : ev.overbought;
    } else if (kind == "cbs") {
        mask = detect_concealing_baby_swallow(bars, cfg.get_double("events.cbs_tol"));
    } else {
        throw Error(ErrorCode::ConfigError, "events.kind must be all, oversold, overbought or cbs");
    }
    ctx.log(std::to_string(frame.cols()) + " columns, " + std::to_string(mask.count()) + " " + kind + " events");

    write_with(ctx.path(kFeatures), [&](std::ostream& o) { frame.write_csv(o); });
    write_text(ctx.path(kFeatureManifest), frame.manifest_json());
    write_with(ctx.path(kEvents), [&](std::ostream& o) {
        o << "timestamp,event\n";
        for (std::size_t i = 0; i < bars.size(); ++i)
            o << format_timestamp(bars[i].timestamp) << ',' << (mask.flags[i] ? 1 : 0) << '\n';
    });
    for (const char* f : {kFeatures, kFeatureManifest, kEvents}) ctx.output(f);
}

void stage_select(StageContext& ctx, const PipelineOptions& opt) {
    const Config& cfg = ctx.cfg();
    std::vector<std::string> selected = cfg.get_list("features.model");
    if (selected.empty()) {
        const FeatureFrame frame = load_frame(ctx);
        const EventMask mask = load_events(ctx);
        const SplitIndices split = load_split(ctx);
        RankingConfig rc;
        rc.epochs = cfg.get_size("select.epochs");
        rc.tail = cfg.get_size("select.tail");
        rc.base_features = cfg.get_list("select.base");
        rc.input_len_bars = cfg.get_size("window.input_len_bars");
        rc.horizon_bars = cfg.get_size("window.horizon_bars");
        rc.max_samples = cfg.get_size("select.max_samples");
        rc.val_fraction = cfg.get_double("select.val_fraction");
        rc.hidden_size = cfg.get_size("select.hidden_size");
        rc.learning_rate = cfg.get_double("select.learning_rate");
        rc.batch_size = cfg.get_size("select.batch_size");
        rc.seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
        rc.jobs = opt.jobs;
        std::vector<std::string> candidates = cfg.get_list("select.candidates");
        if (candidates.size() == 1 && candidates[0] == "all") candidates = frame.names();
        ctx.log("ranking " + std::to_string(candidates.size()) + " candidate features");
        const FeatureRanking ranking = rank_features(frame, candidates, rc, IndexRange{0, split.train_end}, &mask);
        selected = select_top(ranking, cfg.get_size("select.top_k"), rc.base_features);
        write_with(ctx.path(kRanking), [&](std::ostream& o) { ranking.write_csv(o); });
        ctx.output(kRanking);
    }
    std::string text;
    for (const auto& s : selected) text += s + "\n";
    write_text(ctx.path(kSelected), text);
    ctx.output(kSelected);
    ctx.log("selected: " + text.substr(0, text.size() - 1));
}

struct TrainingData {
    FeatureFrame frame;
    EventMask mask;
    SplitIndices split;
    std::vector<std::string> model_features;
    std::vector<std::string> cluster_features;
    std::vector<std::string> all_features;
};

TrainingData load_training_data(const StageContext& ctx) {
    TrainingData d{load_frame(ctx), load_events(ctx), load_split(ctx), load_selected(ctx), {}, {}};
    d.cluster_features = cluster_features(ctx.cfg(), d.model_features);
    d.all_features = union_features(d.model_features, d.cluster_features);
    return d;
}

void stage_cluster(StageContext& ctx) {
    const Config& cfg = ctx.cfg();
    const TrainingData d = load_training_data(ctx);
    const Scaler scaler = fit_scaler(d.frame, d.all_features, IndexRange{0, d.split.train_end});
    for (const auto& c : scaler.constant_features()) ctx.log("warning: feature '" + c + "' is constant on the training rows");
    const SampleSet samples = build_samples(d.frame, window_spec(cfg, d.all_features), scaler, &d.mask,
                                            IndexRange{0, d.split.train_end});
    const PointSet points = PointSet::from_samples(samples.project(d.cluster_features));
    const std::size_t k = cfg.get_size("cluster.k");
    const std::string method = cfg.get("cluster.method");
    ClusterModel model;
    if (method == "kmeans") {
        KMeansOptions o;
        o.k = k;
        o.seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
        o.max_iter = cfg.get_size("cluster.max_iter");
        model = kmeans_fit_best(points, o, cfg.get_size("cluster.restarts"));
    } else if (method == "birch") {
        if (points.size() == 0) throw Error(ErrorCode::TooFewSamples, "no training samples to cluster");
        model = birch_fit(points, cfg.get_double("cluster.threshold"), k);
        if (std::get<BirchModel>(model).cluster_count() < k)
            ctx.log("birch produced " + std::to_string(cluster_count(model)) + " clusters for k = " + std::to_string(k));
    } else {
        throw Error(ErrorCode::ConfigError, "cluster.method must be kmeans or birch");
    }
    const ClusterAssignment assignment = assign_all(model, points);
    ctx.log(std::to_string(samples.size()) + " training samples in " + std::to_string(cluster_count(model)) + " clusters");

    write_text(ctx.path(kScaler), scaler.to_json() + "\n");
    write_text(ctx.path(kClusterModel), cluster_model_to_json(model) + "\n");
    write_with(ctx.path(kClusterSizes), [&](std::ostream& o) { write_cluster_report_csv(o, cluster_report(assignment)); });
    for (const char* f : {kScaler, kClusterModel, kClusterSizes}) ctx.output(f);
}

void stage_train(StageContext& ctx, const PipelineOptions& opt) {
    const Config& cfg = ctx.cfg();
    const TrainingData d = load_training_data(ctx);
    const Scaler scaler = Scaler::from_json(read_text(ctx.path(kScaler)));
    const ClusterModel model = cluster_model_from_json(read_text(ctx.path(kClusterModel)));
    const SampleSet samples = build_samples(d.frame, window_spec(cfg, d.all_features), scaler, &d.mask,
                                            IndexRange{0, d.split.train_end});
    EnsembleConfig ec;
    ec.model = model_config(cfg);
    ec.cluster_features = d.cluster_features;
    ec.model_features = d.model_features;
    ec.val_fraction = cfg.get_double("model.val_fraction");
    ec.jobs = opt.jobs;
    const ClusterEnsemble ens = train_ensemble(samples, model, scaler, ec);
    for (const auto& w : ens.warnings) ctx.log("warning: " + w);
    ctx.log("trained " + std::to_string(ens.trained_count()) + " of " + std::to_string(ens.cluster_count()) +
            " cluster models; pooled validation MAE " + format_scientific(ens.pooled_validation.mae));

    ClusterAssignment assignment;
    assignment.sizes.resize(ens.cluster_count());
    std::vector<std::optional<ClusterMetrics>> metrics(ens.cluster_count());
    for (std::size_t c = 0; c < ens.cluster_count(); ++c) {
        assignment.sizes[c] = ens.train_counts[c] + ens.val_counts[c];
        assignment.labels.insert(assignment.labels.end(), assignment.sizes[c], c);
        if (ens.validation[c]) metrics[c] = ClusterMetrics{ens.validation[c]->mse, ens.validation[c]->rmse, ens.validation[c]->mae};
    }

    write_text(ctx.path(kEnsemble), ens.to_json() + "\n");
    write_with(ctx.path(kClusterMetrics), [&](std::ostream& o) { write_cluster_report_csv(o, cluster_report(assignment, metrics)); });
    write_with(ctx.path(kHistory), [&](std::ostream& o) {
        o << "cluster,epoch,train_mse,val_mse\n";
        for (std::size_t c = 0; c < ens.cluster_count(); ++c) {
            for (const auto& h : ens.histories[c])
                o << c << ',' << h.epoch << ',' << format_number(h.train_mse) << ',' << format_number(h.val_mse) << '\n';
        }
    });
    for (const char* f : {kEnsemble, kClusterMetrics, kHistory}) ctx.output(f);
}

StrategyConfig strategy_config(const Config& cfg, const ClusterEnsemble& ens) {
    StrategyConfig s;
    const std::string spread = cfg.get("strategy.spread");
    if (spread == "auto") {
        auto d = default_spread(cfg.get("data.symbol"));
        if (!d) throw Error(ErrorCode::ConfigError, "no default spread for " + cfg.get("data.symbol") + "; set strategy.spread");
        s.spread = *d;
    } else {
        s.spread = cfg.get_double("strategy.spread");
    }
    s.max_leverage = cfg.get_double("strategy.max_leverage");
    s.initial_capital = cfg.get_double("strategy.initial_capital");
    s.horizon_bars = cfg.get_size("window.horizon_bars");
    const std::string mae = cfg.get("strategy.leverage_mae");
    s.leverage_trigger_mae = mae == "pooled" ? ens.pooled_validation.mae : cfg.get_double("strategy.leverage_mae");
    s.validate();
    return s;
}

void stage_backtest(StageContext& ctx) {
    const Config& cfg = ctx.cfg();
    const TrainingData d = load_training_data(ctx);
    const BarSeries bars = load_bars(ctx);
    const Scaler scaler = Scaler::from_json(read_text(ctx.path(kScaler)));
    const ClusterEnsemble ens = ClusterEnsemble::from_json(read_text(ctx.path(kEnsemble)));
    const SampleSet test = build_samples(d.frame, window_spec(cfg, d.all_features), scaler, &d.mask,
                                         IndexRange{d.split.test_begin, d.frame.rows()});
    std::vector<Forecast> forecasts;
    std::vector<double> predicted, actual;
    std::size_t unroutable = 0;
    for (const auto& s : test.samples) {
        try {
            forecasts.push_back(predict(ens, s));
        } catch (const Error& e) {
            if (e.code() != ErrorCode::EmptyCluster) throw;
            ++unroutable;
            continue;
        }
        predicted.push_back(forecasts.back().predicted_high);
        actual.push_back(s.target_price);
    }
    if (unroutable) ctx.log("warning: " + std::to_string(unroutable) + " test windows fell in clusters without a model");
    const StrategyConfig strategy = strategy_config(cfg, ens);
    const BacktestResult result = simulate(bars, forecasts, strategy);

    ReportContext rc;
    rc.cluster_method = cluster_method(ens.clustering);
    rc.currency_pair = cfg.get("data.symbol");
    const WindowSpec ws = window_spec(cfg, {});
    rc.forecast_minutes = ws.horizon_minutes(interval(cfg));
    rc.input_minutes = ws.input_minutes(interval(cfg));
    rc.clusters = ens.cluster_count();
    BarSeries test_bars;
    test_bars.bars.assign(bars.bars.begin() + static_cast<std::ptrdiff_t>(d.split.test_begin), bars.bars.end());
    rc.data_period = describe_period(test_bars);
    if (!predicted.empty()) rc.forecast_error = evaluate_forecasts(predicted, actual);
    ctx.log(std::to_string(test.size()) + " test windows, " + std::to_string(result.trades.size()) + " trades, P&L " +
            format_money(result.report.total_pnl));

    write_with(ctx.path(kForecasts), [&](std::ostream& o) { write_forecasts_csv(o, forecasts); });
    write_with(ctx.path(kTrades), [&](std::ostream& o) { write_trade_log_csv(o, result.trades); });
    write_text(ctx.path(kBacktest), report_json(rc, result.report, strategy) + "\n");
    for (const char* f : {kForecasts, kTrades, kBacktest}) ctx.output(f);
}

void stage_report(StageContext& ctx) {
    const auto j = nlohmann::json::parse(read_text(ctx.path(kBacktest)));
    ReportContext rc;
    rc.cluster_method = j.at("cluster_method").get<std::string>();
    rc.currency_pair = j.at("currency_pair").get<std::string>();
    rc.forecast_minutes = j.at("forecast_minutes").get<std::int64_t>();
    rc.input_minutes = j.at("input_minutes").get<std::int64_t>();
    rc.clusters = j.at("clusters").get<std::size_t>();
    rc.data_period = j.at("data_period").get<std::string>();
    rc.forecast_error = {j.at("mse").get<double>(), j.at("rmse").get<double>(), j.at("mae").get<double>()};
    StrategyConfig s;
    s.max_leverage = j.at("max_leverage").get<double>();
    s.spread = j.at("spread").get<double>();
    s.leverage_trigger_mae = j.at("leverage_trigger_mae").get<double>();
    s.initial_capital = j.at("initial_capital").get<double>();
    BacktestReport r;
    r.initial_capital = s.initial_capital;
    r.total_pnl = j.at("total_pnl").get<double>();
    r.final_capital = j.at("final_capital").get<double>();
    r.lowest_capital_realized = j.at("lowest_capital_realized").get<double>();
    r.lowest_capital_marked = j.at("lowest_capital_marked").get<double>();
    r.worst_trade = j.at("worst_trade").get<double>();
    r.best_trade = j.at("best_trade").get<double>();
    r.trade_count = j.at("trade_count").get<std::size_t>();
    r.target_hits = j.at("target_hits").get<std::size_t>();
    r.leveraged_trades = j.at("leveraged_trades").get<std::size_t>();

    std::string text = format_report_table(rc, r, s);
    text += "\nPer-cluster validation (price units)\n";
    text += read_text(ctx.path(kClusterMetrics));
    write_text(ctx.path(kReport), text);
    write_text(ctx.path(kReportJson), j.dump(2) + "\n");
    for (const char* f : {kReport, kReportJson}) ctx.output(f);
    ctx.log("wrote " + ctx.path(kReport).string());
}

} // namespace

const char* stage_name(Stage s) {
    switch (s) {
        case Stage::Ingest: return "ingest";
        case Stage::Features: return "features";
        case Stage::Select: return "select-features";
        case Stage::Cluster: return "cluster";
        case Stage::Train: return "train";
        case Stage::Backtest: return "backtest";
        case Stage::Report: return "report";
    }
    return "?";
}

std::optional<Stage> parse_stage(const std::string& name) {
    for (Stage s : kAllStages) {
        if (name == stage_name(s)) return s;
    }
    return std::nullopt;
}

std::uint64_t stage_hash(const Config& config, Stage s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (Stage t : kAllStages) {
        h = config.hash(stage_prefixes(t), fnv1a(stage_name(t), h));
        if (t == s) break;
    }
    return h;
}

std::string hash_file(const fs::path& path) { return hex64(fnv1a(read_text(path))); }

void run_stage(Stage s, const Config& config, const PipelineOptions& options) {
    if (!(options.validate_only && s == Stage::Ingest)) fs::create_directories(options.out_dir);
    StageContext ctx(s, config, options);
    ctx.require_upstream();
    switch (s) {
        case Stage::Ingest:
            stage_ingest(ctx, options);
            if (options.validate_only) return;
            break;
        case Stage::Features: stage_features(ctx); break;
        case Stage::Select: stage_select(ctx, options); break;
        case Stage::Cluster: stage_cluster(ctx); break;
        case Stage::Train: stage_train(ctx, options); break;
        case Stage::Backtest: stage_backtest(ctx); break;
        case Stage::Report: stage_report(ctx); break;
    }
    ctx.finish();
}

void run_all(const Config& config, const PipelineOptions& options) {
    for (Stage s : kAllStages) run_stage(s, config, options);
}

std::vector<SweepAxis> parse_grid(const std::string& text) {
    std::vector<SweepAxis> axes;
    for (const auto& part : split(text, ';')) {
        if (trim(part).empty()) continue;
        const auto eq = part.find('=');
        if (eq == std::string::npos) throw Error(ErrorCode::ConfigError, "grid axis needs key=v1,v2: '" + part + "'");
        SweepAxis axis{std::string(trim(std::string_view(part).substr(0, eq))), {}};
        if (!Config::defaults().count(axis.key)) throw Error(ErrorCode::ConfigError, "unknown grid key '" + axis.key + "'");
        for (const auto& v : split(std::string_view(part).substr(eq + 1), ',')) {
            if (!trim(v).empty()) axis.values.emplace_back(trim(v));
        }
        if (axis.values.empty()) throw Error(ErrorCode::ConfigError, "grid axis '" + axis.key + "' has no values");
        axes.push_back(std::move(axis));
    }
    if (axes.empty()) throw Error(ErrorCode::ConfigError, "sweep grid is empty");
    return axes;
}

std::vector<SweepRow> run_sweep(const Config& config, const std::vector<SweepAxis>& grid, const PipelineOptions& options) {
    if (grid.empty()) throw Error(ErrorCode::ConfigError, "sweep grid is empty");
    std::size_t cells = 1;
    for (const auto& a : grid) cells *= a.values.size();
    std::vector<SweepRow> rows(cells);
    fs::create_directories(options.out_dir);
    parallel_for(cells, options.jobs, [&](std::size_t cell) {
        SweepRow& row = rows[cell];
        row.cell = cell;
        Config c = config;
        std::size_t rest = cell;
        std::vector<std::string> values(grid.size());
        for (std::size_t a = grid.size(); a-- > 0;) {
            values[a] = grid[a].values[rest % grid[a].values.size()];
            rest /= grid[a].values.size();
        }
        row.values = values;
        char name[32];
        std::snprintf(name, sizeof name, "cell_%03zu", cell);
        PipelineOptions po;
        po.out_dir = options.out_dir / name;
        po.jobs = 1;
        try {
            for (std::size_t a = 0; a < grid.size(); ++a) c.set(grid[a].key, values[a]);
            run_all(c, po);
            row.report_json = read_text(po.out_dir / kBacktest);
            const auto cm = nlohmann::json::parse(read_text(po.out_dir / kClusterModel));
            if (cm.at("method") == "kmeans") row.inertia = cm.at("inertia").get<double>();
            row.ok = true;
        } catch (const std::exception& e) {
            row.error = e.what();
        }
    });
    write_with(options.out_dir / "sweep.csv", [&](std::ostream& o) { write_sweep_csv(o, grid, rows); });
    return rows;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepAxis>& grid, const std::vector<SweepRow>& rows) {
    out << "cell";
    for (const auto& a : grid) out << ',' << a.key;
    out << ",status,mse,rmse,mae,total_pnl,final_capital,lowest_capital_realized,lowest_capital_marked,worst_trade,"
           "best_trade,trade_count,inertia,error\n";
    for (const auto& r : rows) {
        out << r.cell;
        for (const auto& v : r.values) out << ',' << v;
        if (r.ok) {
            const auto j = nlohmann::json::parse(r.report_json);
            out << ",ok";
            for (const char* k : {"mse", "rmse", "mae", "total_pnl", "final_capital", "lowest_capital_realized",
                                  "lowest_capital_marked", "worst_trade", "best_trade"})
                out << ',' << format_number(j.at(k).get<double>());
            out << ',' << j.at("trade_count").get<std::size_t>();
        } else {
            out << ",failed,,,,,,,,,,";
        }
        out << ',' << (r.inertia ? format_number(*r.inertia) : std::string{}) << ',';
        std::string err = r.error;
        std::replace(err.begin(), err.end(), ',', ';');
        std::replace(err.begin(), err.end(), '\n', ' ');
        out << err << '\n';
    }
}

} // namespace clusterfx
