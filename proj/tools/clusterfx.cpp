// Command-line driver for the clustering + attention forecaster pipeline.

#include "clusterfx/config.hpp"
#include "clusterfx/error.hpp"
#include "clusterfx/market_data.hpp"
#include "clusterfx/pipeline.hpp"
#include "clusterfx/synthetic.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

enum ExitCode : int {
    kOk = 0,
    kOther = 1,
    kUsage = 2,
    kData = 3,
    kDiverged = 4,
    kArtifact = 5,
};

int exit_code(clusterfx::ErrorCode code) {
    using clusterfx::ErrorCode;
    switch (code) {
        case ErrorCode::ConfigError:
        case ErrorCode::InvalidArgument:
        case ErrorCode::UnknownIndicator: return kUsage;
        case ErrorCode::MalformedRow:
        case ErrorCode::InvariantViolation:
        case ErrorCode::DuplicateTimestamp:
        case ErrorCode::EmptyPartition:
        case ErrorCode::WindowTooLong:
        case ErrorCode::DegenerateRange:
        case ErrorCode::EmptyRange:
        case ErrorCode::InsufficientData:
        case ErrorCode::NotEnoughCandidates:
        case ErrorCode::TooFewSamples:
        case ErrorCode::MisalignedForecast:
        case ErrorCode::InsufficientHorizon: return kData;
        case ErrorCode::TrainingDiverged:
        case ErrorCode::NonFiniteActivation:
        case ErrorCode::NonFiniteGradient: return kDiverged;
        case ErrorCode::MissingArtifact:
        case ErrorCode::ConfigHashMismatch: return kArtifact;
        default: return kOther;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cluster-routed attention forecaster for FX bars"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::optional<long long> seed;
    std::string out_dir = "out";
    unsigned jobs = 1;
    std::vector<std::string> overrides;
    app.add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "global seed");
    app.add_option("--out", out_dir, "output directory")->capture_default_str();
    app.add_option("--jobs", jobs, "worker threads")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--set", overrides, "config override key=value (repeatable)");

    auto* generate = app.add_subcommand("generate", "write a synthetic OHLC series as CSV");
    std::string gen_output;
    std::optional<std::size_t> gen_bars;
    std::optional<std::uint64_t> gen_seed;
    generate->add_option("--output", gen_output, "CSV path")->required();
    generate->add_option("--bars", gen_bars, "number of bars (default synthetic.bars)");
    generate->add_option("--data-seed", gen_seed, "generator seed (default synthetic.seed)");

    auto* ingest = app.add_subcommand("ingest", "parse and validate bars, record the train/test split");
    std::string input;
    bool validate_only = false;
    ingest->add_option("--input", input, "bar CSV (overrides data.input)");
    ingest->add_flag("--validate-only", validate_only, "report only, write nothing");

    std::vector<std::pair<CLI::App*, clusterfx::Stage>> stage_cmds;
    const std::pair<const char*, const char*> stage_help[] = {
        {"features", "compute indicator columns and event flags"},
        {"select-features", "rank candidate features and keep the best"},
        {"cluster", "fit the scaler and the clustering model"},
        {"train", "train one forecaster per cluster"},
        {"backtest", "forecast the test partition and replay the strategy"},
        {"report", "write the summary table"},
    };
    for (const auto& [name, help] : stage_help) stage_cmds.emplace_back(app.add_subcommand(name, help), *clusterfx::parse_stage(name));

    auto* run = app.add_subcommand("run", "run every stage in order");
    run->add_option("--input", input, "bar CSV (overrides data.input)");

    auto* sweep = app.add_subcommand("sweep", "run the pipeline over a parameter grid");
    std::string grid;
    sweep->add_option("--grid", grid, "e.g. \"window.input_len_bars=6,9;cluster.k=4,8\"")->required();
    sweep->add_option("--input", input, "bar CSV (overrides data.input)");

    auto* show = app.add_subcommand("config", "print the effective configuration");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    try {
        clusterfx::Config cfg;
        if (!config_path.empty()) cfg.merge_file(config_path);
        for (const auto& o : overrides) cfg.set_assignment(o);
        if (seed) cfg.set("seed", std::to_string(*seed));
        if (!input.empty()) cfg.set("data.input", input);

        clusterfx::PipelineOptions opt;
        opt.out_dir = out_dir;
        opt.jobs = jobs;
        opt.log = &std::cerr;

        if (*show) {
            std::cout << cfg.to_text();
        } else if (*generate) {
            clusterfx::SyntheticConfig sc;
            sc.bars = gen_bars ? *gen_bars : cfg.get_size("synthetic.bars");
            sc.seed = gen_seed ? *gen_seed : static_cast<std::uint64_t>(cfg.get_int("synthetic.seed"));
            sc.interval_minutes = static_cast<int>(cfg.get_int("data.interval_minutes"));
            sc.symbol = cfg.get("data.symbol");
            const auto series = clusterfx::generate_series(sc);
            std::ofstream out(gen_output);
            if (!out) throw clusterfx::Error(clusterfx::ErrorCode::Io, "cannot write " + gen_output);
            clusterfx::write_csv(out, series);
            std::cerr << "wrote " << series.size() << " bars to " << gen_output << '\n';
        } else if (*ingest) {
            opt.validate_only = validate_only;
            clusterfx::run_stage(clusterfx::Stage::Ingest, cfg, opt);
        } else if (*run) {
            clusterfx::run_all(cfg, opt);
        } else if (*sweep) {
            const auto axes = clusterfx::parse_grid(grid);
            const auto rows = clusterfx::run_sweep(cfg, axes, opt);
            std::size_t failed = 0;
            for (const auto& r : rows) {
                if (!r.ok) {
                    ++failed;
                    std::cerr << "cell " << r.cell << " failed: " << r.error << '\n';
                }
            }
            std::cerr << rows.size() << " cells, " << failed << " failed; table in " << (opt.out_dir / "sweep.csv").string()
                      << '\n';
        } else {
            for (const auto& [cmd, stage] : stage_cmds) {
                if (*cmd) clusterfx::run_stage(stage, cfg, opt);
            }
        }
    } catch (const clusterfx::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kOther;
    }
    return kOk;
}
