#pragma once

#include "clusterfx/config.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace clusterfx {

enum class Stage { Ingest, Features, Select, Cluster, Train, Backtest, Report };

inline constexpr Stage kAllStages[] = {Stage::Ingest, Stage::Features, Stage::Select, Stage::Cluster,
                                       Stage::Train,  Stage::Backtest, Stage::Report};

const char* stage_name(Stage s);
std::optional<Stage> parse_stage(const std::string& name);

/// Cumulative hash of the config keys that affect `s` and every stage before it.
std::uint64_t stage_hash(const Config& config, Stage s);

/// FNV-1a of the file bytes, hex encoded. Throws MissingArtifact.
std::string hash_file(const std::filesystem::path& path);

struct PipelineOptions {
    std::filesystem::path out_dir = "out";
    unsigned jobs = 1;
    bool validate_only = false; ///< ingest only: report and write nothing
    std::ostream* log = nullptr;
};

/// Runs one stage. Requires the previous stage's manifest in out_dir with a
/// matching config hash and unmodified outputs; throws MissingArtifact or
/// ConfigHashMismatch otherwise. Writes the stage outputs, the effective
/// config (config.txt) and `<stage>.manifest.json`.
void run_stage(Stage s, const Config& config, const PipelineOptions& options);
void run_all(const Config& config, const PipelineOptions& options);

struct SweepAxis {
    std::string key;
    std::vector<std::string> values;
};

/// "window.input_len_bars=6,9;cluster.k=4,8"
std::vector<SweepAxis> parse_grid(const std::string& text);

struct SweepRow {
    std::size_t cell = 0;
    std::vector<std::string> values; ///< one per axis
    bool ok = false;
    std::string error;
    std::string report_json; ///< backtest summary of the cell when ok
    std::optional<double> inertia;
};

/// One full pipeline run per grid cell under out_dir/cell_NNN, up to
/// options.jobs cells at a time. A failing cell is recorded and the others
/// continue. Writes out_dir/sweep.csv.
std::vector<SweepRow> run_sweep(const Config& config, const std::vector<SweepAxis>& grid, const PipelineOptions& options);

void write_sweep_csv(std::ostream& out, const std::vector<SweepAxis>& grid, const std::vector<SweepRow>& rows);

} // namespace clusterfx
