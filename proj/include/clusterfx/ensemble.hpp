#pragma once

#include "clusterfx/clustering.hpp"
#include "clusterfx/forecaster.hpp"

#include <optional>
#include <string>
#include <vector>

namespace clusterfx {

struct EnsembleConfig {
    ModelConfig model;
    /// Columns of the input SampleSet used for routing; empty means all of them.
    std::vector<std::string> cluster_features;
    /// Columns fed to the per-cluster forecasters; empty means all of them.
    std::vector<std::string> model_features;
    /// Chronological tail of the samples held out for validation.
    double val_fraction = 0.2;
    unsigned jobs = 1;
};

/// Every cluster model starts from init_model(config.model), so a single
/// cluster reproduces the global model exactly. Validation metrics are in
/// price units (predictions inverted through the "high" scale).
struct ClusterEnsemble {
    ClusterModel clustering;
    std::vector<std::string> input_features;
    std::vector<std::string> cluster_features;
    std::vector<std::string> model_features;
    std::size_t input_len = 0;
    FeatureScale target_scale;
    std::vector<std::optional<AttentionForecaster>> models;
    std::vector<std::vector<EpochLoss>> histories;
    std::vector<std::size_t> train_counts;
    std::vector<std::size_t> val_counts;
    std::vector<std::optional<ErrorMetrics>> validation;
    ErrorMetrics pooled_validation;
    std::vector<std::string> warnings;

    std::size_t cluster_count() const { return models.size(); }
    std::size_t trained_count() const;

    std::string to_json() const;
    static ClusterEnsemble from_json(const std::string& text);
};

/// Splits `samples` chronologically into train/validation, routes both by
/// `clustering` and trains one forecaster per cluster that has training
/// samples. Clusters without training samples are skipped with a warning; a
/// cluster without validation samples is validated on its training subset.
ClusterEnsemble train_ensemble(const SampleSet& samples, const ClusterModel& clustering, const Scaler& scaler,
                               const EnsembleConfig& config);

struct Forecast {
    Timestamp timestamp;
    double predicted_high = 0.0; ///< price units
    double scaled_prediction = 0.0;
    std::size_t cluster = 0;
    std::vector<double> attention;
    double entry_close = 0.0;

    friend bool operator==(const Forecast&, const Forecast&) = default;
};

/// `window` is laid out over ensemble.input_features. Throws DimensionMismatch
/// on a wrong width and EmptyCluster when the routed cluster has no model.
Forecast predict(const ClusterEnsemble& ensemble, std::span<const double> window, double entry_close,
                 Timestamp timestamp = {});
Forecast predict(const ClusterEnsemble& ensemble, const Sample& sample);

/// Forecasts for every sample whose cluster has a model; the rest are counted
/// in `skipped` when given.
std::vector<Forecast> predict_all(const ClusterEnsemble& ensemble, const SampleSet& samples,
                                  std::size_t* skipped = nullptr);

void write_forecasts_csv(std::ostream& out, const std::vector<Forecast>& forecasts);
std::vector<Forecast> read_forecasts_csv(std::istream& in);

} // namespace clusterfx
