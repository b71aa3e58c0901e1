#pragma once

#include "clusterfx/features.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace clusterfx {

/// Row-major point matrix: one flattened window per row.
struct PointSet {
    std::size_t dim = 0;
    std::vector<double> data;

    std::size_t size() const { return dim == 0 ? 0 : data.size() / dim; }
    std::span<const double> operator[](std::size_t i) const { return {data.data() + i * dim, dim}; }
    void push_back(std::span<const double> p);

    static PointSet from_samples(const SampleSet& samples);
};

double squared_distance(std::span<const double> a, std::span<const double> b);

enum class KMeansInit { PlusPlus, Uniform };

struct KMeansOptions {
    std::size_t k = 8;
    std::uint64_t seed = 42;
    std::size_t max_iter = 300;
    double tol = 1e-10;
    KMeansInit init = KMeansInit::PlusPlus;
};

struct KMeansModel {
    std::size_t k = 0;
    std::size_t dim = 0;
    std::vector<std::vector<double>> centroids;
    double inertia = 0.0;                 ///< sum of squared distances to assigned centroids
    std::vector<double> inertia_trace;    ///< objective after each assignment step
    std::size_t iterations_run = 0;
    std::uint64_t seed = 0;

    std::string to_json() const;
    static KMeansModel from_json(const std::string& text);

    friend bool operator==(const KMeansModel&, const KMeansModel&) = default;
};

/// Lloyd iterations from seeded initial centroids until assignments stop
/// changing, the largest centroid shift falls below tol, or max_iter. Empty
/// clusters are re-seeded at the point farthest from its centroid. Throws
/// TooFewSamples when there are fewer points than clusters.
KMeansModel kmeans_fit(const PointSet& points, const KMeansOptions& options);
KMeansModel kmeans_fit(const SampleSet& samples, const KMeansOptions& options);

/// Best (lowest inertia) of `restarts` fits with seeds derived from options.seed.
KMeansModel kmeans_fit_best(const PointSet& points, const KMeansOptions& options, std::size_t restarts);

/// Nearest centroid; ties go to the lowest id. Throws DimensionMismatch.
std::size_t kmeans_assign(const KMeansModel& model, std::span<const double> point);

/// Clustering feature: count, linear sum and sum of squared norms.
struct CfEntry {
    std::size_t n = 0;
    std::vector<double> linear_sum;
    double squared_sum = 0.0;

    std::vector<double> centroid() const;
    /// RMS distance of members to the centroid.
    double radius() const;
    void absorb(std::span<const double> p);
    void merge(const CfEntry& other);

    friend bool operator==(const CfEntry&, const CfEntry&) = default;
};

struct BirchModel {
    double threshold = 0.0;
    std::size_t requested_k = 0;
    std::size_t dim = 0;
    std::vector<CfEntry> cf_entries;               ///< leaf subclusters
    std::vector<std::size_t> entry_labels;         ///< final cluster of each subcluster
    std::vector<std::vector<double>> final_centroids;
    bool reduced = false;                          ///< fewer subclusters than requested_k

    std::size_t cluster_count() const { return final_centroids.size(); }

    std::string to_json() const;
    static BirchModel from_json(const std::string& text);

    friend bool operator==(const BirchModel&, const BirchModel&) = default;
};

/// Single pass over the points: each joins its nearest subcluster when the
/// merged radius stays within `threshold`, otherwise opens a new one. The
/// subclusters are then merged pairwise (closest centroids first) down to at
/// most k clusters.
BirchModel birch_fit(const PointSet& points, double threshold, std::size_t k);
BirchModel birch_fit(const SampleSet& samples, double threshold, std::size_t k);

/// Label of the nearest subcluster. Throws DimensionMismatch.
std::size_t birch_assign(const BirchModel& model, std::span<const double> point);

using ClusterModel = std::variant<KMeansModel, BirchModel>;

std::size_t cluster_count(const ClusterModel& model);
std::size_t assign_cluster(const ClusterModel& model, std::span<const double> point);
std::string cluster_method(const ClusterModel& model);
std::string cluster_model_to_json(const ClusterModel& model);
ClusterModel cluster_model_from_json(const std::string& text);

struct ClusterAssignment {
    std::vector<std::size_t> labels;
    std::vector<std::size_t> sizes;

    std::size_t cluster_count() const { return sizes.size(); }
    std::size_t total() const { return labels.size(); }
    double percentage(std::size_t cluster) const;
};

ClusterAssignment assign_all(const ClusterModel& model, const PointSet& points);

struct ClusterMetrics {
    double mse = 0.0;
    double rmse = 0.0;
    double mae = 0.0;
};

struct ClusterReportRow {
    std::size_t rank = 0; ///< 1 = largest cluster
    std::size_t cluster = 0;
    std::size_t size = 0;
    double percentage = 0.0;
    double cumulative = 0.0;
    std::optional<ClusterMetrics> metrics;
};

/// Rows ordered by size descending (ties by cluster id) with percentage and
/// cumulative percentage of all samples.
std::vector<ClusterReportRow> cluster_report(const ClusterAssignment& assignment,
                                             const std::vector<std::optional<ClusterMetrics>>& per_cluster = {});
void write_cluster_report_csv(std::ostream& out, const std::vector<ClusterReportRow>& rows);

} // namespace clusterfx
