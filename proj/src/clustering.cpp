#include "clusterfx/clustering.hpp"

#include "clusterfx/error.hpp"
#include "clusterfx/format.hpp"
#include "clusterfx/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

namespace clusterfx {

void PointSet::push_back(std::span<const double> p) {
    if (dim == 0 && data.empty()) dim = p.size();
    if (p.size() != dim) throw Error(ErrorCode::DimensionMismatch, "point dimension differs from set");
    data.insert(data.end(), p.begin(), p.end());
}

PointSet PointSet::from_samples(const SampleSet& samples) {
    PointSet ps;
    ps.dim = samples.window_size();
    ps.data.reserve(ps.dim * samples.size());
    for (const auto& s : samples.samples) ps.push_back(s.window);
    return ps;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

namespace {

std::size_t nearest(const std::vector<std::vector<double>>& centroids, std::span<const double> p, double* dist = nullptr) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.size(); ++c) {
        const double d = squared_distance(centroids[c], p);
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    if (dist) *dist = best_d;
    return best;
}

std::vector<std::vector<double>> init_centroids(const PointSet& pts, const KMeansOptions& opt, Rng& rng) {
    const std::size_t n = pts.size();
    std::vector<std::vector<double>> cs;
    cs.reserve(opt.k);
    if (opt.init == KMeansInit::Uniform) {
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        for (std::size_t c = 0; c < opt.k; ++c) {
            std::swap(idx[c], idx[c + rng.below(n - c)]);
            auto p = pts[idx[c]];
            cs.emplace_back(p.begin(), p.end());
        }
        return cs;
    }
    auto first = pts[rng.below(n)];
    cs.emplace_back(first.begin(), first.end());
    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(pts[i], cs[0]);
    while (cs.size() < opt.k) {
        const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
        std::size_t pick = 0;
        if (total > 0.0) {
            const double r = rng.uniform() * total;
            double acc = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (r < acc && d2[i] > 0.0) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = rng.below(n);
        }
        auto p = pts[pick];
        cs.emplace_back(p.begin(), p.end());
        for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(pts[i], cs.back()));
    }
    return cs;
}

/// Returns true when any label changed; fills per-point squared distances.
bool assign_step(const PointSet& pts, const std::vector<std::vector<double>>& cs, std::vector<std::size_t>& labels,
                 std::vector<double>& dist) {
    bool changed = false;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const std::size_t c = nearest(cs, pts[i], &dist[i]);
        if (c != labels[i]) {
            labels[i] = c;
            changed = true;
        }
    }
    return changed;
}

} // namespace

KMeansModel kmeans_fit(const PointSet& pts, const KMeansOptions& opt) {
    if (opt.k == 0) throw Error(ErrorCode::InvalidArgument, "kmeans: k must be >= 1");
    if (opt.max_iter == 0) throw Error(ErrorCode::InvalidArgument, "kmeans: max_iter must be >= 1");
    const std::size_t n = pts.size();
    if (n < opt.k) {
        throw Error(ErrorCode::TooFewSamples,
                    "kmeans: " + std::to_string(n) + " samples for k = " + std::to_string(opt.k));
    }
    Rng rng(opt.seed);
    KMeansModel m;
    m.k = opt.k;
    m.dim = pts.dim;
    m.seed = opt.seed;
    m.centroids = init_centroids(pts, opt, rng);

    std::vector<std::size_t> labels(n, std::numeric_limits<std::size_t>::max());
    std::vector<double> dist(n, 0.0);
    bool settled = false;
    for (std::size_t iter = 1; iter <= opt.max_iter; ++iter) {
        const bool changed = assign_step(pts, m.centroids, labels, dist);
        m.inertia_trace.push_back(std::accumulate(dist.begin(), dist.end(), 0.0));
        m.iterations_run = iter;
        if (!changed) {
            settled = true;
            break;
        }

        std::vector<std::vector<double>> next(opt.k, std::vector<double>(pts.dim, 0.0));
        std::vector<std::size_t> counts(opt.k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            auto p = pts[i];
            auto& acc = next[labels[i]];
            for (std::size_t d = 0; d < pts.dim; ++d) acc[d] += p[d];
            ++counts[labels[i]];
        }
        for (std::size_t c = 0; c < opt.k; ++c) {
            if (counts[c] == 0) continue;
            for (double& v : next[c]) v /= static_cast<double>(counts[c]);
        }
        // Re-seed empty clusters at the point currently worst served.
        for (std::size_t c = 0; c < opt.k; ++c) {
            if (counts[c] != 0) continue;
            std::size_t far = 0;
            double far_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double d = squared_distance(pts[i], next[labels[i]]);
                if (d > far_d) {
                    far_d = d;
                    far = i;
                }
            }
            auto p = pts[far];
            next[c].assign(p.begin(), p.end());
            labels[far] = c;
            counts[c] = 1;
        }
        double shift = 0.0;
        for (std::size_t c = 0; c < opt.k; ++c) shift = std::max(shift, std::sqrt(squared_distance(next[c], m.centroids[c])));
        m.centroids = std::move(next);
        if (shift < opt.tol) break;
    }
    if (!settled) {
        assign_step(pts, m.centroids, labels, dist);
        m.inertia_trace.push_back(std::accumulate(dist.begin(), dist.end(), 0.0));
    }
    m.inertia = m.inertia_trace.back();
    return m;
}

KMeansModel kmeans_fit(const SampleSet& samples, const KMeansOptions& options) {
    return kmeans_fit(PointSet::from_samples(samples), options);
}

KMeansModel kmeans_fit_best(const PointSet& points, const KMeansOptions& options, std::size_t restarts) {
    restarts = std::max<std::size_t>(restarts, 1);
    std::optional<KMeansModel> best;
    for (std::size_t r = 0; r < restarts; ++r) {
        KMeansOptions o = options;
        o.seed = r == 0 ? options.seed : mix_seed(options.seed, r);
        auto m = kmeans_fit(points, o);
        if (!best || m.inertia < best->inertia) best = std::move(m);
    }
    return *best;
}

std::size_t kmeans_assign(const KMeansModel& model, std::span<const double> point) {
    if (point.size() != model.dim) {
        throw Error(ErrorCode::DimensionMismatch, "point has dimension " + std::to_string(point.size()) +
                                                      ", model expects " + std::to_string(model.dim));
    }
    return nearest(model.centroids, point);
}

std::vector<double> CfEntry::centroid() const {
    std::vector<double> c(linear_sum);
    for (double& v : c) v /= static_cast<double>(n);
    return c;
}

double CfEntry::radius() const {
    if (n == 0) return 0.0;
    const double dn = static_cast<double>(n);
    double centroid_sq = 0.0;
    for (double v : linear_sum) centroid_sq += (v / dn) * (v / dn);
    return std::sqrt(std::max(0.0, squared_sum / dn - centroid_sq));
}

void CfEntry::absorb(std::span<const double> p) {
    if (linear_sum.empty()) linear_sum.assign(p.size(), 0.0);
    for (std::size_t d = 0; d < p.size(); ++d) {
        linear_sum[d] += p[d];
        squared_sum += p[d] * p[d];
    }
    ++n;
}

void CfEntry::merge(const CfEntry& other) {
    if (linear_sum.empty()) linear_sum.assign(other.linear_sum.size(), 0.0);
    for (std::size_t d = 0; d < linear_sum.size(); ++d) linear_sum[d] += other.linear_sum[d];
    squared_sum += other.squared_sum;
    n += other.n;
}

BirchModel birch_fit(const PointSet& pts, double threshold, std::size_t k) {
    if (!(threshold > 0.0)) throw Error(ErrorCode::InvalidArgument, "birch: threshold must be positive");
    if (k == 0) throw Error(ErrorCode::InvalidArgument, "birch: k must be >= 1");
    if (pts.size() == 0) throw Error(ErrorCode::TooFewSamples, "birch: no samples");

    BirchModel m;
    m.threshold = threshold;
    m.requested_k = k;
    m.dim = pts.dim;
    std::vector<std::vector<double>> centroids;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        auto p = pts[i];
        if (!m.cf_entries.empty()) {
            const std::size_t c = nearest(centroids, p);
            CfEntry trial = m.cf_entries[c];
            trial.absorb(p);
            if (trial.radius() <= threshold) {
                m.cf_entries[c] = std::move(trial);
                centroids[c] = m.cf_entries[c].centroid();
                continue;
            }
        }
        CfEntry e;
        e.absorb(p);
        m.cf_entries.push_back(std::move(e));
        centroids.push_back(m.cf_entries.back().centroid());
    }

    // Global phase: centroid-linkage agglomeration with cached nearest neighbours.
    const std::size_t leaves = m.cf_entries.size();
    m.reduced = leaves < k;
    std::vector<CfEntry> groups = m.cf_entries;
    std::vector<std::vector<double>> gc = centroids;
    std::vector<bool> alive(leaves, true);
    std::vector<std::size_t> owner(leaves);
    std::iota(owner.begin(), owner.end(), 0);
    std::vector<std::size_t> nn(leaves, 0);
    std::vector<double> nn_d(leaves, std::numeric_limits<double>::infinity());
    auto refresh = [&](std::size_t a) {
        nn_d[a] = std::numeric_limits<double>::infinity();
        for (std::size_t b = 0; b < leaves; ++b) {
            if (b == a || !alive[b]) continue;
            const double d = squared_distance(gc[a], gc[b]);
            if (d < nn_d[a]) {
                nn_d[a] = d;
                nn[a] = b;
            }
        }
    };
    for (std::size_t a = 0; a < leaves; ++a) refresh(a);
    std::size_t active = leaves;
    while (active > k) {
        std::size_t a = 0;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < leaves; ++i) {
            if (alive[i] && nn_d[i] < best) {
                best = nn_d[i];
                a = i;
            }
        }
        std::size_t b = nn[a];
        if (b < a) std::swap(a, b);
        groups[a].merge(groups[b]);
        gc[a] = groups[a].centroid();
        alive[b] = false;
        for (auto& o : owner) {
            if (o == b) o = a;
        }
        --active;
        for (std::size_t i = 0; i < leaves; ++i) {
            if (!alive[i] || i == a) continue;
            if (nn[i] == a || nn[i] == b) {
                refresh(i);
            } else {
                const double d = squared_distance(gc[i], gc[a]);
                if (d < nn_d[i] || (d == nn_d[i] && a < nn[i])) {
                    nn_d[i] = d;
                    nn[i] = a;
                }
            }
        }
        refresh(a);
    }

    // Label surviving groups in order of their lowest subcluster index.
    std::vector<std::size_t> label_of(leaves, 0);
    std::size_t next_label = 0;
    for (std::size_t i = 0; i < leaves; ++i) {
        if (alive[i]) {
            label_of[i] = next_label++;
            m.final_centroids.push_back(gc[i]);
        }
    }
    m.entry_labels.resize(leaves);
    for (std::size_t i = 0; i < leaves; ++i) m.entry_labels[i] = label_of[owner[i]];
    return m;
}

BirchModel birch_fit(const SampleSet& samples, double threshold, std::size_t k) {
    return birch_fit(PointSet::from_samples(samples), threshold, k);
}

std::size_t birch_assign(const BirchModel& model, std::span<const double> point) {
    if (point.size() != model.dim) {
        throw Error(ErrorCode::DimensionMismatch, "point has dimension " + std::to_string(point.size()) +
                                                      ", model expects " + std::to_string(model.dim));
    }
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    std::vector<double> c(model.dim);
    for (std::size_t e = 0; e < model.cf_entries.size(); ++e) {
        const auto& cf = model.cf_entries[e];
        for (std::size_t d = 0; d < model.dim; ++d) c[d] = cf.linear_sum[d] / static_cast<double>(cf.n);
        const double dist = squared_distance(c, point);
        if (dist < best_d) {
            best_d = dist;
            best = e;
        }
    }
    return model.entry_labels[best];
}

std::size_t cluster_count(const ClusterModel& model) {
    return std::visit(
        [](const auto& m) -> std::size_t {
            if constexpr (std::is_same_v<std::decay_t<decltype(m)>, KMeansModel>) {
                return m.k;
            } else {
                return m.cluster_count();
            }
        },
        model);
}

std::size_t assign_cluster(const ClusterModel& model, std::span<const double> point) {
    return std::visit(
        [&](const auto& m) -> std::size_t {
            if constexpr (std::is_same_v<std::decay_t<decltype(m)>, KMeansModel>) {
                return kmeans_assign(m, point);
            } else {
                return birch_assign(m, point);
            }
        },
        model);
}

std::string cluster_method(const ClusterModel& model) {
    return std::holds_alternative<KMeansModel>(model) ? "K-means" : "Birch";
}

std::string KMeansModel::to_json() const {
    nlohmann::ordered_json j;
    j["method"] = "kmeans";
    j["k"] = k;
    j["dim"] = dim;
    j["seed"] = seed;
    j["iterations_run"] = iterations_run;
    j["inertia"] = inertia;
    j["inertia_trace"] = inertia_trace;
    j["centroids"] = centroids;
    return j.dump();
}

KMeansModel KMeansModel::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    if (j.at("method") != "kmeans") throw Error(ErrorCode::ConfigError, "not a k-means model file");
    KMeansModel m;
    m.k = j.at("k").get<std::size_t>();
    m.dim = j.at("dim").get<std::size_t>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.iterations_run = j.at("iterations_run").get<std::size_t>();
    m.inertia = j.at("inertia").get<double>();
    m.inertia_trace = j.at("inertia_trace").get<std::vector<double>>();
    m.centroids = j.at("centroids").get<std::vector<std::vector<double>>>();
    return m;
}

std::string BirchModel::to_json() const {
    nlohmann::ordered_json j;
    j["method"] = "birch";
    j["threshold"] = threshold;
    j["requested_k"] = requested_k;
    j["dim"] = dim;
    j["reduced"] = reduced;
    j["entries"] = nlohmann::ordered_json::array();
    for (std::size_t e = 0; e < cf_entries.size(); ++e) {
        j["entries"].push_back({{"n", cf_entries[e].n},
                                {"linear_sum", cf_entries[e].linear_sum},
                                {"squared_sum", cf_entries[e].squared_sum},
                                {"label", entry_labels[e]}});
    }
    j["final_centroids"] = final_centroids;
    return j.dump();
}

BirchModel BirchModel::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    if (j.at("method") != "birch") throw Error(ErrorCode::ConfigError, "not a birch model file");
    BirchModel m;
    m.threshold = j.at("threshold").get<double>();
    m.requested_k = j.at("requested_k").get<std::size_t>();
    m.dim = j.at("dim").get<std::size_t>();
    m.reduced = j.at("reduced").get<bool>();
    for (const auto& e : j.at("entries")) {
        CfEntry cf;
        cf.n = e.at("n").get<std::size_t>();
        cf.linear_sum = e.at("linear_sum").get<std::vector<double>>();
        cf.squared_sum = e.at("squared_sum").get<double>();
        m.cf_entries.push_back(std::move(cf));
        m.entry_labels.push_back(e.at("label").get<std::size_t>());
    }
    m.final_centroids = j.at("final_centroids").get<std::vector<std::vector<double>>>();
    return m;
}

std::string cluster_model_to_json(const ClusterModel& model) {
    return std::visit([](const auto& m) { return m.to_json(); }, model);
}

ClusterModel cluster_model_from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    if (j.at("method") == "kmeans") return KMeansModel::from_json(text);
    return BirchModel::from_json(text);
}

double ClusterAssignment::percentage(std::size_t cluster) const {
    return total() == 0 ? 0.0 : 100.0 * static_cast<double>(sizes.at(cluster)) / static_cast<double>(total());
}

ClusterAssignment assign_all(const ClusterModel& model, const PointSet& points) {
    ClusterAssignment a;
    a.sizes.assign(cluster_count(model), 0);
    a.labels.reserve(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        const std::size_t c = assign_cluster(model, points[i]);
        a.labels.push_back(c);
        ++a.sizes[c];
    }
    return a;
}

std::vector<ClusterReportRow> cluster_report(const ClusterAssignment& assignment,
                                             const std::vector<std::optional<ClusterMetrics>>& per_cluster) {
    std::vector<std::size_t> order(assignment.cluster_count());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return assignment.sizes[a] > assignment.sizes[b]; });
    std::vector<ClusterReportRow> rows;
    std::size_t running = 0;
    for (std::size_t r = 0; r < order.size(); ++r) {
        const std::size_t c = order[r];
        running += assignment.sizes[c];
        ClusterReportRow row;
        row.rank = r + 1;
        row.cluster = c;
        row.size = assignment.sizes[c];
        row.percentage = assignment.percentage(c);
        row.cumulative = assignment.total() == 0
                             ? 0.0
                             : 100.0 * static_cast<double>(running) / static_cast<double>(assignment.total());
        if (c < per_cluster.size()) row.metrics = per_cluster[c];
        rows.push_back(row);
    }
    return rows;
}

void write_cluster_report_csv(std::ostream& out, const std::vector<ClusterReportRow>& rows) {
    out << "rank,cluster,cluster_size,percentage,cumulative,mse,rmse,mae\n";
    for (const auto& r : rows) {
        out << r.rank << ',' << r.cluster << ',' << r.size << ',' << format_fixed(r.percentage, 2) << ','
            << format_fixed(r.cumulative, 2);
        if (r.metrics) {
            out << ',' << format_number(r.metrics->mse) << ',' << format_number(r.metrics->rmse) << ','
                << format_number(r.metrics->mae);
        } else {
            out << ",,,";
        }
        out << '\n';
    }
}

} // namespace clusterfx
