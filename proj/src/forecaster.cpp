#include "clusterfx/forecaster.hpp"

#include "clusterfx/error.hpp"
#include "clusterfx/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

namespace clusterfx {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void ModelConfig::validate() const {
    if (hidden_size == 0 || n_features == 0 || input_len_bars == 0 || epochs == 0 || batch_size == 0)
        throw Error(ErrorCode::InvalidArgument, "model config sizes must be positive");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
        throw Error(ErrorCode::InvalidArgument, "learning_rate must be finite and non-negative");
}

std::vector<ParamBlock> AttentionForecaster::layout(const ModelConfig& c) {
    const std::size_t h = c.hidden_size, f = c.n_features;
    std::vector<ParamBlock> out;
    std::size_t off = 0;
    auto add = [&](const char* name, std::size_t rows, std::size_t cols) {
        out.push_back({name, off, rows, cols});
        off += rows * cols;
    };
    add("fwd.W", 4 * h, f);
    add("fwd.U", 4 * h, h);
    add("fwd.b", 4 * h, 1);
    add("bwd.W", 4 * h, f);
    add("bwd.U", 4 * h, h);
    add("bwd.b", 4 * h, 1);
    add("post.W", 8 * h, 2 * h);
    add("post.U", 8 * h, 2 * h);
    add("post.b", 8 * h, 1);
    add("head.w", 1, 4 * h);
    add("head.b", 1, 1);
    return out;
}

std::size_t AttentionForecaster::parameter_count(const ModelConfig& c) {
    const auto blocks = layout(c);
    return blocks.back().offset + blocks.back().size();
}

AttentionForecaster::AttentionForecaster(const ModelConfig& config)
    : config_(config), blocks_(layout(config)), params_(parameter_count(config), 0.0) {
    config_.validate();
}

const ParamBlock& AttentionForecaster::block(const std::string& name) const {
    for (const auto& b : blocks_) {
        if (b.name == name) return b;
    }
    throw Error(ErrorCode::InvalidArgument, "no parameter block " + name);
}

Eigen::Map<const MatrixXd> AttentionForecaster::matrix(const ParamBlock& b) const {
    return {params_.data() + b.offset, static_cast<Eigen::Index>(b.rows), static_cast<Eigen::Index>(b.cols)};
}

Eigen::Map<MatrixXd> AttentionForecaster::matrix(const ParamBlock& b) {
    return {params_.data() + b.offset, static_cast<Eigen::Index>(b.rows), static_cast<Eigen::Index>(b.cols)};
}

std::string AttentionForecaster::to_json() const {
    nlohmann::ordered_json j;
    j["config"] = {{"hidden_size", config_.hidden_size},
                   {"n_features", config_.n_features},
                   {"input_len_bars", config_.input_len_bars},
                   {"learning_rate", config_.learning_rate},
                   {"epochs", config_.epochs},
                   {"batch_size", config_.batch_size},
                   {"seed", config_.seed},
                   {"scaled_attention", config_.scaled_attention},
                   {"clip_norm", config_.clip_norm}};
    j["params"] = params_;
    return j.dump();
}

AttentionForecaster AttentionForecaster::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    const auto& c = j.at("config");
    ModelConfig cfg;
    cfg.hidden_size = c.at("hidden_size").get<std::size_t>();
    cfg.n_features = c.at("n_features").get<std::size_t>();
    cfg.input_len_bars = c.at("input_len_bars").get<std::size_t>();
    cfg.learning_rate = c.at("learning_rate").get<double>();
    cfg.epochs = c.at("epochs").get<std::size_t>();
    cfg.batch_size = c.at("batch_size").get<std::size_t>();
    cfg.seed = c.at("seed").get<std::uint64_t>();
    cfg.scaled_attention = c.at("scaled_attention").get<bool>();
    cfg.clip_norm = c.at("clip_norm").get<double>();
    AttentionForecaster m(cfg);
    auto p = j.at("params").get<std::vector<double>>();
    if (p.size() != m.parameter_count()) throw Error(ErrorCode::ShapeMismatch, "parameter count mismatch in model file");
    std::copy(p.begin(), p.end(), m.params().begin());
    return m;
}

AttentionForecaster init_model(const ModelConfig& config) {
    AttentionForecaster m(config);
    Rng rng(config.seed);
    const std::size_t h = config.hidden_size, f = config.n_features;
    for (const auto& b : m.blocks()) {
        std::size_t fan_in = 0;
        if (b.name.starts_with("fwd") || b.name.starts_with("bwd")) {
            fan_in = f + h;
        } else if (b.name.starts_with("post")) {
            fan_in = 4 * h;
        } else {
            fan_in = 4 * h;
        }
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        auto p = m.params().subspan(b.offset, b.size());
        for (double& v : p) v = rng.uniform(-bound, bound);
    }
    return m;
}

namespace {

struct LstmParams {
    Eigen::Map<const MatrixXd> W, U, b;
};

LstmParams lstm_params(const AttentionForecaster& m, const char* prefix) {
    const std::string p(prefix);
    return {m.matrix(m.block(p + ".W")), m.matrix(m.block(p + ".U")), m.matrix(m.block(p + ".b"))};
}

struct LstmGrads {
    Eigen::Map<MatrixXd> W, U, b;
};

LstmGrads lstm_grads(const AttentionForecaster& m, std::vector<double>& g, const char* prefix) {
    const std::string p(prefix);
    auto map = [&](const std::string& name) {
        const auto& b = m.block(name);
        return Eigen::Map<MatrixXd>(g.data() + b.offset, static_cast<Eigen::Index>(b.rows),
                                    static_cast<Eigen::Index>(b.cols));
    };
    return {map(p + ".W"), map(p + ".U"), map(p + ".b")};
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void ensure_size(VectorXd& v, Eigen::Index n) {
    if (v.size() != n) v.resize(n);
}

/// Runs the cell over `inputs` in the given order from (h0, c0).
void lstm_run(const LstmParams& p, const std::vector<const VectorXd*>& inputs, const VectorXd& h0, const VectorXd& c0,
              LstmRunCache& run, VectorXd& gates) {
    const Eigen::Index hid = p.U.cols();
    run.h0 = h0;
    run.c0 = c0;
    run.steps.resize(inputs.size());
    ensure_size(gates, 4 * hid);
    for (std::size_t s = 0; s < inputs.size(); ++s) {
        const VectorXd& h_prev = s == 0 ? run.h0 : run.steps[s - 1].h;
        const VectorXd& c_prev = s == 0 ? run.c0 : run.steps[s - 1].c;
        gates.noalias() = p.W * *inputs[s];
        gates.noalias() += p.U * h_prev;
        gates += p.b.col(0);
        auto& st = run.steps[s];
        ensure_size(st.i, hid);
        ensure_size(st.f, hid);
        ensure_size(st.g, hid);
        ensure_size(st.o, hid);
        ensure_size(st.c, hid);
        ensure_size(st.tanh_c, hid);
        ensure_size(st.h, hid);
        for (Eigen::Index k = 0; k < hid; ++k) {
            st.i[k] = sigmoid(gates[k]);
            st.f[k] = sigmoid(gates[hid + k]);
            st.g[k] = std::tanh(gates[2 * hid + k]);
            st.o[k] = sigmoid(gates[3 * hid + k]);
            st.c[k] = st.f[k] * c_prev[k] + st.i[k] * st.g[k];
            st.tanh_c[k] = std::tanh(st.c[k]);
            st.h[k] = st.o[k] * st.tanh_c[k];
        }
    }
}

/// Back-propagates through a cell run. dh_ext[s] is the loss gradient arriving
/// at step s's output from outside the recurrence; dc_last seeds the cell-state
/// gradient after the final step. Writes input gradients into dx (if non-null)
/// and the gradients of the initial state into dh0/dc0.
void lstm_backward(const LstmParams& p, LstmGrads& g, const std::vector<const VectorXd*>& inputs,
                   const LstmRunCache& run, const std::vector<VectorXd>& dh_ext, const VectorXd& dc_last,
                   std::vector<VectorXd>* dx, VectorXd& dh0, VectorXd& dc0, VectorXd& dgates, VectorXd& dh,
                   VectorXd& dc) {
    const Eigen::Index hid = p.U.cols();
    ensure_size(dgates, 4 * hid);
    ensure_size(dh, hid);
    dh.setZero();
    dc = dc_last;
    if (dx) dx->resize(inputs.size());
    for (std::size_t s = inputs.size(); s-- > 0;) {
        const auto& st = run.steps[s];
        const VectorXd& h_prev = s == 0 ? run.h0 : run.steps[s - 1].h;
        const VectorXd& c_prev = s == 0 ? run.c0 : run.steps[s - 1].c;
        dh += dh_ext[s];
        for (Eigen::Index k = 0; k < hid; ++k) {
            const double d_o = dh[k] * st.tanh_c[k];
            const double d_c = dc[k] + dh[k] * st.o[k] * (1.0 - st.tanh_c[k] * st.tanh_c[k]);
            const double d_i = d_c * st.g[k];
            const double d_g = d_c * st.i[k];
            const double d_f = d_c * c_prev[k];
            dc[k] = d_c * st.f[k];
            dgates[k] = d_i * st.i[k] * (1.0 - st.i[k]);
            dgates[hid + k] = d_f * st.f[k] * (1.0 - st.f[k]);
            dgates[2 * hid + k] = d_g * (1.0 - st.g[k] * st.g[k]);
            dgates[3 * hid + k] = d_o * st.o[k] * (1.0 - st.o[k]);
        }
        g.W.noalias() += dgates * inputs[s]->transpose();
        g.U.noalias() += dgates * h_prev.transpose();
        g.b.col(0) += dgates;
        if (dx) (*dx)[s].noalias() = p.W.transpose() * dgates;
        dh.noalias() = p.U.transpose() * dgates;
    }
    dh0 = dh;
    dc0 = dc;
}

struct Workspace {
    ForwardTrace trace;
    VectorXd gates;
    std::vector<const VectorXd*> fwd_inputs, bwd_inputs, post_inputs;
    std::vector<VectorXd> dh_fwd, dh_bwd, dh_post, dctx;
    std::vector<VectorXd> d_outputs;
    VectorXd dgates, dh, dc, dh0, dc0, dz, dhf, dcf, zero;
};

double attention_scale(const ModelConfig& c) {
    return c.scaled_attention ? 1.0 / std::sqrt(2.0 * static_cast<double>(c.hidden_size)) : 1.0;
}

void forward_ws(const AttentionForecaster& model, std::span<const double> window, Workspace& ws) {
    const auto& cfg = model.config();
    const std::size_t T = cfg.input_len_bars, F = cfg.n_features;
    const auto H = static_cast<Eigen::Index>(cfg.hidden_size);
    if (window.size() != T * F) {
        throw Error(ErrorCode::ShapeMismatch, "window has " + std::to_string(window.size()) + " values, expected " +
                                                  std::to_string(T) + " x " + std::to_string(F));
    }
    ForwardTrace& tr = ws.trace;
    tr.inputs.resize(T);
    for (std::size_t t = 0; t < T; ++t) {
        tr.inputs[t] = Eigen::Map<const VectorXd>(window.data() + t * F, static_cast<Eigen::Index>(F));
    }
    ws.fwd_inputs.resize(T);
    ws.bwd_inputs.resize(T);
    for (std::size_t t = 0; t < T; ++t) {
        ws.fwd_inputs[t] = &tr.inputs[t];
        ws.bwd_inputs[t] = &tr.inputs[T - 1 - t];
    }
    ensure_size(ws.zero, H);
    ws.zero.setZero();
    lstm_run(lstm_params(model, "fwd"), ws.fwd_inputs, ws.zero, ws.zero, tr.forward_cell, ws.gates);
    lstm_run(lstm_params(model, "bwd"), ws.bwd_inputs, ws.zero, ws.zero, tr.backward_cell, ws.gates);

    tr.outputs.resize(T);
    for (std::size_t t = 0; t < T; ++t) {
        auto& o = tr.outputs[t];
        ensure_size(o, 2 * H);
        o.head(H) = tr.forward_cell.steps[t].h;
        o.tail(H) = tr.backward_cell.steps[T - 1 - t].h;
    }
    ensure_size(tr.final_hidden, 2 * H);
    ensure_size(tr.final_cell, 2 * H);
    tr.final_hidden.head(H) = tr.forward_cell.steps[T - 1].h;
    tr.final_hidden.tail(H) = tr.backward_cell.steps[T - 1].h;
    tr.final_cell.head(H) = tr.forward_cell.steps[T - 1].c;
    tr.final_cell.tail(H) = tr.backward_cell.steps[T - 1].c;

    // (1) scores, (2) softmax, (3) weighted sum of outputs.
    const double kappa = attention_scale(cfg);
    tr.scores.resize(T);
    tr.attention.resize(T);
    double max_score = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < T; ++t) {
        tr.scores[t] = kappa * tr.final_hidden.dot(tr.outputs[t]);
        max_score = std::max(max_score, tr.scores[t]);
    }
    double denom = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
        tr.attention[t] = std::exp(tr.scores[t] - max_score);
        denom += tr.attention[t];
    }
    for (double& a : tr.attention) a /= denom;
    ensure_size(tr.context, 2 * H);
    tr.context.setZero();
    for (std::size_t t = 0; t < T; ++t) tr.context += tr.attention[t] * tr.outputs[t];

    // (4) one recurrent step on the context from the final encoder state, then
    // the head over [step output; final hidden].
    ws.post_inputs.assign(1, &tr.context);
    lstm_run(lstm_params(model, "post"), ws.post_inputs, tr.final_hidden, tr.final_cell, tr.post_cell, ws.gates);
    ensure_size(tr.head_input, 4 * H);
    tr.head_input.head(2 * H) = tr.post_cell.steps[0].h;
    tr.head_input.tail(2 * H) = tr.final_hidden;
    const auto w = model.matrix(model.block("head.w"));
    const double b = model.params()[model.block("head.b").offset];
    tr.prediction = (w * tr.head_input)(0, 0) + b;
    if (!std::isfinite(tr.prediction)) throw Error(ErrorCode::NonFiniteActivation, "prediction is not finite");
}

/// Accumulates d(loss)/d(theta) for one sample given d(loss)/d(prediction).
void backward_ws(const AttentionForecaster& model, Workspace& ws, double dy, std::vector<double>& grad) {
    const auto& cfg = model.config();
    const std::size_t T = cfg.input_len_bars;
    const auto H = static_cast<Eigen::Index>(cfg.hidden_size);
    const ForwardTrace& tr = ws.trace;

    // Head.
    const auto& hw = model.block("head.w");
    Eigen::Map<VectorXd> g_head_w(grad.data() + hw.offset, 4 * H);
    g_head_w += dy * tr.head_input;
    grad[model.block("head.b").offset] += dy;
    ws.dz = dy * model.matrix(hw).transpose();

    // Post-attention cell: gradient reaches the context and the initial state.
    ws.dh_post.assign(1, ws.dz.head(2 * H));
    ensure_size(ws.dcf, 2 * H);
    ws.dcf.setZero();
    auto post_g = lstm_grads(model, grad, "post");
    lstm_backward(lstm_params(model, "post"), post_g, ws.post_inputs, tr.post_cell, ws.dh_post, ws.dcf, &ws.dctx,
                  ws.dh0, ws.dc0, ws.dgates, ws.dh, ws.dc);
    ws.dhf = ws.dz.tail(2 * H) + ws.dh0;
    ws.dcf = ws.dc0;
    const VectorXd& dctx = ws.dctx[0];

    // Attention.
    const double kappa = attention_scale(cfg);
    ws.d_outputs.resize(T);
    std::vector<double> da(T);
    double weighted = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
        ws.d_outputs[t] = tr.attention[t] * dctx;
        da[t] = dctx.dot(tr.outputs[t]);
        weighted += tr.attention[t] * da[t];
    }
    for (std::size_t t = 0; t < T; ++t) {
        const double ds = tr.attention[t] * (da[t] - weighted);
        ws.dhf += (kappa * ds) * tr.outputs[t];
        ws.d_outputs[t] += (kappa * ds) * tr.final_hidden;
    }

    // Encoders.
    ws.dh_fwd.resize(T);
    ws.dh_bwd.resize(T);
    for (std::size_t t = 0; t < T; ++t) {
        ws.dh_fwd[t] = ws.d_outputs[t].head(H);
        ws.dh_bwd[T - 1 - t] = ws.d_outputs[t].tail(H);
    }
    ws.dh_fwd[T - 1] += ws.dhf.head(H);
    ws.dh_bwd[T - 1] += ws.dhf.tail(H);
    VectorXd dc_f = ws.dcf.head(H), dc_b = ws.dcf.tail(H);
    auto fwd_g = lstm_grads(model, grad, "fwd");
    lstm_backward(lstm_params(model, "fwd"), fwd_g, ws.fwd_inputs, tr.forward_cell, ws.dh_fwd, dc_f, nullptr, ws.dh0,
                  ws.dc0, ws.dgates, ws.dh, ws.dc);
    auto bwd_g = lstm_grads(model, grad, "bwd");
    lstm_backward(lstm_params(model, "bwd"), bwd_g, ws.bwd_inputs, tr.backward_cell, ws.dh_bwd, dc_b, nullptr, ws.dh0,
                  ws.dc0, ws.dgates, ws.dh, ws.dc);
}

} // namespace

void forward_into(const AttentionForecaster& model, std::span<const double> window, ForwardTrace& trace) {
    Workspace ws;
    ws.trace = std::move(trace);
    forward_ws(model, window, ws);
    trace = std::move(ws.trace);
}

ForwardTrace forward(const AttentionForecaster& model, std::span<const double> window) {
    Workspace ws;
    forward_ws(model, window, ws);
    return std::move(ws.trace);
}

double predict_scaled(const AttentionForecaster& model, std::span<const double> window) {
    return forward(model, window).prediction;
}

double loss_mse(std::span<const double> predictions, std::span<const double> targets) {
    return error_metrics(predictions, targets).mse;
}

ErrorMetrics error_metrics(std::span<const double> predictions, std::span<const double> targets) {
    if (predictions.size() != targets.size()) {
        throw Error(ErrorCode::LengthMismatch, std::to_string(predictions.size()) + " predictions vs " +
                                                   std::to_string(targets.size()) + " targets");
    }
    if (predictions.empty()) throw Error(ErrorCode::LengthMismatch, "no predictions");
    double se = 0.0, ae = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const double e = predictions[i] - targets[i];
        se += e * e;
        ae += std::abs(e);
    }
    const double n = static_cast<double>(predictions.size());
    ErrorMetrics m;
    m.mse = se / n;
    m.rmse = std::sqrt(m.mse);
    m.mae = ae / n;
    return m;
}

double backward(const AttentionForecaster& model, std::span<const Sample* const> batch, std::vector<double>& gradient) {
    if (batch.empty()) throw Error(ErrorCode::InvalidArgument, "backward: empty batch");
    gradient.assign(model.parameter_count(), 0.0);
    Workspace ws;
    const double n = static_cast<double>(batch.size());
    double loss = 0.0;
    for (const Sample* s : batch) {
        forward_ws(model, s->window, ws);
        const double err = ws.trace.prediction - s->target;
        loss += err * err;
        backward_ws(model, ws, 2.0 * err / n, gradient);
    }
    for (double g : gradient) {
        if (!std::isfinite(g)) throw Error(ErrorCode::NonFiniteGradient, "gradient is not finite");
    }
    return loss / n;
}

double backward(const AttentionForecaster& model, const SampleSet& batch, std::vector<double>& gradient) {
    std::vector<const Sample*> ptrs;
    ptrs.reserve(batch.size());
    for (const auto& s : batch.samples) ptrs.push_back(&s);
    return backward(model, ptrs, gradient);
}

std::vector<double> predict_all(const AttentionForecaster& model, const SampleSet& set) {
    Workspace ws;
    std::vector<double> out;
    out.reserve(set.size());
    for (const auto& s : set.samples) {
        forward_ws(model, s.window, ws);
        out.push_back(ws.trace.prediction);
    }
    return out;
}

double evaluate_mse(const AttentionForecaster& model, const SampleSet& set) {
    const auto preds = predict_all(model, set);
    std::vector<double> targets;
    targets.reserve(set.size());
    for (const auto& s : set.samples) targets.push_back(s.target);
    return loss_mse(preds, targets);
}

TrainResult train(AttentionForecaster model, const SampleSet& train_set, const SampleSet& val_set,
                  const ModelConfig& config) {
    config.validate();
    if (train_set.empty() || val_set.empty()) throw Error(ErrorCode::InsufficientData, "train: empty sample set");
    if (train_set.window_size() != config.input_len_bars * config.n_features)
        throw Error(ErrorCode::ShapeMismatch, "train: sample shape does not match model config");

    Rng rng(mix_seed(config.seed, 0x5eed));
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<const Sample*> batch;
    std::vector<double> grad;
    std::vector<double> best_params(model.params().begin(), model.params().end());
    double best_val = std::numeric_limits<double>::infinity();
    TrainResult result{model, {}, 0};
    auto params = model.params();

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t stop = std::min(order.size(), start + config.batch_size);
            batch.clear();
            for (std::size_t k = start; k < stop; ++k) batch.push_back(&train_set.samples[order[k]]);
            double loss = 0.0;
            try {
                loss = backward(model, batch, grad);
            } catch (const Error& e) {
                if (e.code() == ErrorCode::NonFiniteGradient || e.code() == ErrorCode::NonFiniteActivation)
                    throw Error(ErrorCode::TrainingDiverged, std::string("epoch ") + std::to_string(epoch) + ": " + e.what());
                throw;
            }
            if (!std::isfinite(loss)) throw Error(ErrorCode::TrainingDiverged, "non-finite training loss");
            epoch_loss += loss * static_cast<double>(stop - start);
            if (config.clip_norm > 0.0) {
                double sq = 0.0;
                for (double g : grad) sq += g * g;
                const double norm = std::sqrt(sq);
                if (norm > config.clip_norm) {
                    const double f = config.clip_norm / norm;
                    for (double& g : grad) g *= f;
                }
            }
            for (std::size_t k = 0; k < params.size(); ++k) params[k] -= config.learning_rate * grad[k];
        }
        double val = 0.0;
        try {
            val = evaluate_mse(model, val_set);
        } catch (const Error& e) {
            if (e.code() == ErrorCode::NonFiniteActivation) throw Error(ErrorCode::TrainingDiverged, e.what());
            throw;
        }
        if (!std::isfinite(val)) throw Error(ErrorCode::TrainingDiverged, "non-finite validation loss");
        result.history.push_back({epoch, epoch_loss / static_cast<double>(order.size()), val});
        if (val < best_val) {
            best_val = val;
            result.best_epoch = epoch;
            best_params.assign(params.begin(), params.end());
        }
    }
    std::copy(best_params.begin(), best_params.end(), params.begin());
    result.model = std::move(model);
    return result;
}

void write_history_csv(std::ostream& out, const std::vector<EpochLoss>& history) {
    out << "epoch,train_mse,val_mse\n";
    for (const auto& h : history) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", h.epoch, h.train_mse, h.val_mse);
        out << buf;
    }
}

} // namespace clusterfx
