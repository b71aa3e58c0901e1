#pragma once

#include "clusterfx/features.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace clusterfx {

struct ModelConfig {
    std::size_t hidden_size = 32;
    std::size_t n_features = 6;
    std::size_t input_len_bars = 9;
    double learning_rate = 0.05;
    std::size_t epochs = 50;
    std::size_t batch_size = 32;
    std::uint64_t seed = 42;
    /// Divide attention scores by sqrt(2 * hidden_size); off by default.
    bool scaled_attention = false;
    /// Global gradient-norm clip; <= 0 disables clipping.
    double clip_norm = 5.0;

    void validate() const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Named slice of the flat parameter vector; column-major rows x cols.
struct ParamBlock {
    std::string name;
    std::size_t offset = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;

    std::size_t size() const { return rows * cols; }
};

/// Bidirectional LSTM encoder, dot-product attention between the final hidden
/// state and each timestep output, a single post-attention LSTM step and a
/// linear head. Gate order inside every LSTM block is (input, forget, cell,
/// output).
///
/// Parameter blocks, with H = hidden_size and F = n_features:
///   fwd.W 4H x F, fwd.U 4H x H, fwd.b 4H      (forward encoder)
///   bwd.W 4H x F, bwd.U 4H x H, bwd.b 4H      (backward encoder)
///   post.W 8H x 2H, post.U 8H x 2H, post.b 8H (post-attention cell)
///   head.w 1 x 4H, head.b 1
class AttentionForecaster {
public:
    explicit AttentionForecaster(const ModelConfig& config);

    const ModelConfig& config() const { return config_; }
    std::span<double> params() { return params_; }
    std::span<const double> params() const { return params_; }
    const std::vector<ParamBlock>& blocks() const { return blocks_; }
    const ParamBlock& block(const std::string& name) const;
    std::size_t parameter_count() const { return params_.size(); }

    static std::vector<ParamBlock> layout(const ModelConfig& config);
    static std::size_t parameter_count(const ModelConfig& config);

    Eigen::Map<const Eigen::MatrixXd> matrix(const ParamBlock& b) const;
    Eigen::Map<Eigen::MatrixXd> matrix(const ParamBlock& b);

    std::string to_json() const;
    static AttentionForecaster from_json(const std::string& text);

    friend bool operator==(const AttentionForecaster& a, const AttentionForecaster& b) {
        return a.config_ == b.config_ && a.params_ == b.params_;
    }

private:
    ModelConfig config_;
    std::vector<ParamBlock> blocks_;
    std::vector<double> params_;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) per block from the config seed.
AttentionForecaster init_model(const ModelConfig& config);

struct LstmStepCache {
    Eigen::VectorXd i, f, g, o, c, tanh_c, h;
};

struct LstmRunCache {
    Eigen::VectorXd h0, c0;
    std::vector<LstmStepCache> steps;
};

struct ForwardTrace {
    std::vector<Eigen::VectorXd> inputs;  ///< per timestep, F
    LstmRunCache forward_cell;            ///< processes t = 0..T-1
    LstmRunCache backward_cell;           ///< processes t = T-1..0
    std::vector<Eigen::VectorXd> outputs; ///< per timestep [h_fwd; h_bwd], 2H
    Eigen::VectorXd final_hidden;         ///< [h_fwd(T-1); h_bwd(0)]
    Eigen::VectorXd final_cell;
    std::vector<double> scores;
    std::vector<double> attention;        ///< softmax(scores)
    Eigen::VectorXd context;              ///< sum_t attention_t * outputs_t
    LstmRunCache post_cell;               ///< one step on the context from (final_hidden, final_cell)
    Eigen::VectorXd head_input;           ///< [post output; final_hidden]
    double prediction = 0.0;
};

/// Throws ShapeMismatch when the window is not input_len x n_features and
/// NonFiniteActivation when the prediction is not finite.
ForwardTrace forward(const AttentionForecaster& model, std::span<const double> window);
void forward_into(const AttentionForecaster& model, std::span<const double> window, ForwardTrace& trace);
double predict_scaled(const AttentionForecaster& model, std::span<const double> window);

struct ErrorMetrics {
    double mse = 0.0;
    double rmse = 0.0;
    double mae = 0.0;
};

double loss_mse(std::span<const double> predictions, std::span<const double> targets);
ErrorMetrics error_metrics(std::span<const double> predictions, std::span<const double> targets);

/// Batch-mean squared error and its exact gradient with respect to every
/// parameter (layout matches model.params()). Returns the loss.
double backward(const AttentionForecaster& model, std::span<const Sample* const> batch, std::vector<double>& gradient);
double backward(const AttentionForecaster& model, const SampleSet& batch, std::vector<double>& gradient);

std::vector<double> predict_all(const AttentionForecaster& model, const SampleSet& set);
double evaluate_mse(const AttentionForecaster& model, const SampleSet& set);

struct EpochLoss {
    std::size_t epoch = 0;
    double train_mse = 0.0;
    double val_mse = 0.0;

    friend bool operator==(const EpochLoss&, const EpochLoss&) = default;
};

struct TrainResult {
    AttentionForecaster model;
    std::vector<EpochLoss> history;
    std::size_t best_epoch = 0;
};

/// Seeded shuffling and mini-batch gradient descent with gradient-norm
/// clipping. Keeps the parameters of the best validation epoch. Throws
/// TrainingDiverged on a non-finite loss.
TrainResult train(AttentionForecaster model, const SampleSet& train_set, const SampleSet& val_set,
                  const ModelConfig& config);

void write_history_csv(std::ostream& out, const std::vector<EpochLoss>& history);

} // namespace clusterfx
