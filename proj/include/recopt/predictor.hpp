#pragma once

#include <Eigen/Dense>

#include "json.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace recopt {

/// Single-layer recurrent next-answer model:
///   h_t = tanh(W_in x_t + W_rec h_{t-1} + b),  y_{t+1} = sigmoid(w_out . h_t + b_out).
struct PredictorModel {
    Eigen::MatrixXd w_in;   // H x I
    Eigen::MatrixXd w_rec;  // H x H
    Eigen::VectorXd bias;   // H
    Eigen::VectorXd w_out;  // H
    double b_out = 0.0;

    /// Uniform init in +-1/sqrt(hidden), zero biases.
    static PredictorModel init(std::size_t input_width, std::size_t hidden, std::uint64_t seed);
    static PredictorModel zeros(std::size_t input_width, std::size_t hidden);

    std::size_t input_width() const { return static_cast<std::size_t>(w_in.cols()); }
    std::size_t hidden_width() const { return static_cast<std::size_t>(w_in.rows()); }
    bool finite() const;

    nlohmann::json to_json() const;
    static PredictorModel from_json(const nlohmann::json& j);
};

struct StepOutput {
    Eigen::VectorXd hidden;
    double prob = 0.5;
};

/// Throws std::invalid_argument on a width mismatch.
StepOutput step(const PredictorModel& model, const Eigen::VectorXd& x, const Eigen::VectorXd& h_prev);

/// One student's inputs: row t is x_t, targets[t] is the answer x_t predicts.
struct PredictorSequence {
    Eigen::MatrixXd inputs;  // T x I
    std::vector<int> targets;
};

struct PredictorGradient {
    Eigen::MatrixXd w_in;
    Eigen::MatrixXd w_rec;
    Eigen::VectorXd bias;
    Eigen::VectorXd w_out;
    double b_out = 0.0;

    static PredictorGradient zeros_like(const PredictorModel& m);
};

/// Summed cross-entropy over the sequence. When `keep_mask` (T x H, already
/// scaled by 1/keep) is given it multiplies the hidden state on its way to
/// the output head. Full backpropagation through time is accumulated into
/// `grad` when non-null.
double sequence_loss(const PredictorModel& model, const PredictorSequence& seq,
                     const Eigen::MatrixXd* keep_mask = nullptr, PredictorGradient* grad = nullptr);

/// Forward pass only; one probability per step.
std::vector<double> predict_sequence(const PredictorModel& model, const PredictorSequence& seq);

struct PredictorConfig {
    double lr = 0.001;
    std::size_t batch = 256;  // predictions per update
    double dropout = 0.5;
    std::size_t epochs = 20;
    std::uint64_t seed = 7;
    std::size_t hidden = 64;
    double validation_fraction = 0.1;
    std::size_t patience = 5;
};

struct TrainHistory {
    std::vector<double> train_loss;       // mean per prediction
    std::vector<double> validation_loss;  // mean per prediction, empty without validation
    std::size_t best_epoch = 0;
};

/// Adam over mini-batches of whole sequences, dropout on the hidden-to-output
/// path, early stopping on a held-out share of `train`. The model keeps the
/// best validation parameters. Throws std::invalid_argument on an empty set
/// and std::runtime_error on divergence.
TrainHistory train_predictor(PredictorModel& model, const std::vector<PredictorSequence>& train,
                             const PredictorConfig& config);

struct EvalReport {
    std::optional<double> auc;  // absent for a single-class test set
    double acc = 0.0;
    double rmse = 0.0;
    std::size_t n_predictions = 0;
    nlohmann::json config = nlohmann::json::object();

    nlohmann::json to_json() const;
};

/// Throws std::invalid_argument when the sequences hold no prediction.
EvalReport evaluate(const PredictorModel& model, const std::vector<PredictorSequence>& test);

}  // namespace recopt
