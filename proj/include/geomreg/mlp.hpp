#pragma once

#include "geomreg/dataset.hpp"
#include "geomreg/penalty.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace geomreg {

enum class OutputHead { linear, softmax };

// One affine map. The weight is stored inputs x units, i.e. the transpose
// of the usual units x inputs convention, so that a Gram over the layer's
// inputs multiplies it from the left.
struct DenseLayer {
    Eigen::MatrixXd weight;
    Eigen::VectorXd offset;
};

struct MlpModel {
    std::vector<DenseLayer> layers;
    OutputHead head = OutputHead::linear;

    std::size_t depth() const { return layers.size(); }
    std::size_t input_dim() const;
    std::size_t output_dim() const;
    std::vector<std::size_t> layer_sizes() const;
    double max_abs_parameter() const;
    void validate() const;
};

// layer_sizes = (inputs, hidden..., outputs). Weights ~ U(-a, a) with
// a = sqrt(6 / (fan_in + fan_out)); offsets zero.
MlpModel init_model(std::span<const std::size_t> layer_sizes, OutputHead head, std::uint64_t seed);

// ReLU hidden layers; softmax rows sum to one for the softmax head.
Eigen::MatrixXd forward(const MlpModel& model, const Eigen::MatrixXd& inputs);

// Post-activation values of hidden layer `layer` (1-based).
Eigen::MatrixXd hidden_activations(const MlpModel& model, const Eigen::MatrixXd& inputs, std::size_t layer);

struct Gradients {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> offsets;
};

struct LossResult {
    double objective = 0.0;  // data_loss + penalty
    double data_loss = 0.0;
    double penalty = 0.0;
    Gradients grads;
};

// Where a penalty lands in the network: the full penalty on weight matrix
// `covariance_layer` (whose inputs the Gram describes), the companion
// (plain l2 / l1) part on every other weight matrix, nothing on offsets.
struct Regularization {
    PenaltyConfig penalty;
    std::size_t covariance_layer = 0;
};

// Targets are n x outputs: the response column for the linear head (mean
// squared error), one-hot rows for the softmax head (cross-entropy).
LossResult loss_and_grads(const MlpModel& model, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                          const Regularization& reg);

Eigen::MatrixXd target_matrix(const Dataset& data);

struct SgdOptions {
    double learning_rate = 0.01;
};

struct AdamOptions {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

using Optimizer = std::variant<SgdOptions, AdamOptions>;

struct EarlyStopping {
    double validation_fraction = 0.2;
    std::size_t patience = 10;
};

// Rebuild the Gram from hidden layer `layer` every `every_epochs` epochs and
// move the covariance term onto the weights consuming that layer.
struct GramRefresh {
    std::size_t layer = 1;
    std::size_t every_epochs = 10;
    double delta = kDefaultGramDelta;
};

struct TrainConfig {
    std::size_t epochs = 200;
    std::size_t batch_size = 32;
    Optimizer optimizer = AdamOptions{};
    std::uint64_t seed = 0;
    std::optional<EarlyStopping> early_stopping;
    std::optional<GramRefresh> gram_refresh;

    void validate() const;
};

struct TrainHistory {
    std::vector<double> train_loss;  // mean batch objective per epoch
    std::vector<double> val_loss;    // validation data loss, if early stopping
    std::size_t best_epoch = 0;
    bool stopped_early = false;
};

void write_history_csv(const TrainHistory& history, std::ostream& out);

class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(const std::string& what, TrainHistory history)
        : std::runtime_error(what), history_(std::move(history)) {}
    const TrainHistory& history() const { return history_; }

private:
    TrainHistory history_;
};

struct TrainResult {
    MlpModel model;
    TrainHistory history;
};

// Mini-batch training; deterministic given config.seed. With early stopping
// the parameters of the best validation epoch are returned. Throws
// TrainingDiverged when the objective exceeds 1e12 or is not finite.
TrainResult train(MlpModel model, const Dataset& data, const TrainConfig& config, const PenaltyConfig& penalty);

// Linear head: first output column.
Eigen::VectorXd predict_values(const MlpModel& model, const Eigen::MatrixXd& features);
// Softmax head: argmax per row, ties to the lower class index.
std::vector<int> predict_classes(const MlpModel& model, const Eigen::MatrixXd& features);

void to_json(nlohmann::json& j, const MlpModel& model);
void from_json(const nlohmann::json& j, MlpModel& model);

}  // namespace geomreg
