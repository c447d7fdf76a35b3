#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "probekit/controls.hpp"
#include "probekit/datamodel.hpp"

// The diagnostic classifier q(T|R): ReLU MLP with a log-softmax head, trained
// by cross entropy with Adam and best-dev-loss checkpointing.
namespace probekit {

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(std::size_t step, const std::string& what)
      : std::runtime_error(what), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

struct ProbeConfig {
  std::size_t hidden_layers = 1;
  std::size_t hidden_width = 40;
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  std::optional<std::size_t> max_gradient_steps;  // nullopt: bounded by max_epochs only
  std::size_t batch_size = 128;
  std::size_t max_epochs = 400;
  std::uint64_t seed = 73;

  void validate() const;
  bool operator==(const ProbeConfig&) const = default;
};

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

struct ProbeParameters {
  std::vector<DenseLayer> layers;

  std::size_t input_dim() const { return layers.empty() ? 0 : static_cast<std::size_t>(layers.front().weight.cols()); }
  std::size_t output_dim() const { return layers.empty() ? 0 : static_cast<std::size_t>(layers.back().weight.rows()); }
  std::size_t parameter_count() const;
  bool all_finite() const;

  // Layer order; within a layer the weight row-major, then the bias.
  std::vector<double> flatten() const;
  void assign_flat(std::span<const double> values);
  ProbeParameters zeros_like() const;

  bool operator==(const ProbeParameters& other) const;
};

struct TraceEntry {
  std::size_t step = 0;
  // Objective including the decay penalty: full train split at step 0, then
  // the mean minibatch objective of each epoch.
  double train_loss = 0.0;
  double dev_loss = 0.0;
};

struct TrainedProbe {
  ProbeParameters params;  // best-dev checkpoint
  ProbeConfig config;
  std::vector<TraceEntry> trace;
  std::size_t steps_taken = 0;
  std::size_t best_step = 0;
  double best_dev_loss = 0.0;
};

struct EvalResult {
  double cross_entropy = 0.0;  // nats per token
  double accuracy = 0.0;
  std::size_t token_count = 0;
};

// What a training run predicts from what: gold labels, control-task labels,
// or gold labels from control-function vectors.
struct TargetSource {
  enum class Kind { gold, control_task, control_function };
  Kind kind = Kind::gold;
  const ControlTaskAssignment* task = nullptr;
  const ControlFunctionAssignment* function = nullptr;

  static TargetSource gold() { return {}; }
  static TargetSource control(const ControlTaskAssignment& a) { return {Kind::control_task, &a, nullptr}; }
  static TargetSource control(const ControlFunctionAssignment& a) {
    return {Kind::control_function, nullptr, &a};
  }
};

// Dense per-split inputs and label ids, resolved once from (dataset, targets).
struct ProbeData {
  std::size_t input_dim = 0;
  std::size_t num_labels = 0;
  std::array<Eigen::MatrixXd, 3> inputs;  // tokens x input_dim
  std::array<std::vector<int>, 3> labels;

  const Eigen::MatrixXd& x(Split s) const { return inputs[static_cast<std::size_t>(s)]; }
  const std::vector<int>& y(Split s) const { return labels[static_cast<std::size_t>(s)]; }
};

ProbeData materialize(const LabeledEmbeddingDataset& ds, const TargetSource& targets);

ProbeParameters init_probe(const ProbeConfig& config, std::size_t input_dim, std::size_t num_labels);

// Row-wise log-probabilities, tokens x labels.
Eigen::MatrixXd forward(const ProbeParameters& params, const Eigen::MatrixXd& inputs);
std::vector<double> forward_one(const ProbeParameters& params, std::span<const double> input);

struct LossAndGradients {
  double loss = 0.0;  // mean NLL + weight_decay/2 * sum of squared weights
  ProbeParameters gradients;
};

LossAndGradients loss_and_gradients(const ProbeParameters& params, const Eigen::MatrixXd& inputs,
                                    std::span<const int> labels, double weight_decay);

TrainedProbe train(const ProbeConfig& config, const ProbeData& data);
TrainedProbe train(const ProbeConfig& config, const LabeledEmbeddingDataset& ds,
                   const TargetSource& targets);

EvalResult evaluate(const ProbeParameters& params, const ProbeData& data, Split split);
EvalResult evaluate(const TrainedProbe& probe, const LabeledEmbeddingDataset& ds,
                    const TargetSource& targets, Split split);

// Checkpoint dump: manifest.json (config, shapes, trace) + params.f64.
void save_probe(const TrainedProbe& probe, const std::filesystem::path& dir);
TrainedProbe load_probe(const std::filesystem::path& dir);

}  // namespace probekit
