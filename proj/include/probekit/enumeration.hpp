#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "probekit/controls.hpp"
#include "probekit/datamodel.hpp"
#include "probekit/probe.hpp"
#include "probekit/synth.hpp"

// Exact expectations over a finite input code. An arm pairs each code c with
// its probability w(c), the true target distribution p(Y|c) and the vector
// the probe sees for it. With synthetic ground truth every quantity of the
// cross-entropy decomposition becomes a finite sum over codes.
namespace probekit {

class TheoryUnavailable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Maps a batch of input vectors (rows) to label log-probabilities (rows).
using Predictor = std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>;

Predictor probe_predictor(ProbeParameters params);
// Exact lookup predictor; inputs not in the table raise std::out_of_range.
Predictor table_predictor(std::vector<std::vector<double>> inputs,
                          std::vector<std::vector<double>> log_probs);

struct EnumeratedArm {
  std::vector<double> weights;               // w(c), sums to 1
  std::vector<std::vector<double>> targets;  // p(Y | c)
  std::vector<std::vector<double>> inputs;   // vector presented for c

  std::size_t size() const { return weights.size(); }
  std::size_t label_count() const { return targets.empty() ? 0 : targets.front().size(); }

  // Merges codes whose input vectors are bit-identical, so that I(Y; code)
  // equals I(Y; input vector).
  EnumeratedArm merged() const;
  std::vector<double> target_marginal() const;
  std::vector<double> joint() const;  // codes x labels, row-major
};

EnumeratedArm probing_arm(const SyntheticGroundTruth& truth);
EnumeratedArm control_task_arm(const SyntheticGroundTruth& truth, const ControlTaskAssignment& a);
EnumeratedArm control_function_arm(const SyntheticGroundTruth& truth,
                                   const ControlFunctionAssignment& a);
// The probing arm reweighted by the empirical type frequencies of one split.
EnumeratedArm empirical_probing_arm(const SyntheticGroundTruth& truth,
                                    const LabeledEmbeddingDataset& ds, Split split);

// Log-probabilities of the predictor for every code, codes x labels.
Eigen::MatrixXd arm_predictions(const EnumeratedArm& arm, const Predictor& predictor);

double arm_target_entropy(const EnumeratedArm& arm);        // H(Y)
double arm_mutual_information(const EnumeratedArm& arm);    // I(Y; input)
double arm_cross_entropy(const EnumeratedArm& arm, const Predictor& predictor);
double arm_conditional_kl(const EnumeratedArm& arm, const Predictor& predictor);
// KL(p(Y) || sum_c w(c) q(Y|c)): the probe's input-averaged prediction
// against the target marginal.
double arm_marginal_kl(const EnumeratedArm& arm, const Predictor& predictor);

struct Weighting {
  enum class Kind { true_joint, empirical_split };
  Kind kind = Kind::true_joint;
  Split split = Split::test;
  const LabeledEmbeddingDataset* dataset = nullptr;

  static Weighting true_joint() { return {}; }
  static Weighting empirical(const LabeledEmbeddingDataset& ds, Split s) {
    return {Kind::empirical_split, s, &ds};
  }
};

// E_z[ KL(p(T|Z=z) || q(T|R=embed(z))) ] under the chosen weighting.
double conditional_kl(const SyntheticGroundTruth& truth, const TrainedProbe& probe,
                      const Weighting& weighting);
double conditional_kl(const SyntheticGroundTruth& truth, const Predictor& predictor,
                      const Weighting& weighting);

}  // namespace probekit
