#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "probekit/enumeration.hpp"
#include "probekit/probe.hpp"

namespace probekit {

// The four probe-selection criteria of one configuration, from seed-averaged
// test metrics of the three arms:
//   t_acc = probe.acc - control_task.acc      (selectivity)
//   t_ent = control_task.ce - probe.ce
//   f_acc = probe.acc - control_function.acc
//   f_ent = control_function.ce - probe.ce    (gain estimate)
struct CriteriaRecord {
  std::string config_id;
  double t_acc = 0.0;
  double t_ent = 0.0;
  double f_acc = 0.0;
  double f_ent = 0.0;
  EvalResult probe_mean, control_task_mean, control_function_mean;
  std::vector<EvalResult> probe, control_task, control_function;  // per seed
  std::vector<std::uint64_t> seeds;
};

EvalResult mean_eval(std::span<const EvalResult> evals);

CriteriaRecord compute_criteria(std::span<const EvalResult> probe_evals,
                                std::span<const EvalResult> control_task_evals,
                                std::span<const EvalResult> control_function_evals);

// Exact error analysis of one probe triple against synthetic ground truth.
// All values are nats under true-joint weighting.
struct TheoryErrorReport {
  double h_t = 0.0;       // H(T)
  double i_true = 0.0;    // I(T;Z) = I(T;R)
  double h_ct = 0.0;      // H(c(T))
  double i_ct_r = 0.0;    // I(c(T);R)
  double i_t_cr = 0.0;    // I(T;c(R))

  double ce_probe = 0.0;  // H(p, q_theta)
  double ce_control_task = 0.0;
  double ce_control_function = 0.0;
  double kl_probe = 0.0;  // KL(p || q_theta); q_phi is the same probe
  double kl_control_task = 0.0;
  double kl_control_function = 0.0;

  // H(p,q) against H(T) - I(T;Z) + KL(p||q)
  double decomposition_rhs = 0.0;
  double decomposition_residual = 0.0;

  double gain_true = 0.0;      // I(T;R) - I(T;c(R))
  double gain_estimate = 0.0;  // H(p_c, q_phi_c) - H(p, q_phi)
  double gain_identity_residual = 0.0;

  double delta_p = 0.0;     // gain_true - gain_estimate
  double delta_p_kl = 0.0;  // KL(p||q_phi) - KL(p_c||q_phi_c)
  double delta_p_residual = 0.0;

  double const_term = 0.0;  // H(T) - H(c(T)) + I(c(T);R)
  double delta_h = 0.0;     // from H(p_c,q_theta_c) - H(p,q_theta) = I(T;R) - delta_h
  double delta_h_kl = 0.0;  // KL(p||q_theta) - KL(p_c||q_theta_c) + const_term
  double delta_h_residual = 0.0;

  double kl_marginal_control_task = 0.0;      // KL(p(c(T)) || avg q_theta_c)
  double kl_marginal_control_function = 0.0;  // KL(p(T) || avg q_phi_c)
  double eq3_lhs = 0.0;                       // delta_h - delta_p
  double eq3_rhs = 0.0;  // const - KL(p(T)||q_phi_c(T)) + KL(p(c(T))||q_theta_c(c(T)))
  double eq3_residual = 0.0;
  // Same simplification with the signs that follow from subtracting the
  // delta_p KL form from the delta_h KL form.
  double eq3_rhs_derived = 0.0;
  double eq3_residual_derived = 0.0;
  bool eq3_flagged = false;  // |eq3_residual| > kEq3FlagThreshold

  // Probing arm under the empirical test-split type frequencies (diagnostic).
  std::optional<double> ce_probe_empirical;
  std::optional<double> kl_probe_empirical;
};

inline constexpr double kEq3FlagThreshold = 0.05;

struct ProbeTriple {
  Predictor probe;
  Predictor control_task;
  Predictor control_function;
};

TheoryErrorReport theory_errors(const SyntheticGroundTruth& truth, const ProbeTriple& probes,
                                const ControlTaskAssignment& task,
                                const ControlFunctionAssignment& function,
                                const LabeledEmbeddingDataset* dataset = nullptr);

TheoryErrorReport theory_errors(const SyntheticGroundTruth& truth, const TrainedProbe& probe,
                                const TrainedProbe& control_task_probe,
                                const TrainedProbe& control_function_probe,
                                const ControlTaskAssignment& task,
                                const ControlFunctionAssignment& function,
                                const LabeledEmbeddingDataset* dataset = nullptr);

// Predictors that output the true conditional of each arm exactly.
ProbeTriple perfect_probes(const SyntheticGroundTruth& truth, const ControlTaskAssignment& task,
                           const ControlFunctionAssignment& function);

nlohmann::json to_json(const CriteriaRecord& r, double scale = 1.0);
nlohmann::json to_json(const TheoryErrorReport& r, double scale = 1.0);

}  // namespace probekit
