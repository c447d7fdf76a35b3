#include "probekit/criteria.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace probekit {

using json = nlohmann::json;

EvalResult mean_eval(std::span<const EvalResult> evals) {
  if (evals.empty()) throw std::invalid_argument("no evaluations to average");
  EvalResult m;
  for (const auto& e : evals) {
    m.cross_entropy += e.cross_entropy;
    m.accuracy += e.accuracy;
    m.token_count += e.token_count;
  }
  const double n = static_cast<double>(evals.size());
  m.cross_entropy /= n;
  m.accuracy /= n;
  m.token_count /= evals.size();
  return m;
}

CriteriaRecord compute_criteria(std::span<const EvalResult> probe_evals,
                                std::span<const EvalResult> control_task_evals,
                                std::span<const EvalResult> control_function_evals) {
  if (probe_evals.size() != control_task_evals.size() ||
      probe_evals.size() != control_function_evals.size())
    throw std::invalid_argument("mismatched seed counts across arms: " +
                                std::to_string(probe_evals.size()) + "/" +
                                std::to_string(control_task_evals.size()) + "/" +
                                std::to_string(control_function_evals.size()));
  CriteriaRecord r;
  r.probe.assign(probe_evals.begin(), probe_evals.end());
  r.control_task.assign(control_task_evals.begin(), control_task_evals.end());
  r.control_function.assign(control_function_evals.begin(), control_function_evals.end());
  r.probe_mean = mean_eval(probe_evals);
  r.control_task_mean = mean_eval(control_task_evals);
  r.control_function_mean = mean_eval(control_function_evals);
  r.t_acc = r.probe_mean.accuracy - r.control_task_mean.accuracy;
  r.t_ent = r.control_task_mean.cross_entropy - r.probe_mean.cross_entropy;
  r.f_acc = r.probe_mean.accuracy - r.control_function_mean.accuracy;
  r.f_ent = r.control_function_mean.cross_entropy - r.probe_mean.cross_entropy;
  return r;
}

TheoryErrorReport theory_errors(const SyntheticGroundTruth& truth, const ProbeTriple& probes,
                                const ControlTaskAssignment& task,
                                const ControlFunctionAssignment& function,
                                const LabeledEmbeddingDataset* dataset) {
  const EnumeratedArm probing = probing_arm(truth);
  const EnumeratedArm ctask = control_task_arm(truth, task);
  const EnumeratedArm cfunc = control_function_arm(truth, function);

  TheoryErrorReport r;
  r.h_t = true_label_entropy(truth);
  r.i_true = true_mutual_information(truth);
  r.h_ct = arm_target_entropy(ctask);
  r.i_ct_r = arm_mutual_information(ctask);
  r.i_t_cr = arm_mutual_information(cfunc);

  r.ce_probe = arm_cross_entropy(probing, probes.probe);
  r.ce_control_task = arm_cross_entropy(ctask, probes.control_task);
  r.ce_control_function = arm_cross_entropy(cfunc, probes.control_function);
  r.kl_probe = arm_conditional_kl(probing, probes.probe);
  r.kl_control_task = arm_conditional_kl(ctask, probes.control_task);
  r.kl_control_function = arm_conditional_kl(cfunc, probes.control_function);

  r.decomposition_rhs = r.h_t - r.i_true + r.kl_probe;
  r.decomposition_residual = r.ce_probe - r.decomposition_rhs;

  r.gain_true = r.i_true - r.i_t_cr;
  r.gain_estimate = r.ce_control_function - r.ce_probe;
  r.gain_identity_residual =
      r.gain_estimate - (r.i_true - r.i_t_cr + (r.kl_control_function - r.kl_probe));

  r.delta_p = r.gain_true - r.gain_estimate;
  r.delta_p_kl = r.kl_probe - r.kl_control_function;
  r.delta_p_residual = r.delta_p - r.delta_p_kl;

  r.const_term = r.h_t - r.h_ct + r.i_ct_r;
  r.delta_h = r.i_true - (r.ce_control_task - r.ce_probe);
  r.delta_h_kl = r.kl_probe - r.kl_control_task + r.const_term;
  r.delta_h_residual = r.delta_h - r.delta_h_kl;

  r.kl_marginal_control_task = arm_marginal_kl(ctask, probes.control_task);
  r.kl_marginal_control_function = arm_marginal_kl(cfunc, probes.control_function);
  r.eq3_lhs = r.delta_h - r.delta_p;
  r.eq3_rhs = r.const_term - r.kl_marginal_control_function + r.kl_marginal_control_task;
  r.eq3_residual = r.eq3_lhs - r.eq3_rhs;
  r.eq3_rhs_derived = r.const_term - r.kl_marginal_control_task + r.kl_marginal_control_function;
  r.eq3_residual_derived = r.eq3_lhs - r.eq3_rhs_derived;
  r.eq3_flagged = std::abs(r.eq3_residual) > kEq3FlagThreshold;

  if (dataset != nullptr) {
    const EnumeratedArm empirical = empirical_probing_arm(truth, *dataset, Split::test);
    r.ce_probe_empirical = arm_cross_entropy(empirical, probes.probe);
    r.kl_probe_empirical = arm_conditional_kl(empirical, probes.probe);
  }
  return r;
}

TheoryErrorReport theory_errors(const SyntheticGroundTruth& truth, const TrainedProbe& probe,
                                const TrainedProbe& control_task_probe,
                                const TrainedProbe& control_function_probe,
                                const ControlTaskAssignment& task,
                                const ControlFunctionAssignment& function,
                                const LabeledEmbeddingDataset* dataset) {
  for (const TrainedProbe* p : {&probe, &control_task_probe, &control_function_probe})
    if (p->params.input_dim() != truth.embedding_dim())
      throw std::invalid_argument("probe input width does not match the ground truth embedding");
  return theory_errors(truth,
                       {probe_predictor(probe.params), probe_predictor(control_task_probe.params),
                        probe_predictor(control_function_probe.params)},
                       task, function, dataset);
}

namespace {

std::vector<double> log_row(const std::vector<double>& p) {
  std::vector<double> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i)
    out[i] = p[i] > 0.0 ? std::log(p[i]) : -std::numeric_limits<double>::infinity();
  return out;
}

Predictor exact_predictor(const EnumeratedArm& arm) {
  const EnumeratedArm m = arm.merged();
  std::vector<std::vector<double>> logs;
  for (const auto& row : m.targets) logs.push_back(log_row(row));
  return table_predictor(m.inputs, std::move(logs));
}

}  // namespace

ProbeTriple perfect_probes(const SyntheticGroundTruth& truth, const ControlTaskAssignment& task,
                           const ControlFunctionAssignment& function) {
  return {exact_predictor(probing_arm(truth)), exact_predictor(control_task_arm(truth, task)),
          exact_predictor(control_function_arm(truth, function))};
}

json to_json(const CriteriaRecord& r, double scale) {
  auto eval = [scale](const EvalResult& e) {
    return json{{"cross_entropy", e.cross_entropy * scale}, {"accuracy", e.accuracy}, {"tokens", e.token_count}};
  };
  json per_seed = json::array();
  for (std::size_t i = 0; i < r.probe.size(); ++i) {
    json s{{"probe", eval(r.probe[i])},
           {"control_task", eval(r.control_task[i])},
           {"control_function", eval(r.control_function[i])}};
    if (i < r.seeds.size()) s["seed"] = r.seeds[i];
    per_seed.push_back(s);
  }
  return {{"config_id", r.config_id},
          {"t_acc", r.t_acc},
          {"t_ent", r.t_ent * scale},
          {"f_acc", r.f_acc},
          {"f_ent", r.f_ent * scale},
          {"probe", eval(r.probe_mean)},
          {"control_task", eval(r.control_task_mean)},
          {"control_function", eval(r.control_function_mean)},
          {"per_seed", per_seed}};
}

json to_json(const TheoryErrorReport& r, double scale) {
  json j{{"h_t", r.h_t * scale},
         {"i_true", r.i_true * scale},
         {"h_ct", r.h_ct * scale},
         {"i_ct_r", r.i_ct_r * scale},
         {"i_t_cr", r.i_t_cr * scale},
         {"ce_probe", r.ce_probe * scale},
         {"ce_control_task", r.ce_control_task * scale},
         {"ce_control_function", r.ce_control_function * scale},
         {"kl_probe", r.kl_probe * scale},
         {"kl_control_task", r.kl_control_task * scale},
         {"kl_control_function", r.kl_control_function * scale},
         {"decomposition_rhs", r.decomposition_rhs * scale},
         {"decomposition_residual", r.decomposition_residual * scale},
         {"gain_true", r.gain_true * scale},
         {"gain_estimate", r.gain_estimate * scale},
         {"gain_identity_residual", r.gain_identity_residual * scale},
         {"delta_p", r.delta_p * scale},
         {"delta_p_kl", r.delta_p_kl * scale},
         {"delta_p_residual", r.delta_p_residual * scale},
         {"const_term", r.const_term * scale},
         {"delta_h", r.delta_h * scale},
         {"delta_h_kl", r.delta_h_kl * scale},
         {"delta_h_residual", r.delta_h_residual * scale},
         {"kl_marginal_control_task", r.kl_marginal_control_task * scale},
         {"kl_marginal_control_function", r.kl_marginal_control_function * scale},
         {"eq3_lhs", r.eq3_lhs * scale},
         {"eq3_rhs", r.eq3_rhs * scale},
         {"eq3_residual", r.eq3_residual * scale},
         {"eq3_rhs_derived", r.eq3_rhs_derived * scale},
         {"eq3_residual_derived", r.eq3_residual_derived * scale},
         {"eq3_flagged", r.eq3_flagged}};
  if (r.ce_probe_empirical) j["ce_probe_empirical_test"] = *r.ce_probe_empirical * scale;
  if (r.kl_probe_empirical) j["kl_probe_empirical_test"] = *r.kl_probe_empirical * scale;
  return j;
}

}  // namespace probekit
