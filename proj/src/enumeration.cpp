#include "probekit/enumeration.hpp"

#include <cmath>
#include <map>
#include <span>
#include <string>

#include "probekit/infotheory.hpp"

namespace probekit {

using Eigen::MatrixXd;

Predictor probe_predictor(ProbeParameters params) {
  return [p = std::move(params)](const MatrixXd& x) { return forward(p, x); };
}

Predictor table_predictor(std::vector<std::vector<double>> inputs,
                          std::vector<std::vector<double>> log_probs) {
  if (inputs.size() != log_probs.size() || inputs.empty())
    throw std::invalid_argument("table predictor needs one output row per input");
  std::map<std::vector<double>, std::vector<double>> table;
  for (std::size_t i = 0; i < inputs.size(); ++i) table.emplace(std::move(inputs[i]), std::move(log_probs[i]));
  const auto k = static_cast<Eigen::Index>(table.begin()->second.size());
  return [table = std::move(table), k](const MatrixXd& x) {
    MatrixXd out(x.rows(), k);
    std::vector<double> key(static_cast<std::size_t>(x.cols()));
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      for (Eigen::Index c = 0; c < x.cols(); ++c) key[static_cast<std::size_t>(c)] = x(r, c);
      const auto it = table.find(key);
      if (it == table.end()) throw std::out_of_range("table predictor: unknown input row");
      for (Eigen::Index c = 0; c < k; ++c) out(r, c) = it->second[static_cast<std::size_t>(c)];
    }
    return out;
  };
}

EnumeratedArm EnumeratedArm::merged() const {
  std::map<std::vector<double>, std::size_t> slot;
  EnumeratedArm out;
  const auto k = label_count();
  for (std::size_t c = 0; c < size(); ++c) {
    auto [it, fresh] = slot.emplace(inputs[c], out.size());
    if (fresh) {
      out.weights.push_back(0.0);
      out.targets.emplace_back(k, 0.0);
      out.inputs.push_back(inputs[c]);
    }
    const std::size_t m = it->second;
    out.weights[m] += weights[c];
    for (std::size_t y = 0; y < k; ++y) out.targets[m][y] += weights[c] * targets[c][y];
  }
  for (std::size_t m = 0; m < out.size(); ++m) {
    if (out.weights[m] > 0.0)
      for (auto& v : out.targets[m]) v /= out.weights[m];
    else
      out.targets[m] = targets.front();  // zero-weight group: any valid row
  }
  return out;
}

std::vector<double> EnumeratedArm::target_marginal() const {
  std::vector<double> m(label_count(), 0.0);
  for (std::size_t c = 0; c < size(); ++c)
    for (std::size_t y = 0; y < m.size(); ++y) m[y] += weights[c] * targets[c][y];
  return m;
}

std::vector<double> EnumeratedArm::joint() const {
  const auto k = label_count();
  std::vector<double> j(size() * k);
  for (std::size_t c = 0; c < size(); ++c)
    for (std::size_t y = 0; y < k; ++y) j[c * k + y] = weights[c] * targets[c][y];
  return j;
}

namespace {

void require_enumerable(const SyntheticGroundTruth& truth) {
  if (!truth.enumerable())
    throw TheoryUnavailable("ground truth unavailable: additive vector noise makes I(T;R) non-enumerable");
  truth.validate();
}

}  // namespace

EnumeratedArm probing_arm(const SyntheticGroundTruth& truth) {
  require_enumerable(truth);
  return {truth.p_z, truth.cond, truth.embed};
}

EnumeratedArm control_task_arm(const SyntheticGroundTruth& truth, const ControlTaskAssignment& a) {
  require_enumerable(truth);
  const auto K = truth.type_count();
  if (a.label_count == 0) throw std::invalid_argument("control task with no labels");
  EnumeratedArm arm{truth.p_z, {}, truth.embed};
  if (a.granularity == ControlGranularity::token) {
    // c(T) independent of everything: uniform over the inventory.
    arm.targets.assign(K, std::vector<double>(a.label_count, 1.0 / static_cast<double>(a.label_count)));
    return arm;
  }
  if (a.mapping.size() < K) throw ControlError("control task does not cover every type");
  arm.targets.assign(K, std::vector<double>(a.label_count, 0.0));
  for (std::size_t z = 0; z < K; ++z) arm.targets[z][static_cast<std::size_t>(a.mapping[z])] = 1.0;
  return arm;
}

EnumeratedArm control_function_arm(const SyntheticGroundTruth& truth,
                                   const ControlFunctionAssignment& a) {
  require_enumerable(truth);
  if (a.embedding_dim != truth.embedding_dim())
    throw ControlError("control vectors do not match the embedding width");
  if (a.granularity == ControlGranularity::token) {
    // Pool slot drawn independently of the token: p(T | c(R)) = p(T).
    const auto m = a.vectors.size();
    return {std::vector<double>(m, 1.0 / static_cast<double>(m)),
            std::vector<std::vector<double>>(m, truth.label_marginal()), a.vectors};
  }
  if (a.vectors.size() < truth.type_count()) throw ControlError("control function does not cover every type");
  EnumeratedArm arm{truth.p_z, truth.cond, {}};
  arm.inputs.assign(a.vectors.begin(), a.vectors.begin() + static_cast<std::ptrdiff_t>(truth.type_count()));
  return arm;
}

EnumeratedArm empirical_probing_arm(const SyntheticGroundTruth& truth,
                                    const LabeledEmbeddingDataset& ds, Split split) {
  EnumeratedArm arm = probing_arm(truth);
  std::vector<double> counts(truth.type_count(), 0.0);
  double total = 0.0;
  for (const auto& r : ds.records) {
    if (r.split != split) continue;
    if (r.type_id < 0 || static_cast<std::size_t>(r.type_id) >= counts.size())
      throw DataError("dataset type_id outside the ground truth");
    counts[static_cast<std::size_t>(r.type_id)] += 1.0;
    total += 1.0;
  }
  if (total == 0.0) throw DataError("empty split: " + std::string(split_name(split)));
  for (std::size_t z = 0; z < counts.size(); ++z) arm.weights[z] = counts[z] / total;
  return arm;
}

MatrixXd arm_predictions(const EnumeratedArm& arm, const Predictor& predictor) {
  if (arm.size() == 0) throw std::invalid_argument("empty arm");
  const auto d = static_cast<Eigen::Index>(arm.inputs.front().size());
  MatrixXd x(static_cast<Eigen::Index>(arm.size()), d);
  for (std::size_t c = 0; c < arm.size(); ++c)
    for (Eigen::Index j = 0; j < d; ++j) x(static_cast<Eigen::Index>(c), j) = arm.inputs[c][static_cast<std::size_t>(j)];
  MatrixXd logq = predictor(x);
  if (logq.rows() != x.rows() || static_cast<std::size_t>(logq.cols()) != arm.label_count())
    throw std::invalid_argument("predictor output shape does not match the arm");
  return logq;
}

double arm_target_entropy(const EnumeratedArm& arm) {
  return entropy(Categorical(arm.target_marginal()));
}

double arm_mutual_information(const EnumeratedArm& arm) {
  const EnumeratedArm m = arm.merged();
  const auto j = m.joint();
  return mutual_information(j, m.size(), m.label_count());
}

namespace {

template <typename Term>
double expect_over_codes(const EnumeratedArm& arm, const Predictor& predictor, Term term) {
  const MatrixXd logq = arm_predictions(arm, predictor);
  std::vector<double> row(arm.label_count());
  double total = 0.0;
  for (std::size_t c = 0; c < arm.size(); ++c) {
    if (arm.weights[c] == 0.0) continue;
    for (std::size_t y = 0; y < row.size(); ++y) row[y] = logq(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(y));
    total += arm.weights[c] * term(arm.targets[c], row, "code " + std::to_string(c));
  }
  return total;
}

}  // namespace

double arm_cross_entropy(const EnumeratedArm& arm, const Predictor& predictor) {
  return expect_over_codes(arm, predictor, [](const auto& p, const auto& lq, const std::string& w) {
    return cross_entropy_log(p, lq, w);
  });
}

double arm_conditional_kl(const EnumeratedArm& arm, const Predictor& predictor) {
  return expect_over_codes(arm, predictor, [](const auto& p, const auto& lq, const std::string& w) {
    return kl_divergence_log(p, lq, w);
  });
}

double arm_marginal_kl(const EnumeratedArm& arm, const Predictor& predictor) {
  const MatrixXd logq = arm_predictions(arm, predictor);
  std::vector<double> qbar(arm.label_count(), 0.0);
  for (std::size_t c = 0; c < arm.size(); ++c)
    for (std::size_t y = 0; y < qbar.size(); ++y)
      qbar[y] += arm.weights[c] * std::exp(logq(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(y)));
  std::vector<double> log_qbar(qbar.size());
  for (std::size_t y = 0; y < qbar.size(); ++y) log_qbar[y] = std::log(qbar[y]);
  return kl_divergence_log(arm.target_marginal(), log_qbar, "input-averaged prediction");
}

double conditional_kl(const SyntheticGroundTruth& truth, const Predictor& predictor,
                      const Weighting& weighting) {
  if (weighting.kind == Weighting::Kind::true_joint) return arm_conditional_kl(probing_arm(truth), predictor);
  if (weighting.dataset == nullptr) throw std::invalid_argument("empirical weighting without a dataset");
  return arm_conditional_kl(empirical_probing_arm(truth, *weighting.dataset, weighting.split), predictor);
}

double conditional_kl(const SyntheticGroundTruth& truth, const TrainedProbe& probe,
                      const Weighting& weighting) {
  if (probe.params.input_dim() != truth.embedding_dim())
    throw std::invalid_argument("probe input width does not match the ground truth embedding");
  return conditional_kl(truth, probe_predictor(probe.params), weighting);
}

}  // namespace probekit
