#include "probekit/infotheory.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

namespace probekit {

namespace {

void check_distribution(const std::vector<double>& probs) {
  if (probs.empty()) throw InfoError("distribution has no outcomes");
  double sum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!(probs[i] >= 0.0) || !std::isfinite(probs[i]))
      throw InfoError("invalid probability at index " + std::to_string(i));
    sum += probs[i];
  }
  if (std::abs(sum - 1.0) > kDistributionTolerance)
    throw InfoError("probabilities sum to " + std::to_string(sum) + ", not 1");
}

std::string at_suffix(const std::string& where) { return where.empty() ? "" : " (" + where + ")"; }

}  // namespace

Categorical::Categorical(std::vector<double> probs) : probs_(std::move(probs)) {
  check_distribution(probs_);
}

Categorical Categorical::from_weights(std::vector<double> weights) {
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw InfoError("weights must be finite and >= 0");
    sum += w;
  }
  if (!(sum > 0.0)) throw InfoError("weights sum to zero");
  for (double& w : weights) w /= sum;
  return Categorical(std::move(weights));
}

Categorical Categorical::uniform(std::size_t k) {
  if (k == 0) throw InfoError("uniform over zero outcomes");
  return Categorical(std::vector<double>(k, 1.0 / static_cast<double>(k)));
}

JointCounts::JointCounts(std::size_t r, std::size_t c, std::vector<std::uint64_t> values)
    : rows(r), cols(c), counts(std::move(values)) {
  if (counts.size() != rows * cols) throw InfoError("count matrix shape mismatch");
}

std::uint64_t JointCounts::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

double entropy(const Categorical& d) {
  double h = 0.0;
  for (double p : d.probs())
    if (p > 0.0) h -= p * std::log(p);
  return h < 0.0 ? 0.0 : h;
}

double kl_divergence(const Categorical& p, const Categorical& q) {
  if (p.size() != q.size())
    throw InfoError("support size mismatch: " + std::to_string(p.size()) + " vs " +
                    std::to_string(q.size()));
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0)
      throw InfoError("absolute continuity violated at index " + std::to_string(i));
    kl += p[i] * std::log(p[i] / q[i]);
  }
  return kl < 0.0 ? 0.0 : kl;
}

double mutual_information_plugin(const JointCounts& j) {
  const std::uint64_t total = j.total();
  if (total == 0) throw InfoError("joint counts total zero");
  std::vector<std::uint64_t> row(j.rows, 0), col(j.cols, 0);
  for (std::size_t r = 0; r < j.rows; ++r)
    for (std::size_t c = 0; c < j.cols; ++c) {
      row[r] += j.at(r, c);
      col[c] += j.at(r, c);
    }
  // sum n_rc/N * log(n_rc N / (n_r n_c)), all in counts to avoid rounding
  // the marginals separately.
  const double n = static_cast<double>(total);
  double mi = 0.0;
  for (std::size_t r = 0; r < j.rows; ++r)
    for (std::size_t c = 0; c < j.cols; ++c) {
      const std::uint64_t k = j.at(r, c);
      if (k == 0) continue;
      const double kd = static_cast<double>(k);
      mi += kd * std::log(kd * n / (static_cast<double>(row[r]) * static_cast<double>(col[c])));
    }
  mi /= n;
  return mi < 0.0 ? 0.0 : mi;
}

double mutual_information(std::span<const double> joint, std::size_t rows, std::size_t cols) {
  if (joint.size() != rows * cols) throw InfoError("joint table shape mismatch");
  std::vector<double> row(rows, 0.0), col(cols, 0.0);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = joint[r * cols + c];
      if (!(v >= 0.0)) throw InfoError("negative joint probability");
      row[r] += v;
      col[c] += v;
      total += v;
    }
  if (std::abs(total - 1.0) > kDistributionTolerance)
    throw InfoError("joint probabilities sum to " + std::to_string(total));
  double mi = 0.0;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = joint[r * cols + c];
      if (v > 0.0) mi += v * std::log(v / (row[r] * col[c]));
    }
  return mi < 0.0 ? 0.0 : mi;
}

double cross_entropy_log(std::span<const double> p, std::span<const double> log_q,
                         const std::string& where) {
  if (p.size() != log_q.size()) throw InfoError("support size mismatch" + at_suffix(where));
  double h = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (!std::isfinite(log_q[i]))
      throw InfoError("absolute continuity violated at label " + std::to_string(i) +
                      at_suffix(where));
    h -= p[i] * log_q[i];
  }
  return h;
}

double kl_divergence_log(std::span<const double> p, std::span<const double> log_q,
                         const std::string& where) {
  if (p.size() != log_q.size()) throw InfoError("support size mismatch" + at_suffix(where));
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (!std::isfinite(log_q[i]))
      throw InfoError("absolute continuity violated at label " + std::to_string(i) +
                      at_suffix(where));
    kl += p[i] * (std::log(p[i]) - log_q[i]);
  }
  return kl;
}

double nats_to_bits(double nats) { return nats / std::numbers::ln2; }

}  // namespace probekit
