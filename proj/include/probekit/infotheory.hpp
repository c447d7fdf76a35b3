#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

// Discrete information quantities. Everything is in nats; 0 log 0 is 0 and
// an absolute-continuity violation is an error, never an infinity.
namespace probekit {

class InfoError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

inline constexpr double kDistributionTolerance = 1e-9;

class Categorical {
 public:
  explicit Categorical(std::vector<double> probs);
  // Normalizes non-negative weights with a positive sum.
  static Categorical from_weights(std::vector<double> weights);
  static Categorical uniform(std::size_t k);

  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  const std::vector<double>& probs() const { return probs_; }

 private:
  std::vector<double> probs_;
};

// Row-major non-negative count matrix.
struct JointCounts {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint64_t> counts;

  JointCounts() = default;
  JointCounts(std::size_t r, std::size_t c) : rows(r), cols(c), counts(r * c, 0) {}
  JointCounts(std::size_t r, std::size_t c, std::vector<std::uint64_t> values);

  std::uint64_t& at(std::size_t i, std::size_t j) { return counts[i * cols + j]; }
  std::uint64_t at(std::size_t i, std::size_t j) const { return counts[i * cols + j]; }
  std::uint64_t total() const;
};

double entropy(const Categorical& d);
double kl_divergence(const Categorical& p, const Categorical& q);
double mutual_information_plugin(const JointCounts& j);

// Exact MI of a real-valued joint probability table (rows x cols, row-major).
double mutual_information(std::span<const double> joint, std::size_t rows, std::size_t cols);

// Raw-span forms used where q is held as log-probabilities (probe outputs).
// `where` names the conditioning value in error messages.
double cross_entropy_log(std::span<const double> p, std::span<const double> log_q,
                         const std::string& where = {});
double kl_divergence_log(std::span<const double> p, std::span<const double> log_q,
                         const std::string& where = {});

double nats_to_bits(double nats);

}  // namespace probekit
