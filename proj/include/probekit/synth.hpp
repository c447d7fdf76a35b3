#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string_view>
#include <utility>
#include <vector>

#include "probekit/datamodel.hpp"

// Synthetic datasets with exactly known p(Z), p(T|Z) and an injective type
// embedding, so that H(T), I(T;R) = I(T;Z) and every KL term can be
// enumerated.
namespace probekit {

class SpecError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class EmbeddingScheme {
  orthogonal_like,  // scaled one-hot-like positions
  random_gaussian,  // i.i.d. N(0,1) rows
  clustered,        // label prototype + per-type jitter: labels are decodable from geometry
};

std::string_view scheme_name(EmbeddingScheme s);
std::optional<EmbeddingScheme> parse_scheme(std::string_view s);

struct SyntheticSpec {
  std::size_t type_count = 64;
  std::size_t label_count = 16;
  std::size_t embedding_dim = 32;
  double label_noise = 0.0;  // mass spread uniformly over the non-dominant labels
  std::size_t train_tokens = 5000;
  std::size_t dev_tokens = 1000;
  std::size_t test_tokens = 1000;
  EmbeddingScheme scheme = EmbeddingScheme::random_gaussian;
  double cluster_spread = 0.5;  // clustered scheme: jitter std relative to prototypes
  double zipf_exponent = 0.0;   // p(z) proportional to (z+1)^-s; 0 is uniform
  double vector_noise = 0.0;    // additive N(0, s^2) per token; breaks exact enumeration
  std::uint64_t seed = 7;

  void validate() const;
};

struct SyntheticGroundTruth {
  std::vector<double> p_z;
  std::vector<std::vector<double>> cond;   // K x k, rows sum to 1
  std::vector<std::vector<double>> embed;  // K x d, pairwise distinct rows
  EmbeddingScheme scheme = EmbeddingScheme::random_gaussian;
  std::uint64_t seed = 0;
  double vector_noise = 0.0;

  std::size_t type_count() const { return p_z.size(); }
  std::size_t label_count() const { return cond.empty() ? 0 : cond.front().size(); }
  std::size_t embedding_dim() const { return embed.empty() ? 0 : embed.front().size(); }
  // Exact enumeration is valid only for noise-free embeddings.
  bool enumerable() const { return vector_noise == 0.0; }

  void validate() const;
  std::vector<double> label_marginal() const;
  std::vector<double> joint() const;  // K x k row-major p(z, t)
};

SyntheticGroundTruth make_ground_truth(const SyntheticSpec& spec);

// Draws tokens i.i.d. from p(Z) then p(T|Z); vectors are embed(Z).
LabeledEmbeddingDataset sample_dataset(const SyntheticGroundTruth& truth, std::size_t train,
                                       std::size_t dev, std::size_t test, std::uint64_t seed);

std::pair<LabeledEmbeddingDataset, SyntheticGroundTruth> generate(const SyntheticSpec& spec);

double true_mutual_information(const SyntheticGroundTruth& truth);
double true_label_entropy(const SyntheticGroundTruth& truth);

// truth.json + truth_embed.f32 next to a PRB1 dataset.
void save_truth(const SyntheticGroundTruth& truth, const std::filesystem::path& dir);
SyntheticGroundTruth load_truth(const std::filesystem::path& dir);
bool has_truth(const std::filesystem::path& dir);

}  // namespace probekit
