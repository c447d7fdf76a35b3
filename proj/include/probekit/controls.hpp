#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string_view>
#include <optional>
#include <vector>

#include "probekit/datamodel.hpp"

// Control task: random relabelling c(T). Control function: random
// re-embedding c(R). Both are drawn once per seed, before any training.
namespace probekit {

class ControlError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// `type`: one draw per type_id, shared by every token of that type.
// `token`: each token picks independently (hash of seed and record index);
// for the control function the token picks from a pool of vectors drawn once.
enum class ControlGranularity { type, token };
enum class ControlDistribution { normal, uniform };

std::string_view granularity_name(ControlGranularity g);
std::optional<ControlGranularity> parse_granularity(std::string_view s);
std::string_view distribution_name(ControlDistribution d);
std::optional<ControlDistribution> parse_distribution(std::string_view s);

struct ControlTaskAssignment {
  std::uint64_t seed = 0;
  ControlGranularity granularity = ControlGranularity::type;
  std::size_t label_count = 0;
  std::vector<std::int64_t> mapping;  // type_id -> label_id (type granularity)

  std::int64_t label_for(std::size_t record_index, std::int64_t type_id) const;
  bool operator==(const ControlTaskAssignment&) const = default;
};

struct ControlFunctionAssignment {
  std::uint64_t seed = 0;
  ControlGranularity granularity = ControlGranularity::type;
  ControlDistribution distribution = ControlDistribution::normal;
  std::size_t embedding_dim = 0;
  // One row per type_id (type granularity) or per pool slot (token).
  std::vector<std::vector<double>> vectors;

  std::size_t code_for(std::size_t record_index, std::int64_t type_id) const;
  const std::vector<double>& vector_for(std::size_t record_index, std::int64_t type_id) const {
    return vectors[code_for(record_index, type_id)];
  }
  bool operator==(const ControlFunctionAssignment&) const = default;
};

struct ControlFunctionOptions {
  ControlGranularity granularity = ControlGranularity::type;
  ControlDistribution distribution = ControlDistribution::normal;
  std::size_t pool_size = 0;  // token granularity only; 0 means type_count
};

ControlTaskAssignment make_control_task(const LabeledEmbeddingDataset& ds, std::uint64_t seed,
                                        ControlGranularity granularity = ControlGranularity::type);
ControlFunctionAssignment make_control_function(const LabeledEmbeddingDataset& ds,
                                                std::uint64_t seed,
                                                const ControlFunctionOptions& options = {});

LabeledEmbeddingDataset apply_control(const LabeledEmbeddingDataset& ds,
                                      const ControlTaskAssignment& assignment);
LabeledEmbeddingDataset apply_control(const LabeledEmbeddingDataset& ds,
                                      const ControlFunctionAssignment& assignment);

// Fraction of a split's tokens whose type never occurs in train.
double unseen_type_fraction(const LabeledEmbeddingDataset& ds, Split split);

// Audit dumps: TSV of (type_id, label_id), or (type_id, row) plus a float32
// sidecar matrix holding the rows.
void save_control_task(const ControlTaskAssignment& a, const std::filesystem::path& tsv);
void save_control_function(const ControlFunctionAssignment& a, const std::filesystem::path& tsv,
                           const std::filesystem::path& matrix);

// Deterministic 64-bit mixer used for token-level draws.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace probekit
