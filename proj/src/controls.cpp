#include "probekit/controls.hpp"

#include <fstream>
#include <random>
#include <unordered_set>

namespace probekit {

std::string_view granularity_name(ControlGranularity g) {
  return g == ControlGranularity::type ? "type" : "token";
}

std::optional<ControlGranularity> parse_granularity(std::string_view s) {
  if (s == "type") return ControlGranularity::type;
  if (s == "token") return ControlGranularity::token;
  return std::nullopt;
}

std::string_view distribution_name(ControlDistribution d) {
  return d == ControlDistribution::normal ? "normal" : "uniform";
}

std::optional<ControlDistribution> parse_distribution(std::string_view s) {
  if (s == "normal") return ControlDistribution::normal;
  if (s == "uniform") return ControlDistribution::uniform;
  return std::nullopt;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 finalizer over a combined word
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::int64_t ControlTaskAssignment::label_for(std::size_t record_index,
                                              std::int64_t type_id) const {
  if (granularity == ControlGranularity::token)
    return static_cast<std::int64_t>(mix_seed(seed, record_index) % label_count);
  if (type_id < 0 || static_cast<std::size_t>(type_id) >= mapping.size())
    throw ControlError("control task does not cover type_id " + std::to_string(type_id));
  return mapping[static_cast<std::size_t>(type_id)];
}

std::size_t ControlFunctionAssignment::code_for(std::size_t record_index,
                                                std::int64_t type_id) const {
  if (granularity == ControlGranularity::token)
    return static_cast<std::size_t>(mix_seed(seed, record_index) % vectors.size());
  if (type_id < 0 || static_cast<std::size_t>(type_id) >= vectors.size())
    throw ControlError("control function does not cover type_id " + std::to_string(type_id));
  return static_cast<std::size_t>(type_id);
}

ControlTaskAssignment make_control_task(const LabeledEmbeddingDataset& ds, std::uint64_t seed,
                                        ControlGranularity granularity) {
  if (ds.label_names.empty()) throw ControlError("dataset has no labels");
  ControlTaskAssignment a;
  a.seed = seed;
  a.granularity = granularity;
  a.label_count = ds.label_names.size();
  if (granularity == ControlGranularity::type) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::int64_t> pick(0, static_cast<std::int64_t>(a.label_count) - 1);
    a.mapping.resize(ds.type_count);
    for (auto& label : a.mapping) label = pick(rng);
  }
  return a;
}

ControlFunctionAssignment make_control_function(const LabeledEmbeddingDataset& ds,
                                                std::uint64_t seed,
                                                const ControlFunctionOptions& options) {
  ControlFunctionAssignment a;
  a.seed = seed;
  a.granularity = options.granularity;
  a.distribution = options.distribution;
  a.embedding_dim = ds.embedding_dim;
  std::size_t rows = ds.type_count;
  if (options.granularity == ControlGranularity::token && options.pool_size > 0)
    rows = options.pool_size;
  if (rows == 0 || a.embedding_dim == 0) throw ControlError("empty control function shape");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  a.vectors.assign(rows, std::vector<double>(a.embedding_dim));
  // Rounded to float so that the applied vectors survive a PRB1 round trip.
  for (auto& row : a.vectors)
    for (auto& v : row) {
      const double draw = a.distribution == ControlDistribution::normal ? normal(rng) : uniform(rng);
      v = static_cast<float>(draw);
    }
  return a;
}

LabeledEmbeddingDataset apply_control(const LabeledEmbeddingDataset& ds,
                                      const ControlTaskAssignment& assignment) {
  if (assignment.granularity == ControlGranularity::type && assignment.mapping.size() < ds.type_count)
    throw ControlError("control task covers " + std::to_string(assignment.mapping.size()) +
                       " types but the dataset has " + std::to_string(ds.type_count));
  LabeledEmbeddingDataset out = ds;
  for (std::size_t i = 0; i < out.records.size(); ++i)
    out.records[i].label_id = assignment.label_for(i, out.records[i].type_id);
  return out;
}

LabeledEmbeddingDataset apply_control(const LabeledEmbeddingDataset& ds,
                                      const ControlFunctionAssignment& assignment) {
  if (assignment.embedding_dim != ds.embedding_dim)
    throw ControlError("control vectors have width " + std::to_string(assignment.embedding_dim) +
                       " but the dataset has " + std::to_string(ds.embedding_dim));
  if (assignment.granularity == ControlGranularity::type && assignment.vectors.size() < ds.type_count)
    throw ControlError("control function covers " + std::to_string(assignment.vectors.size()) +
                       " types but the dataset has " + std::to_string(ds.type_count));
  LabeledEmbeddingDataset out = ds;
  for (std::size_t i = 0; i < out.records.size(); ++i)
    out.records[i].vector = assignment.vector_for(i, out.records[i].type_id);
  return out;
}

double unseen_type_fraction(const LabeledEmbeddingDataset& ds, Split split) {
  std::unordered_set<std::int64_t> seen;
  for (const auto& r : ds.records)
    if (r.split == Split::train) seen.insert(r.type_id);
  std::size_t total = 0, unseen = 0;
  for (const auto& r : ds.records) {
    if (r.split != split) continue;
    ++total;
    unseen += !seen.contains(r.type_id);
  }
  return total == 0 ? 0.0 : static_cast<double>(unseen) / static_cast<double>(total);
}

void save_control_task(const ControlTaskAssignment& a, const std::filesystem::path& tsv) {
  std::ofstream out(tsv);
  if (!out) throw ControlError("cannot write " + tsv.string());
  out << "# control_task seed=" << a.seed << " granularity=" << granularity_name(a.granularity)
      << " labels=" << a.label_count << "\n";
  for (std::size_t t = 0; t < a.mapping.size(); ++t) out << t << '\t' << a.mapping[t] << '\n';
}

void save_control_function(const ControlFunctionAssignment& a, const std::filesystem::path& tsv,
                           const std::filesystem::path& matrix) {
  std::ofstream out(tsv);
  if (!out) throw ControlError("cannot write " + tsv.string());
  out << "# control_function seed=" << a.seed << " granularity=" << granularity_name(a.granularity)
      << " distribution=" << distribution_name(a.distribution) << " dim=" << a.embedding_dim
      << "\n";
  std::vector<double> flat;
  flat.reserve(a.vectors.size() * a.embedding_dim);
  for (std::size_t t = 0; t < a.vectors.size(); ++t) {
    out << t << '\t' << t << '\n';
    flat.insert(flat.end(), a.vectors[t].begin(), a.vectors[t].end());
  }
  write_f32_le(matrix, flat);
}

}  // namespace probekit
