#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace probekit {

// Raised for malformed, missing or inconsistent dataset files.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Split : std::uint8_t { train = 0, dev = 1, test = 2 };

inline constexpr std::array<Split, 3> kAllSplits{Split::train, Split::dev, Split::test};

std::string_view split_name(Split s);
std::optional<Split> parse_split(std::string_view name);

struct TokenRecord {
  Split split = Split::train;
  std::int64_t type_id = 0;
  std::int64_t label_id = 0;
  std::vector<double> vector;

  bool operator==(const TokenRecord&) const = default;
};

// Tokens as (split, type, label, vector) records. Immutable once built; every
// downstream module reads datasets through this type only.
struct LabeledEmbeddingDataset {
  std::size_t embedding_dim = 0;
  std::vector<std::string> label_names;
  std::size_t type_count = 0;
  std::vector<TokenRecord> records;

  std::size_t label_count() const { return label_names.size(); }
  std::size_t count(Split s) const;
  // Record indices belonging to one split, in record order.
  std::vector<std::size_t> indices(Split s) const;

  bool operator==(const LabeledEmbeddingDataset&) const = default;
};

enum class Severity { warning, error };

struct ValidationIssue {
  Severity severity = Severity::error;
  std::string message;
};

struct ValidationReport {
  bool ok = true;
  std::vector<ValidationIssue> issues;
  std::array<std::size_t, 3> split_counts{};
  std::vector<std::size_t> label_counts;

  std::size_t error_count() const;
};

// Lists every invariant violation; never throws. `require_splits` adds the
// non-empty train/dev/test requirement that applies when training.
ValidationReport validate_dataset(const LabeledEmbeddingDataset& ds, bool require_splits = true);

// PRB1 directory: manifest.json, records.tsv, vectors.f32 (little-endian).
std::filesystem::path save_dataset(const LabeledEmbeddingDataset& ds,
                                   const std::filesystem::path& dir);
LabeledEmbeddingDataset load_dataset(const std::filesystem::path& manifest_or_dir);

// Little-endian float32 matrix helpers shared by the other on-disk formats.
void write_f32_le(const std::filesystem::path& path, const std::vector<double>& values);
std::vector<double> read_f32_le(const std::filesystem::path& path);
void write_f64_le(const std::filesystem::path& path, const std::vector<double>& values);
std::vector<double> read_f64_le(const std::filesystem::path& path);

// FNV-1a over the canonical PRB1 byte content; used as sweep provenance.
std::uint64_t dataset_fingerprint(const LabeledEmbeddingDataset& ds);

}  // namespace probekit
