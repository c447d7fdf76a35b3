#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>

#include "probekit/datamodel.hpp"

namespace probekit::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("probekit_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Small valid dataset: `per_split` tokens in each split, float-exact vectors.
inline LabeledEmbeddingDataset tiny_dataset(std::size_t per_split = 6, std::size_t dim = 3,
                                            std::size_t types = 4, std::size_t labels = 2,
                                            std::uint64_t seed = 11) {
  LabeledEmbeddingDataset ds;
  ds.embedding_dim = dim;
  ds.type_count = types;
  for (std::size_t l = 0; l < labels; ++l) ds.label_names.push_back("lab" + std::to_string(l));
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> small(-8, 8);
  for (Split s : kAllSplits)
    for (std::size_t i = 0; i < per_split; ++i) {
      TokenRecord r;
      r.split = s;
      r.type_id = static_cast<std::int64_t>(i % types);
      r.label_id = static_cast<std::int64_t>((i / 2) % labels);
      for (std::size_t j = 0; j < dim; ++j) r.vector.push_back(small(rng) / 4.0);
      ds.records.push_back(std::move(r));
    }
  return ds;
}

}  // namespace probekit::testing
