#include "probekit/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include <json.hpp>

#include "probekit/infotheory.hpp"

namespace probekit {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string_view scheme_name(EmbeddingScheme s) {
  switch (s) {
    case EmbeddingScheme::orthogonal_like: return "orthogonal_like";
    case EmbeddingScheme::random_gaussian: return "random_gaussian";
    case EmbeddingScheme::clustered: return "clustered";
  }
  return "?";
}

std::optional<EmbeddingScheme> parse_scheme(std::string_view s) {
  if (s == "orthogonal_like") return EmbeddingScheme::orthogonal_like;
  if (s == "random_gaussian") return EmbeddingScheme::random_gaussian;
  if (s == "clustered") return EmbeddingScheme::clustered;
  return std::nullopt;
}

void SyntheticSpec::validate() const {
  if (type_count == 0) throw SpecError("type_count must be positive");
  if (label_count == 0) throw SpecError("label_count must be positive");
  if (label_count > type_count)
    throw SpecError("label_count (" + std::to_string(label_count) + ") exceeds type_count (" +
                    std::to_string(type_count) + "): some labels could never dominate a type");
  if (embedding_dim == 0) throw SpecError("embedding_dim must be >= 1");
  if (!(label_noise >= 0.0 && label_noise < 1.0)) throw SpecError("label_noise must be in [0, 1)");
  if (train_tokens == 0 || dev_tokens == 0 || test_tokens == 0)
    throw SpecError("split sizes must be positive");
  if (!(cluster_spread >= 0.0)) throw SpecError("cluster_spread must be >= 0");
  if (!(zipf_exponent >= 0.0)) throw SpecError("zipf_exponent must be >= 0");
  if (!(vector_noise >= 0.0)) throw SpecError("vector_noise must be >= 0");
}

void SyntheticGroundTruth::validate() const {
  const auto k = label_count();
  if (p_z.empty() || k == 0) throw SpecError("empty ground truth");
  if (cond.size() != p_z.size() || embed.size() != p_z.size())
    throw SpecError("ground truth tables disagree on type_count");
  (void)Categorical(p_z);
  for (const auto& row : cond) {
    if (row.size() != k) throw SpecError("ragged conditional table");
    (void)Categorical(row);
  }
  const auto d = embedding_dim();
  if (d == 0) throw SpecError("empty embedding");
  std::set<std::vector<double>> distinct;
  for (const auto& row : embed) {
    if (row.size() != d) throw SpecError("ragged embedding table");
    for (double v : row)
      if (!std::isfinite(v)) throw SpecError("non-finite embedding entry");
    distinct.insert(row);
  }
  if (distinct.size() != embed.size())
    throw SpecError("embedding rows are not pairwise distinct; I(T;R) would differ from I(T;Z)");
}

std::vector<double> SyntheticGroundTruth::label_marginal() const {
  std::vector<double> m(label_count(), 0.0);
  for (std::size_t z = 0; z < p_z.size(); ++z)
    for (std::size_t t = 0; t < m.size(); ++t) m[t] += p_z[z] * cond[z][t];
  return m;
}

std::vector<double> SyntheticGroundTruth::joint() const {
  const auto k = label_count();
  std::vector<double> j(p_z.size() * k);
  for (std::size_t z = 0; z < p_z.size(); ++z)
    for (std::size_t t = 0; t < k; ++t) j[z * k + t] = p_z[z] * cond[z][t];
  return j;
}

namespace {

std::vector<std::vector<double>> draw_embedding(const SyntheticSpec& spec,
                                                const std::vector<std::size_t>& dominant,
                                                std::mt19937_64& rng) {
  const auto K = spec.type_count;
  const auto d = spec.embedding_dim;
  std::vector<std::vector<double>> e(K, std::vector<double>(d, 0.0));
  std::normal_distribution<double> normal(0.0, 1.0);
  switch (spec.scheme) {
    case EmbeddingScheme::orthogonal_like:
      for (std::size_t z = 0; z < K; ++z) {
        const std::size_t base = z % d;
        const std::size_t level = z / d;
        e[z][base] = 1.0;
        if (level > 0) e[z][(base + level) % d] += static_cast<double>(level);
      }
      break;
    case EmbeddingScheme::random_gaussian:
      for (auto& row : e)
        for (auto& v : row) v = normal(rng);
      break;
    case EmbeddingScheme::clustered: {
      std::vector<std::vector<double>> proto(spec.label_count, std::vector<double>(d));
      for (auto& row : proto)
        for (auto& v : row) v = normal(rng);
      for (std::size_t z = 0; z < K; ++z)
        for (std::size_t c = 0; c < d; ++c)
          e[z][c] = proto[dominant[z]][c] + spec.cluster_spread * normal(rng);
      break;
    }
  }
  // Float-representable so that PRB1 round trips are exact.
  for (auto& row : e)
    for (auto& v : row) v = static_cast<float>(v);
  return e;
}

}  // namespace

SyntheticGroundTruth make_ground_truth(const SyntheticSpec& spec) {
  spec.validate();
  const auto K = spec.type_count;
  const auto k = spec.label_count;
  std::mt19937_64 rng(spec.seed);

  SyntheticGroundTruth truth;
  truth.scheme = spec.scheme;
  truth.seed = spec.seed;
  truth.vector_noise = spec.vector_noise;

  std::vector<double> w(K);
  for (std::size_t z = 0; z < K; ++z) w[z] = std::pow(static_cast<double>(z + 1), -spec.zipf_exponent);
  truth.p_z = Categorical::from_weights(std::move(w)).probs();

  // Every label dominates at least one type; which types is shuffled by seed.
  std::vector<std::size_t> dominant(K);
  for (std::size_t z = 0; z < K; ++z) dominant[z] = z % k;
  std::shuffle(dominant.begin(), dominant.end(), rng);

  truth.cond.assign(K, std::vector<double>(k, 0.0));
  for (std::size_t z = 0; z < K; ++z) {
    if (k == 1) {
      truth.cond[z][0] = 1.0;
      continue;
    }
    const double off = spec.label_noise / static_cast<double>(k - 1);
    for (std::size_t t = 0; t < k; ++t) truth.cond[z][t] = t == dominant[z] ? 1.0 - spec.label_noise : off;
  }

  truth.embed = draw_embedding(spec, dominant, rng);
  truth.validate();
  return truth;
}

LabeledEmbeddingDataset sample_dataset(const SyntheticGroundTruth& truth, std::size_t train,
                                       std::size_t dev, std::size_t test, std::uint64_t seed) {
  truth.validate();
  LabeledEmbeddingDataset ds;
  ds.embedding_dim = truth.embedding_dim();
  ds.type_count = truth.type_count();
  for (std::size_t t = 0; t < truth.label_count(); ++t) ds.label_names.push_back("L" + std::to_string(t));

  // Distinct stream from make_ground_truth so a shared seed does not reuse draws.
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x73u};
  std::mt19937_64 rng(seq);
  std::discrete_distribution<std::size_t> pick_type(truth.p_z.begin(), truth.p_z.end());
  std::vector<std::discrete_distribution<std::size_t>> pick_label;
  for (const auto& row : truth.cond) pick_label.emplace_back(row.begin(), row.end());
  std::normal_distribution<double> noise(0.0, truth.vector_noise > 0.0 ? truth.vector_noise : 1.0);

  const std::size_t sizes[3] = {train, dev, test};
  ds.records.reserve(train + dev + test);
  for (Split s : kAllSplits) {
    for (std::size_t i = 0; i < sizes[static_cast<std::size_t>(s)]; ++i) {
      const std::size_t z = pick_type(rng);
      const std::size_t t = pick_label[z](rng);
      TokenRecord r{s, static_cast<std::int64_t>(z), static_cast<std::int64_t>(t), truth.embed[z]};
      if (truth.vector_noise > 0.0)
        for (auto& v : r.vector) v = static_cast<float>(v + noise(rng));
      ds.records.push_back(std::move(r));
    }
  }
  return ds;
}

std::pair<LabeledEmbeddingDataset, SyntheticGroundTruth> generate(const SyntheticSpec& spec) {
  auto truth = make_ground_truth(spec);
  auto ds = sample_dataset(truth, spec.train_tokens, spec.dev_tokens, spec.test_tokens, spec.seed);
  return {std::move(ds), std::move(truth)};
}

double true_mutual_information(const SyntheticGroundTruth& truth) {
  const auto j = truth.joint();
  return mutual_information(j, truth.type_count(), truth.label_count());
}

double true_label_entropy(const SyntheticGroundTruth& truth) {
  return entropy(Categorical(truth.label_marginal()));
}

void save_truth(const SyntheticGroundTruth& truth, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory " + dir.string() + ": " + ec.message());
  json j;
  j["format"] = "PRBTRUTH1";
  j["type_count"] = truth.type_count();
  j["label_count"] = truth.label_count();
  j["embedding_dim"] = truth.embedding_dim();
  j["embedding_scheme"] = scheme_name(truth.scheme);
  j["seed"] = truth.seed;
  j["vector_noise"] = truth.vector_noise;
  j["p_z"] = truth.p_z;
  j["cond"] = truth.cond;
  j["embed_file"] = "truth_embed.f32";
  std::ofstream out(dir / "truth.json");
  if (!out) throw DataError("cannot write " + (dir / "truth.json").string());
  // 17 significant digits: probabilities reload bit-exactly.
  out << j.dump(2) << "\n";
  std::vector<double> flat;
  for (const auto& row : truth.embed) flat.insert(flat.end(), row.begin(), row.end());
  write_f32_le(dir / "truth_embed.f32", flat);
}

bool has_truth(const fs::path& dir) { return fs::exists(dir / "truth.json"); }

SyntheticGroundTruth load_truth(const fs::path& dir) {
  const fs::path path = dir / "truth.json";
  std::ifstream in(path);
  if (!in) throw DataError("ground truth unavailable: missing " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  SyntheticGroundTruth truth;
  try {
    truth.p_z = j.at("p_z").get<std::vector<double>>();
    truth.cond = j.at("cond").get<std::vector<std::vector<double>>>();
    truth.seed = j.at("seed").get<std::uint64_t>();
    truth.vector_noise = j.value("vector_noise", 0.0);
    const auto scheme = parse_scheme(j.at("embedding_scheme").get<std::string>());
    if (!scheme) throw DataError(path.string() + ": unknown embedding_scheme");
    truth.scheme = *scheme;
    const auto d = j.at("embedding_dim").get<std::size_t>();
    const auto flat = read_f32_le(dir / j.value("embed_file", std::string("truth_embed.f32")));
    if (d == 0 || flat.size() != truth.p_z.size() * d)
      throw DataError(path.string() + ": embedding matrix size does not match type_count x embedding_dim");
    for (std::size_t z = 0; z < truth.p_z.size(); ++z)
      truth.embed.emplace_back(flat.begin() + static_cast<std::ptrdiff_t>(z * d),
                               flat.begin() + static_cast<std::ptrdiff_t>((z + 1) * d));
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  truth.validate();
  return truth;
}

}  // namespace probekit
