#include "probekit/datamodel.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include <json.hpp>

namespace probekit {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string_view split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::dev: return "dev";
    case Split::test: return "test";
  }
  return "?";
}

std::optional<Split> parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "dev") return Split::dev;
  if (name == "test") return Split::test;
  return std::nullopt;
}

std::size_t LabeledEmbeddingDataset::count(Split s) const {
  std::size_t n = 0;
  for (const auto& r : records) n += (r.split == s);
  return n;
}

std::vector<std::size_t> LabeledEmbeddingDataset::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].split == s) out.push_back(i);
  return out;
}

std::size_t ValidationReport::error_count() const {
  std::size_t n = 0;
  for (const auto& issue : issues) n += (issue.severity == Severity::error);
  return n;
}

ValidationReport validate_dataset(const LabeledEmbeddingDataset& ds, bool require_splits) {
  ValidationReport rep;
  auto error = [&](std::string msg) { rep.issues.push_back({Severity::error, std::move(msg)}); };
  auto warn = [&](std::string msg) { rep.issues.push_back({Severity::warning, std::move(msg)}); };

  if (ds.embedding_dim == 0) error("embedding_dim must be positive");
  if (ds.type_count == 0) error("type_count must be positive");
  if (ds.label_names.empty()) error("label inventory is empty");
  if (ds.records.empty()) error("dataset has no records");

  rep.label_counts.assign(ds.label_names.size(), 0);
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    const auto& r = ds.records[i];
    const auto si = static_cast<std::size_t>(r.split);
    if (si > 2) {
      error("record " + std::to_string(i) + ": unknown split tag");
      continue;
    }
    ++rep.split_counts[si];
    if (r.vector.size() != ds.embedding_dim) {
      error("record " + std::to_string(i) + ": vector length " + std::to_string(r.vector.size()) +
            " != embedding_dim " + std::to_string(ds.embedding_dim));
    }
    for (double v : r.vector) {
      if (!std::isfinite(v)) {
        error("record " + std::to_string(i) + ": non-finite vector entry");
        break;
      }
    }
    if (r.label_id < 0 || static_cast<std::size_t>(r.label_id) >= ds.label_names.size()) {
      error("record " + std::to_string(i) + ": label_id " + std::to_string(r.label_id) +
            " out of range [0, " + std::to_string(ds.label_names.size()) + ")");
    } else {
      ++rep.label_counts[static_cast<std::size_t>(r.label_id)];
    }
    if (r.type_id < 0 || static_cast<std::size_t>(r.type_id) >= ds.type_count) {
      error("record " + std::to_string(i) + ": type_id " + std::to_string(r.type_id) +
            " out of range [0, " + std::to_string(ds.type_count) + ")");
    }
  }

  if (require_splits) {
    for (Split s : kAllSplits)
      if (rep.split_counts[static_cast<std::size_t>(s)] == 0)
        error("empty split: " + std::string(split_name(s)));
  }
  for (std::size_t l = 0; l < rep.label_counts.size(); ++l)
    if (rep.label_counts[l] == 0) warn("label '" + ds.label_names[l] + "' never occurs");

  rep.ok = rep.error_count() == 0;
  return rep;
}

// ---------------------------------------------------------------------------
// Little-endian binary helpers

namespace {

template <typename Word>
void put_le(std::string& out, Word w) {
  for (std::size_t b = 0; b < sizeof(Word); ++b)
    out.push_back(static_cast<char>((w >> (8 * b)) & 0xffu));
}

template <typename Word>
Word get_le(const unsigned char* p) {
  Word w = 0;
  for (std::size_t b = 0; b < sizeof(Word); ++b) w |= static_cast<Word>(p[b]) << (8 * b);
  return w;
}

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

std::string encode_f32(const std::vector<double>& values) {
  std::string bytes;
  bytes.reserve(values.size() * 4);
  for (double v : values) put_le(bytes, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return bytes;
}

std::vector<double> decode_f32(const std::string& bytes, const fs::path& origin) {
  if (bytes.size() % 4 != 0)
    throw DataError(origin.string() + ": byte length " + std::to_string(bytes.size()) +
                    " is not a multiple of 4");
  std::vector<double> out(bytes.size() / 4);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::bit_cast<float>(get_le<std::uint32_t>(p + 4 * i));
  return out;
}

std::string records_tsv(const LabeledEmbeddingDataset& ds, const std::vector<std::size_t>& order) {
  std::string out;
  for (std::size_t i : order) {
    const auto& r = ds.records[i];
    out += split_name(r.split);
    out += '\t';
    out += std::to_string(r.type_id);
    out += '\t';
    out += std::to_string(r.label_id);
    out += '\n';
  }
  return out;
}

std::vector<std::size_t> block_order(const LabeledEmbeddingDataset& ds) {
  std::vector<std::size_t> order;
  order.reserve(ds.records.size());
  for (Split s : kAllSplits)
    for (std::size_t i : ds.indices(s)) order.push_back(i);
  return order;
}

std::string manifest_text(const LabeledEmbeddingDataset& ds) {
  json m;
  m["format"] = "PRB1";
  m["embedding_dim"] = ds.embedding_dim;
  m["type_count"] = ds.type_count;
  m["label_names"] = ds.label_names;
  m["splits"] = {{"train", ds.count(Split::train)},
                 {"dev", ds.count(Split::dev)},
                 {"test", ds.count(Split::test)}};
  return m.dump(2) + "\n";
}

}  // namespace

void write_f32_le(const fs::path& path, const std::vector<double>& values) {
  write_bytes(path, encode_f32(values));
}

std::vector<double> read_f32_le(const fs::path& path) { return decode_f32(read_bytes(path), path); }

void write_f64_le(const fs::path& path, const std::vector<double>& values) {
  std::string bytes;
  bytes.reserve(values.size() * 8);
  for (double v : values) put_le(bytes, std::bit_cast<std::uint64_t>(v));
  write_bytes(path, bytes);
}

std::vector<double> read_f64_le(const fs::path& path) {
  const std::string bytes = read_bytes(path);
  if (bytes.size() % 8 != 0)
    throw DataError(path.string() + ": byte length is not a multiple of 8");
  std::vector<double> out(bytes.size() / 8);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::bit_cast<double>(get_le<std::uint64_t>(p + 8 * i));
  return out;
}

// ---------------------------------------------------------------------------
// PRB1

fs::path save_dataset(const LabeledEmbeddingDataset& ds, const fs::path& dir) {
  if (ds.records.empty()) throw DataError("refusing to write an empty dataset");
  const auto rep = validate_dataset(ds, /*require_splits=*/false);
  if (!rep.ok) throw DataError("refusing to write invalid dataset: " + rep.issues.front().message);

  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory " + dir.string() + ": " + ec.message());

  const auto order = block_order(ds);
  std::vector<double> flat;
  flat.reserve(ds.records.size() * ds.embedding_dim);
  for (std::size_t i : order)
    flat.insert(flat.end(), ds.records[i].vector.begin(), ds.records[i].vector.end());

  const fs::path manifest = dir / "manifest.json";
  write_bytes(manifest, manifest_text(ds));
  write_bytes(dir / "records.tsv", records_tsv(ds, order));
  write_f32_le(dir / "vectors.f32", flat);
  return manifest;
}

LabeledEmbeddingDataset load_dataset(const fs::path& manifest_or_dir) {
  const fs::path manifest =
      fs::is_directory(manifest_or_dir) ? manifest_or_dir / "manifest.json" : manifest_or_dir;
  const fs::path dir = manifest.parent_path();
  if (!fs::exists(manifest)) throw DataError("missing file: " + manifest.string());

  json m;
  try {
    m = json::parse(read_bytes(manifest));
  } catch (const json::exception& e) {
    throw DataError(manifest.string() + ": " + e.what());
  }
  if (m.value("format", "") != "PRB1")
    throw DataError(manifest.string() + ": format is not PRB1");

  LabeledEmbeddingDataset ds;
  std::array<std::size_t, 3> declared{};
  try {
    ds.embedding_dim = m.at("embedding_dim").get<std::size_t>();
    ds.type_count = m.at("type_count").get<std::size_t>();
    ds.label_names = m.at("label_names").get<std::vector<std::string>>();
    for (Split s : kAllSplits)
      declared[static_cast<std::size_t>(s)] =
          m.at("splits").value(std::string(split_name(s)), std::size_t{0});
  } catch (const json::exception& e) {
    throw DataError(manifest.string() + ": " + e.what());
  }
  if (ds.embedding_dim == 0) throw DataError(manifest.string() + ": embedding_dim must be positive");

  const fs::path records_path = dir / "records.tsv";
  const fs::path vectors_path = dir / "vectors.f32";
  if (!fs::exists(records_path)) throw DataError("missing file: " + records_path.string());
  if (!fs::exists(vectors_path)) throw DataError("missing file: " + vectors_path.string());

  std::istringstream rows(read_bytes(records_path));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(rows, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string tag;
    TokenRecord r;
    if (!std::getline(fields, tag, '\t') || !(fields >> r.type_id >> r.label_id))
      throw DataError(records_path.string() + ":" + std::to_string(lineno) + ": malformed row");
    const auto split = parse_split(tag);
    if (!split)
      throw DataError(records_path.string() + ":" + std::to_string(lineno) +
                      ": unknown split tag '" + tag + "'");
    r.split = *split;
    ds.records.push_back(std::move(r));
  }

  const std::size_t n = ds.records.size();
  if (declared[0] + declared[1] + declared[2] != n)
    throw DataError(manifest.string() + ": split counts sum to " +
                    std::to_string(declared[0] + declared[1] + declared[2]) + " but records.tsv has " +
                    std::to_string(n) + " rows");
  for (Split s : kAllSplits)
    if (ds.count(s) != declared[static_cast<std::size_t>(s)])
      throw DataError(manifest.string() + ": split '" + std::string(split_name(s)) +
                      "' count does not match records.tsv");

  const auto flat = read_f32_le(vectors_path);
  if (flat.size() != n * ds.embedding_dim)
    throw DataError("dimension mismatch: manifest declares " + std::to_string(n) + " x " +
                    std::to_string(ds.embedding_dim) + " floats but " + vectors_path.string() +
                    " holds " + std::to_string(flat.size()));
  for (std::size_t i = 0; i < n; ++i) {
    auto first = flat.begin() + static_cast<std::ptrdiff_t>(i * ds.embedding_dim);
    ds.records[i].vector.assign(first, first + static_cast<std::ptrdiff_t>(ds.embedding_dim));
    for (double v : ds.records[i].vector)
      if (!std::isfinite(v))
        throw DataError(vectors_path.string() + ": non-finite value in row " + std::to_string(i));
  }

  const auto rep = validate_dataset(ds, /*require_splits=*/false);
  if (!rep.ok) throw DataError(manifest.string() + ": " + rep.issues.front().message);
  return ds;
}

std::uint64_t dataset_fingerprint(const LabeledEmbeddingDataset& ds) {
  std::uint64_t h = 1469598103934665603ull;
  auto feed = [&h](const std::string& bytes) {
    for (unsigned char c : bytes) {
      h ^= c;
      h *= 1099511628211ull;
    }
  };
  const auto order = block_order(ds);
  feed(manifest_text(ds));
  feed(records_tsv(ds, order));
  for (std::size_t i : order) feed(encode_f32(ds.records[i].vector));
  return h;
}

}  // namespace probekit
