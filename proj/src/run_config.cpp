#include "probekit/run_config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace probekit {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::size_t as_count(const std::string& key, const json& v) {
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
    throw ConfigError(key + ": expected a non-negative integer, got " + v.dump());
  return v.get<std::size_t>();
}

std::uint64_t as_seed(const std::string& key, const json& v) {
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
    throw ConfigError(key + ": expected a non-negative integer, got " + v.dump());
  return v.get<std::uint64_t>();
}

double as_real(const std::string& key, const json& v) {
  if (!v.is_number()) throw ConfigError(key + ": expected a number, got " + v.dump());
  return v.get<double>();
}

std::string as_text(const std::string& key, const json& v) {
  if (!v.is_string()) throw ConfigError(key + ": expected a string, got " + v.dump());
  return v.get<std::string>();
}

const json& as_list(const std::string& key, const json& v) {
  if (!v.is_array() || v.empty()) throw ConfigError(key + ": expected a non-empty list, got " + v.dump());
  return v;
}

ControlGranularity as_granularity(const std::string& key, const json& v) {
  const auto g = parse_granularity(as_text(key, v));
  if (!g) throw ConfigError(key + ": expected \"type\" or \"token\", got " + v.dump());
  return *g;
}

SyntheticSpec& synth(RunConfig& c) {
  if (!c.synthetic) c.synthetic.emplace();
  return *c.synthetic;
}

using Setter = std::function<void(RunConfig&, const std::string&, const json&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table{
      {"dataset", [](RunConfig& c, const std::string& k, const json& v) { c.dataset = as_text(k, v); }},
      {"synth_types", [](RunConfig& c, const std::string& k, const json& v) { synth(c).type_count = as_count(k, v); }},
      {"synth_labels", [](RunConfig& c, const std::string& k, const json& v) { synth(c).label_count = as_count(k, v); }},
      {"synth_dim", [](RunConfig& c, const std::string& k, const json& v) { synth(c).embedding_dim = as_count(k, v); }},
      {"synth_noise", [](RunConfig& c, const std::string& k, const json& v) { synth(c).label_noise = as_real(k, v); }},
      {"synth_train", [](RunConfig& c, const std::string& k, const json& v) { synth(c).train_tokens = as_count(k, v); }},
      {"synth_dev", [](RunConfig& c, const std::string& k, const json& v) { synth(c).dev_tokens = as_count(k, v); }},
      {"synth_test", [](RunConfig& c, const std::string& k, const json& v) { synth(c).test_tokens = as_count(k, v); }},
      {"synth_scheme",
       [](RunConfig& c, const std::string& k, const json& v) {
         const auto s = parse_scheme(as_text(k, v));
         if (!s) throw ConfigError(k + ": unknown embedding scheme " + v.dump());
         synth(c).scheme = *s;
       }},
      {"synth_spread", [](RunConfig& c, const std::string& k, const json& v) { synth(c).cluster_spread = as_real(k, v); }},
      {"synth_zipf", [](RunConfig& c, const std::string& k, const json& v) { synth(c).zipf_exponent = as_real(k, v); }},
      {"synth_vector_noise",
       [](RunConfig& c, const std::string& k, const json& v) { synth(c).vector_noise = as_real(k, v); }},
      {"synth_seed", [](RunConfig& c, const std::string& k, const json& v) { synth(c).seed = as_seed(k, v); }},
      {"learning_rates",
       [](RunConfig& c, const std::string& k, const json& v) {
         c.grid.learning_rates.clear();
         for (const auto& e : as_list(k, v)) c.grid.learning_rates.push_back(as_real(k, e));
       }},
      {"weight_decays",
       [](RunConfig& c, const std::string& k, const json& v) {
         c.grid.weight_decays.clear();
         for (const auto& e : as_list(k, v)) c.grid.weight_decays.push_back(as_real(k, e));
       }},
      {"max_gradient_steps",
       [](RunConfig& c, const std::string& k, const json& v) {
         c.grid.max_gradient_steps.clear();
         for (const auto& e : as_list(k, v)) {
           if (e.is_null() || (e.is_string() && e.get<std::string>() == "inf"))
             c.grid.max_gradient_steps.push_back(std::nullopt);
           else
             c.grid.max_gradient_steps.push_back(as_count(k, e));
         }
       }},
      {"architectures",
       [](RunConfig& c, const std::string& k, const json& v) {
         c.grid.architectures.clear();
         for (const auto& e : as_list(k, v)) {
           if (!e.is_array() || e.size() != 2)
             throw ConfigError(k + ": each architecture is [hidden_layers, hidden_width], got " + e.dump());
           c.grid.architectures.push_back({as_count(k, e[0]), as_count(k, e[1])});
         }
       }},
      {"seeds",
       [](RunConfig& c, const std::string& k, const json& v) {
         c.grid.seeds.clear();
         for (const auto& e : as_list(k, v)) c.grid.seeds.push_back(as_seed(k, e));
       }},
      {"batch_size", [](RunConfig& c, const std::string& k, const json& v) { c.batch_size = as_count(k, v); }},
      {"max_epochs", [](RunConfig& c, const std::string& k, const json& v) { c.max_epochs = as_count(k, v); }},
      {"control_task_seed",
       [](RunConfig& c, const std::string& k, const json& v) { c.control_task_seed = as_seed(k, v); }},
      {"control_function_seed",
       [](RunConfig& c, const std::string& k, const json& v) { c.control_function_seed = as_seed(k, v); }},
      {"control_task_granularity",
       [](RunConfig& c, const std::string& k, const json& v) { c.control_task_granularity = as_granularity(k, v); }},
      {"control_function_granularity",
       [](RunConfig& c, const std::string& k, const json& v) {
         c.control_function_granularity = as_granularity(k, v);
       }},
      {"control_distribution",
       [](RunConfig& c, const std::string& k, const json& v) {
         const auto d = parse_distribution(as_text(k, v));
         if (!d) throw ConfigError(k + ": expected \"normal\" or \"uniform\", got " + v.dump());
         c.control_distribution = *d;
       }},
      {"control_pool_size", [](RunConfig& c, const std::string& k, const json& v) { c.control_pool_size = as_count(k, v); }},
      {"output_dir", [](RunConfig& c, const std::string& k, const json& v) { c.output_dir = as_text(k, v); }},
      {"workers",
       [](RunConfig& c, const std::string& k, const json& v) {
         const auto n = as_count(k, v);
         if (n == 0) throw ConfigError(k + ": must be >= 1");
         c.workers = n;
       }},
      {"log_base",
       [](RunConfig& c, const std::string& k, const json& v) {
         const auto s = as_text(k, v);
         if (s == "nats")
           c.log_base = LogBase::nats;
         else if (s == "bits")
           c.log_base = LogBase::bits;
         else
           throw ConfigError(k + ": expected \"nats\" or \"bits\", got " + v.dump());
       }},
  };
  return table;
}

// 1-based line of the first occurrence of "key" as an object key.
std::size_t line_of_key(std::string_view text, const std::string& key) {
  const std::string needle = "\"" + key + "\"";
  const auto pos = text.find(needle);
  if (pos == std::string_view::npos) return 0;
  return static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(pos), '\n')) + 1;
}

std::size_t line_of_offset(std::string_view text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n')) + 1;
}

}  // namespace

void apply_config_field(RunConfig& cfg, const std::string& key, const json& value) {
  const auto& table = setters();
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown key \"" + key + "\"");
  it->second(cfg, key, value);
}

void RunConfig::validate() const {
  if (dataset.has_value() == synthetic.has_value())
    throw ConfigError("exactly one of \"dataset\" or the synth_* keys must be given");
  if (synthetic) synthetic->validate();
  grid.validate();
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (max_epochs == 0) throw ConfigError("max_epochs must be >= 1");
}

json RunConfig::to_json() const {
  json j;
  if (dataset) j["dataset"] = dataset->string();
  if (synthetic) {
    const auto& s = *synthetic;
    j["synth_types"] = s.type_count;
    j["synth_labels"] = s.label_count;
    j["synth_dim"] = s.embedding_dim;
    j["synth_noise"] = s.label_noise;
    j["synth_train"] = s.train_tokens;
    j["synth_dev"] = s.dev_tokens;
    j["synth_test"] = s.test_tokens;
    j["synth_scheme"] = std::string(scheme_name(s.scheme));
    j["synth_spread"] = s.cluster_spread;
    j["synth_zipf"] = s.zipf_exponent;
    j["synth_vector_noise"] = s.vector_noise;
    j["synth_seed"] = s.seed;
  }
  j["learning_rates"] = grid.learning_rates;
  j["weight_decays"] = grid.weight_decays;
  json steps = json::array();
  for (const auto& s : grid.max_gradient_steps) steps.push_back(s ? json(*s) : json("inf"));
  j["max_gradient_steps"] = steps;
  json arch = json::array();
  for (const auto& a : grid.architectures) arch.push_back({a.hidden_layers, a.hidden_width});
  j["architectures"] = arch;
  j["seeds"] = grid.seeds;
  j["batch_size"] = batch_size;
  j["max_epochs"] = max_epochs;
  j["control_task_seed"] = control_task_seed;
  j["control_function_seed"] = control_function_seed;
  j["control_task_granularity"] = std::string(granularity_name(control_task_granularity));
  j["control_function_granularity"] = std::string(granularity_name(control_function_granularity));
  j["control_distribution"] = std::string(distribution_name(control_distribution));
  j["control_pool_size"] = control_pool_size;
  j["output_dir"] = output_dir.string();
  if (workers) j["workers"] = *workers;
  j["log_base"] = log_base == LogBase::bits ? "bits" : "nats";
  return j;
}

RunConfig parse_run_config(std::string_view text, const std::string& origin) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ConfigError(origin + ":" + std::to_string(line_of_offset(text, e.byte)) + ": malformed JSON: " + e.what());
  }
  if (!doc.is_object()) throw ConfigError(origin + ":1: config must be a JSON object");
  RunConfig cfg;
  for (const auto& [key, value] : doc.items()) {
    try {
      apply_config_field(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(line_of_key(text, key)) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  RunConfig cfg = parse_run_config(buf.str(), path.string());
  // Relative dataset paths resolve against the config file's directory.
  if (cfg.dataset && cfg.dataset->is_relative()) cfg.dataset = path.parent_path() / *cfg.dataset;
  return cfg;
}

void apply_override(RunConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0)
    throw ConfigError("--set expects key=value, got \"" + std::string(assignment) + "\"");
  const std::string key(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  try {
    apply_config_field(cfg, key, value);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("--set: ") + e.what());
  }
}

std::size_t resolve_workers(const RunConfig& cfg) {
  if (cfg.workers) return *cfg.workers;
  if (const char* env = std::getenv("PROBEKIT_WORKERS"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const unsigned long long n = std::strtoull(env, &end, 10);
    if (end == nullptr || *end != '\0' || n == 0)
      throw ConfigError(std::string("PROBEKIT_WORKERS must be a positive integer, got \"") + env + "\"");
    return static_cast<std::size_t>(n);
  }
  return 1;
}

PreparedData prepare_data(const RunConfig& cfg) {
  cfg.validate();
  PreparedData out;
  if (cfg.synthetic) {
    auto [ds, truth] = generate(*cfg.synthetic);
    out.dataset = std::move(ds);
    out.truth = std::move(truth);
    return out;
  }
  const fs::path& p = *cfg.dataset;
  if (!fs::exists(p)) throw DataError("dataset not found: " + p.string());
  out.dataset = load_dataset(p);
  const fs::path dir = fs::is_directory(p) ? p : p.parent_path();
  if (has_truth(dir)) out.truth = load_truth(dir);
  return out;
}

ControlTaskAssignment make_task_assignment(const RunConfig& cfg, const LabeledEmbeddingDataset& ds) {
  return make_control_task(ds, cfg.control_task_seed, cfg.control_task_granularity);
}

ControlFunctionAssignment make_function_assignment(const RunConfig& cfg,
                                                   const LabeledEmbeddingDataset& ds) {
  return make_control_function(ds, cfg.control_function_seed,
                               {cfg.control_function_granularity, cfg.control_distribution, cfg.control_pool_size});
}

}  // namespace probekit
