#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

#include "probekit/controls.hpp"
#include "probekit/datamodel.hpp"
#include "probekit/sweep.hpp"
#include "probekit/synth.hpp"

// Flat JSON run configuration shared by the CLI subcommands. Every key can
// also be given on the command line as --set key=value.
namespace probekit {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::optional<std::filesystem::path> dataset;
  std::optional<SyntheticSpec> synthetic;

  SweepGrid grid = desk_grid();
  std::size_t batch_size = 128;
  std::size_t max_epochs = 400;

  std::uint64_t control_task_seed = 1;
  std::uint64_t control_function_seed = 2;
  ControlGranularity control_task_granularity = ControlGranularity::type;
  ControlGranularity control_function_granularity = ControlGranularity::type;
  ControlDistribution control_distribution = ControlDistribution::normal;
  std::size_t control_pool_size = 0;

  std::filesystem::path output_dir = "probekit_out";
  std::optional<std::size_t> workers;  // unset: PROBEKIT_WORKERS, then 1
  LogBase log_base = LogBase::nats;

  // Exactly one data source.
  void validate() const;
  nlohmann::json to_json() const;
};

// Sets one key; throws ConfigError naming the key on an unknown key or a
// wrongly typed value.
void apply_config_field(RunConfig& cfg, const std::string& key, const nlohmann::json& value);

// Parses a config document. Errors carry "<origin>:<line>: " context.
RunConfig parse_run_config(std::string_view text, const std::string& origin = "<config>");
RunConfig load_run_config(const std::filesystem::path& path);

// "key=value"; the value is read as JSON when it parses, else as a string.
void apply_override(RunConfig& cfg, std::string_view assignment);

std::size_t resolve_workers(const RunConfig& cfg);

struct PreparedData {
  LabeledEmbeddingDataset dataset;
  std::optional<SyntheticGroundTruth> truth;
};

// Generates the synthetic dataset or loads the one on disk (with truth.json
// when present next to the manifest).
PreparedData prepare_data(const RunConfig& cfg);

ControlTaskAssignment make_task_assignment(const RunConfig& cfg, const LabeledEmbeddingDataset& ds);
ControlFunctionAssignment make_function_assignment(const RunConfig& cfg,
                                                   const LabeledEmbeddingDataset& ds);

}  // namespace probekit
