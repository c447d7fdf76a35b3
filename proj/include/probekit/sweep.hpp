#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "probekit/controls.hpp"
#include "probekit/criteria.hpp"
#include "probekit/datamodel.hpp"
#include "probekit/probe.hpp"

namespace probekit {

inline const std::vector<std::uint64_t> kDefaultSeeds{73, 421, 9973, 361091};

struct Architecture {
  std::size_t hidden_layers = 0;
  std::size_t hidden_width = 0;
  bool operator==(const Architecture&) const = default;
};

struct SweepGrid {
  std::vector<double> learning_rates;
  std::vector<double> weight_decays;
  std::vector<std::optional<std::size_t>> max_gradient_steps;  // nullopt: no step cap
  std::vector<Architecture> architectures;
  std::vector<std::uint64_t> seeds = kDefaultSeeds;

  void validate() const;
  std::size_t config_count() const;
};

// Small grid used for synthetic acceptance runs: 3 lr x 2 wd x 3 arch, one step cap.
SweepGrid desk_grid();
// Full-scale hyperparameter ranges. The architecture list is a subset.
SweepGrid reference_grid();

struct GridPoint {
  std::string config_id;
  double learning_rate = 0.0;
  double weight_decay = 0.0;
  std::optional<std::size_t> max_gradient_steps;
  Architecture architecture;
};

// Grid enumeration order: architecture, learning rate, weight decay, step cap.
std::vector<GridPoint> enumerate_grid(const SweepGrid& grid);
std::string make_config_id(const GridPoint& p);
ProbeConfig probe_config(const GridPoint& p, std::uint64_t seed, std::size_t batch_size,
                         std::size_t max_epochs);

enum class Arm { probe = 0, control_task = 1, control_function = 2 };
std::string_view arm_name(Arm a);

struct RunOutcome {
  bool ok = true;
  EvalResult eval;
  std::size_t steps_taken = 0;
  std::size_t best_step = 0;
  std::string failure;
};

struct SweepRecord {
  GridPoint point;
  bool ok = true;
  std::string failure;
  CriteriaRecord criteria;
  // [arm][seed index]
  std::vector<std::vector<RunOutcome>> runs;
};

struct SweepProvenance {
  std::string dataset_fingerprint;
  std::uint64_t control_task_seed = 0;
  std::uint64_t control_function_seed = 0;
  std::string control_task_granularity;
  std::string control_function_granularity;
  std::vector<std::uint64_t> seeds;
};

struct SweepResults {
  std::vector<SweepRecord> records;
  SweepProvenance provenance;

  std::size_t failed_count() const;
};

struct SweepOptions {
  std::size_t workers = 1;
  std::size_t batch_size = 128;
  std::size_t max_epochs = 400;
  Split eval_split = Split::test;
};

SweepResults run_sweep(const SweepGrid& grid, const LabeledEmbeddingDataset& ds,
                       const ControlTaskAssignment& task, const ControlFunctionAssignment& function,
                       const SweepOptions& options = {});

struct SpearmanResult {
  double rho = 0.0;
  double p_value = 1.0;
};

// Average (mid) ranks, 1-based.
std::vector<double> average_ranks(const std::vector<double>& values);
SpearmanResult spearman(const std::vector<double>& x, const std::vector<double>& y);
// Two-sided exact permutation p-value; n <= 10.
double spearman_permutation_pvalue(const std::vector<double>& x, const std::vector<double>& y);

struct CorrelationPair {
  std::string x, y;
  SpearmanResult result;
};

struct CorrelationTable {
  std::size_t n = 0;
  std::size_t excluded_failed = 0;
  std::vector<CorrelationPair> pairs;  // (t_acc,f_ent), (t_acc,t_ent), (f_acc,f_ent)

  const CorrelationPair& pair(const std::string& x, const std::string& y) const;
};

CorrelationTable correlate_criteria(const SweepResults& results);

enum class LogBase { nats, bits };

// results.csv, runs.csv, correlations.json, plotdata/*.tsv
void emit_results(const SweepResults& results, const CorrelationTable& table,
                  const std::filesystem::path& dir, LogBase base = LogBase::nats);
void emit_plotdata(const SweepResults& results, const std::filesystem::path& dir,
                   LogBase base = LogBase::nats);
nlohmann::json correlations_json(const CorrelationTable& table, const SweepResults& results);

std::string results_csv(const SweepResults& results, LogBase base = LogBase::nats);
// Reads results.csv back into records (metrics in the file's unit).
SweepResults read_results_csv(const std::filesystem::path& path);

extern const char* const kResultsCsvHeader;

}  // namespace probekit
