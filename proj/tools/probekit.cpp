// probekit command-line entry point.
//
// Errors are written to stderr as one JSON object per line. Exit code 0 means
// no error, 2 a usage or configuration error, 1 anything else.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "probekit/criteria.hpp"
#include "probekit/run_config.hpp"
#include "probekit/sweep.hpp"
#include "probekit/synth.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace probekit;

namespace {

void diagnostic(const std::string& severity, const std::string& kind, const std::string& message) {
  std::cerr << json{{"severity", severity}, {"kind", kind}, {"message", message}}.dump() << "\n";
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << j.dump(2) << "\n";
}

double unit_scale(LogBase b) { return b == LogBase::bits ? 1.0 / std::log(2.0) : 1.0; }

// Options shared by the config-driven subcommands.
struct CommonOptions {
  std::string config;
  std::vector<std::string> sets;
  std::string dataset;
  std::string out;
  std::size_t workers = 0;
  bool bits = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config, "Flat JSON run configuration (see docs/format.md)");
    cmd->add_option("--set", sets, "Override one config key: key=value (repeatable)");
    cmd->add_option("--dataset", dataset, "PRB1 dataset directory or manifest; replaces any synth_* settings");
    cmd->add_option("--out", out, "Output directory (config key output_dir)");
    cmd->add_option("--workers", workers, "Concurrent training runs (falls back to PROBEKIT_WORKERS, then 1)")
        ->check(CLI::PositiveNumber);
    cmd->add_flag("--bits", bits, "Report information quantities in bits instead of nats");
  }

  RunConfig resolve() const {
    RunConfig cfg = config.empty() ? RunConfig{} : load_run_config(config);
    if (!dataset.empty()) {
      cfg.dataset = fs::path(dataset);
      cfg.synthetic.reset();
    }
    for (const auto& s : sets) apply_override(cfg, s);
    if (!out.empty()) cfg.output_dir = out;
    if (workers > 0) cfg.workers = workers;
    if (bits) cfg.log_base = LogBase::bits;
    cfg.validate();
    return cfg;
  }
};

// ---------------------------------------------------------------------------

struct GenOptions {
  SyntheticSpec spec;
  std::string scheme = "random_gaussian";
  std::string out;
};

void cmd_gen_synthetic(const GenOptions& o) {
  SyntheticSpec spec = o.spec;
  const auto scheme = parse_scheme(o.scheme);
  if (!scheme) throw SpecError("unknown embedding scheme \"" + o.scheme + "\"");
  spec.scheme = *scheme;
  auto [ds, truth] = generate(spec);
  const fs::path dir(o.out);
  save_dataset(ds, dir);
  save_truth(truth, dir);
  std::cout << json{{"output_dir", dir.string()},
                    {"records", ds.records.size()},
                    {"true_mutual_information", true_mutual_information(truth)},
                    {"label_entropy", true_label_entropy(truth)}}
                   .dump()
            << "\n";
}

void cmd_train(const RunConfig& cfg, const std::string& arm_text) {
  const PreparedData data = prepare_data(cfg);
  const auto& ds = data.dataset;
  const auto task = make_task_assignment(cfg, ds);
  const auto function = make_function_assignment(cfg, ds);
  TargetSource targets = TargetSource::gold();
  if (arm_text == "control_task")
    targets = TargetSource::control(task);
  else if (arm_text == "control_function")
    targets = TargetSource::control(function);
  else if (arm_text != "probe")
    throw std::invalid_argument("--arm must be probe, control_task or control_function");

  const GridPoint point = enumerate_grid(cfg.grid).front();
  const ProbeConfig pc = probe_config(point, cfg.grid.seeds.front(), cfg.batch_size, cfg.max_epochs);
  const ProbeData pd = materialize(ds, targets);
  const TrainedProbe probe = train(pc, pd);
  const fs::path dir = cfg.output_dir / ("probe_" + arm_text);
  save_probe(probe, dir);

  const double k = unit_scale(cfg.log_base);
  json evals;
  for (Split s : kAllSplits) {
    const EvalResult e = evaluate(probe.params, pd, s);
    evals[std::string(split_name(s))] = {{"cross_entropy", e.cross_entropy * k}, {"accuracy", e.accuracy}};
  }
  const json summary{{"config_id", point.config_id}, {"seed", pc.seed},          {"arm", arm_text},
                     {"steps_taken", probe.steps_taken}, {"best_step", probe.best_step},
                     {"unit", cfg.log_base == LogBase::bits ? "bits" : "nats"}, {"eval", evals}};
  write_json(dir / "eval.json", summary);
  std::cout << summary.dump() << "\n";
}

// Returns false when the correlations could not be computed; results are
// written either way.
bool cmd_sweep(const RunConfig& cfg) {
  const PreparedData data = prepare_data(cfg);
  const auto& ds = data.dataset;
  const auto task = make_task_assignment(cfg, ds);
  const auto function = make_function_assignment(cfg, ds);

  SweepOptions options;
  options.workers = resolve_workers(cfg);
  options.batch_size = cfg.batch_size;
  options.max_epochs = cfg.max_epochs;
  const SweepResults results = run_sweep(cfg.grid, ds, task, function, options);

  for (const auto& r : results.records)
    if (!r.ok) diagnostic("warning", "run_failed", r.point.config_id + ": " + r.failure);

  CorrelationTable table;
  bool correlated = true;
  if (results.records.size() - results.failed_count() >= 3) {
    try {
      table = correlate_criteria(results);
    } catch (const std::domain_error& e) {
      correlated = false;
      table.n = results.records.size() - results.failed_count();
      table.excluded_failed = results.failed_count();
      diagnostic("error", "correlation", e.what());
    }
  } else {
    table.n = results.records.size() - results.failed_count();
    table.excluded_failed = results.failed_count();
    diagnostic("warning", "too_few_configs",
               "correlations need at least 3 successful configurations; correlations.json has no pairs");
  }
  emit_results(results, table, cfg.output_dir, cfg.log_base);

  json resolved = cfg.to_json();
  // Neither is part of the result's identity.
  resolved.erase("workers");
  resolved.erase("output_dir");
  write_json(cfg.output_dir / "run_config.json", resolved);
  fs::create_directories(cfg.output_dir / "controls");
  save_control_task(task, cfg.output_dir / "controls" / "control_task.tsv");
  save_control_function(function, cfg.output_dir / "controls" / "control_function.tsv",
                        cfg.output_dir / "controls" / "control_function.f32");

  std::cout << json{{"output_dir", cfg.output_dir.string()},
                    {"configs", results.records.size()},
                    {"failed", results.failed_count()},
                    {"correlations", correlations_json(table, results)["pairs"]}}
                   .dump()
            << "\n";
  return correlated;
}

void cmd_verify_theory(const RunConfig& cfg, bool perfect) {
  const PreparedData data = prepare_data(cfg);
  if (!data.truth)
    throw TheoryUnavailable(
        "ground truth unavailable: exact I(T;R) and KL terms are intractable without a known generating "
        "distribution; use a synthetic dataset (synth_* keys or a directory with truth.json)");
  const auto& ds = data.dataset;
  const auto& truth = *data.truth;
  const auto task = make_task_assignment(cfg, ds);
  const auto function = make_function_assignment(cfg, ds);
  const double k = unit_scale(cfg.log_base);

  json reports = json::array();
  double max_decomposition = 0.0, max_gain = 0.0, max_delta_p = 0.0, max_delta_h = 0.0, max_eq3 = 0.0;
  std::size_t flagged = 0;
  auto add = [&](const std::string& id, const TheoryErrorReport& r) {
    max_decomposition = std::max(max_decomposition, std::abs(r.decomposition_residual));
    max_gain = std::max(max_gain, std::abs(r.gain_identity_residual));
    max_delta_p = std::max(max_delta_p, std::abs(r.delta_p_residual));
    max_delta_h = std::max(max_delta_h, std::abs(r.delta_h_residual));
    max_eq3 = std::max(max_eq3, std::abs(r.eq3_residual));
    flagged += r.eq3_flagged ? 1 : 0;
    reports.push_back({{"config_id", id}, {"report", to_json(r, k)}});
  };

  if (perfect) {
    add("perfect", theory_errors(truth, perfect_probes(truth, task, function), task, function, &ds));
  } else {
    const std::array<ProbeData, 3> pd{materialize(ds, TargetSource::gold()),
                                      materialize(ds, TargetSource::control(task)),
                                      materialize(ds, TargetSource::control(function))};
    for (const auto& point : enumerate_grid(cfg.grid)) {
      const ProbeConfig pc = probe_config(point, cfg.grid.seeds.front(), cfg.batch_size, cfg.max_epochs);
      const TrainedProbe p = train(pc, pd[0]);
      const TrainedProbe ct = train(pc, pd[1]);
      const TrainedProbe cf = train(pc, pd[2]);
      add(point.config_id, theory_errors(truth, p, ct, cf, task, function, &ds));
    }
  }

  const json out{{"unit", cfg.log_base == LogBase::bits ? "bits" : "nats"},
                 {"mode", perfect ? "perfect_probes" : "trained"},
                 {"configs", reports},
                 {"summary",
                  {{"max_abs_decomposition_residual", max_decomposition * k},
                   {"max_abs_gain_identity_residual", max_gain * k},
                   {"max_abs_delta_p_residual", max_delta_p * k},
                   {"max_abs_delta_h_residual", max_delta_h * k},
                   {"max_abs_eq3_residual", max_eq3 * k},
                   {"eq3_flag_threshold_nats", kEq3FlagThreshold},
                   {"eq3_flagged", flagged}}}};
  write_json(cfg.output_dir / "theory_report.json", out);
  std::cout << out["summary"].dump() << "\n";
}

void cmd_correlate(const std::string& results_path, const std::string& out) {
  const SweepResults results = read_results_csv(results_path);
  const json j = correlations_json(correlate_criteria(results), results);
  if (out.empty())
    std::cout << j.dump(2) << "\n";
  else
    write_json(out, j);
}

void cmd_export_plots(const std::string& results_path, const std::string& out) {
  // Values are already in the unit the CSV was written in.
  emit_plotdata(read_results_csv(results_path), out, LogBase::nats);
  std::cout << json{{"output_dir", (fs::path(out) / "plotdata").string()}}.dump() << "\n";
}

json inspect_dataset_dir(const fs::path& dir) {
  const auto ds = load_dataset(dir);
  const auto report = validate_dataset(ds);
  json issues = json::array();
  for (const auto& i : report.issues)
    issues.push_back({{"severity", i.severity == Severity::error ? "error" : "warning"}, {"message", i.message}});
  json splits;
  for (Split s : kAllSplits) splits[std::string(split_name(s))] = ds.count(s);
  json j{{"kind", "dataset"},
         {"embedding_dim", ds.embedding_dim},
         {"type_count", ds.type_count},
         {"label_names", ds.label_names},
         {"splits", splits},
         {"valid", report.ok},
         {"issues", issues},
         {"unseen_type_fraction_test", unseen_type_fraction(ds, Split::test)}};
  if (has_truth(dir)) {
    const auto truth = load_truth(dir);
    if (truth.enumerable()) {
      j["true_mutual_information"] = true_mutual_information(truth);
      j["label_entropy"] = true_label_entropy(truth);
    }
  }
  return j;
}

void cmd_inspect(const std::string& target) {
  const fs::path p(target);
  if (!fs::exists(p)) throw std::runtime_error("not found: " + p.string());
  json j;
  if (fs::is_regular_file(p) && p.extension() == ".csv") {
    const auto results = read_results_csv(p);
    j = {{"kind", "results"}, {"configs", results.records.size()}, {"failed", results.failed_count()}};
  } else {
    const fs::path dir = fs::is_directory(p) ? p : p.parent_path();
    std::ifstream f(dir / "manifest.json");
    if (!f) throw std::runtime_error(dir.string() + " has no manifest.json");
    const json manifest = json::parse(f);
    const std::string format = manifest.value("format", "");
    if (format == "PRB1") {
      j = inspect_dataset_dir(dir);
    } else if (format == "PRBPROBE1") {
      const TrainedProbe probe = load_probe(dir);
      json shapes = json::array();
      for (const auto& l : probe.params.layers) shapes.push_back({l.weight.rows(), l.weight.cols()});
      j = {{"kind", "probe"},
           {"layers", shapes},
           {"parameter_count", probe.params.parameter_count()},
           {"steps_taken", probe.steps_taken},
           {"best_step", probe.best_step},
           {"best_dev_loss", probe.best_dev_loss},
           {"trace_entries", probe.trace.size()}};
    } else {
      throw std::runtime_error(dir.string() + ": unknown manifest format \"" + format + "\"");
    }
  }
  std::cout << j.dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"probekit: probe selection criteria with control tasks and control functions"};
  app.require_subcommand(1);

  GenOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-synthetic", "Write a synthetic PRB1 dataset plus truth.json");
  gen_cmd->add_option("--types", gen.spec.type_count, "Number of word types K")->required();
  gen_cmd->add_option("--labels", gen.spec.label_count, "Number of labels k (k <= K)")->required();
  gen_cmd->add_option("--dim", gen.spec.embedding_dim, "Embedding width d")->required();
  gen_cmd->add_option("--noise", gen.spec.label_noise, "Label noise mass in [0,1)")->capture_default_str();
  gen_cmd->add_option("--train", gen.spec.train_tokens, "Train tokens")->capture_default_str();
  gen_cmd->add_option("--dev", gen.spec.dev_tokens, "Dev tokens")->capture_default_str();
  gen_cmd->add_option("--test", gen.spec.test_tokens, "Test tokens")->capture_default_str();
  gen_cmd->add_option("--scheme", gen.scheme, "orthogonal_like | random_gaussian | clustered")->capture_default_str();
  gen_cmd->add_option("--spread", gen.spec.cluster_spread, "Clustered scheme jitter")->capture_default_str();
  gen_cmd->add_option("--zipf", gen.spec.zipf_exponent, "Zipf exponent of p(z); 0 is uniform")->capture_default_str();
  gen_cmd->add_option("--vector-noise", gen.spec.vector_noise, "Per-token additive noise std (not enumerable)")
      ->capture_default_str();
  gen_cmd->add_option("--seed", gen.spec.seed, "Generator seed")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();

  CommonOptions train_opts, sweep_opts, theory_opts;
  std::string arm = "probe";
  auto* train_cmd = app.add_subcommand("train", "Train one probe: first grid point, first seed");
  train_opts.attach(train_cmd);
  train_cmd->add_option("--arm", arm, "probe | control_task | control_function")->capture_default_str();

  auto* sweep_cmd = app.add_subcommand("sweep", "Run the grid over all three arms and correlate the criteria");
  sweep_opts.attach(sweep_cmd);

  bool perfect = false;
  auto* theory_cmd = app.add_subcommand("verify-theory", "Exact error analysis against synthetic ground truth");
  theory_opts.attach(theory_cmd);
  theory_cmd->add_flag("--perfect-probes", perfect, "Use probes that emit the true conditionals");

  std::string corr_results, corr_out;
  auto* corr_cmd = app.add_subcommand("correlate", "Spearman correlations from an existing results.csv");
  corr_cmd->add_option("--results", corr_results, "results.csv")->required();
  corr_cmd->add_option("--out", corr_out, "Write JSON here instead of stdout");

  std::string inspect_target;
  auto* inspect_cmd = app.add_subcommand("inspect", "Summarize a dataset, probe checkpoint or results.csv");
  inspect_cmd->add_option("path", inspect_target, "Directory or file")->required();

  std::string plot_results, plot_out;
  auto* plot_cmd = app.add_subcommand("export-plots", "Regenerate plotdata/*.tsv from results.csv");
  plot_cmd->add_option("--results", plot_results, "results.csv")->required();
  plot_cmd->add_option("--out", plot_out, "Directory receiving plotdata/")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    diagnostic("error", "usage", e.what());
    return 2;
  }

  try {
    if (*gen_cmd) cmd_gen_synthetic(gen);
    if (*train_cmd) cmd_train(train_opts.resolve(), arm);
    if (*sweep_cmd && !cmd_sweep(sweep_opts.resolve())) return 1;
    if (*theory_cmd) cmd_verify_theory(theory_opts.resolve(), perfect);
    if (*corr_cmd) cmd_correlate(corr_results, corr_out);
    if (*inspect_cmd) cmd_inspect(inspect_target);
    if (*plot_cmd) cmd_export_plots(plot_results, plot_out);
  } catch (const ConfigError& e) {
    diagnostic("error", "config", e.what());
    return 2;
  } catch (const TheoryUnavailable& e) {
    diagnostic("error", "theory_unavailable", e.what());
    return 1;
  } catch (const DataError& e) {
    diagnostic("error", "data", e.what());
    return 1;
  } catch (const std::exception& e) {
    diagnostic("error", "runtime", e.what());
    return 1;
  }
  return 0;
}
