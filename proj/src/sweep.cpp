#include "probekit/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include <boost/math/distributions/students_t.hpp>

namespace probekit {

namespace fs = std::filesystem;
using json = nlohmann::json;

const char* const kResultsCsvHeader =
    "config_id,learning_rate,weight_decay,max_gradient_steps,hidden_layers,hidden_width,seeds,"
    "status,t_acc,t_ent,f_acc,f_ent,probe_acc,probe_ent,ctask_acc,ctask_ent,cfunc_acc,cfunc_ent";

namespace {

// Shortest round-trip digits, %g style so 3e-4 prints as 0.0003.
std::string fmt_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general);
  return {buf, res.ptr};
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw std::invalid_argument("not a number: '" + s + "'");
  return v;
}

std::string steps_text(const std::optional<std::size_t>& s) { return s ? std::to_string(*s) : "inf"; }

}  // namespace

void SweepGrid::validate() const {
  if (learning_rates.empty() || weight_decays.empty() || max_gradient_steps.empty() ||
      architectures.empty() || seeds.empty())
    throw std::invalid_argument("every sweep grid list must be non-empty");
  for (double lr : learning_rates)
    if (!(lr > 0.0)) throw std::invalid_argument("learning rates must be positive");
  for (double wd : weight_decays)
    if (!(wd >= 0.0)) throw std::invalid_argument("weight decays must be >= 0");
  for (const auto& s : max_gradient_steps)
    if (s && *s == 0) throw std::invalid_argument("max_gradient_steps entries must be >= 1");
  for (const auto& a : architectures)
    if (a.hidden_layers > 0 && a.hidden_width == 0)
      throw std::invalid_argument("hidden architectures need a positive width");
  std::set<std::uint64_t> distinct(seeds.begin(), seeds.end());
  if (distinct.size() != seeds.size()) throw std::invalid_argument("duplicate seeds in grid");
}

std::size_t SweepGrid::config_count() const {
  return learning_rates.size() * weight_decays.size() * max_gradient_steps.size() * architectures.size();
}

SweepGrid desk_grid() {
  SweepGrid g;
  // Low enough that 1500 steps leave some configs short of memorizing the
  // control arms; at higher rates every config saturates and t_acc is flat.
  g.learning_rates = {1e-3, 3e-4, 1e-4};
  g.weight_decays = {0.0, 0.1};
  g.max_gradient_steps = {std::size_t{1500}};
  g.architectures = {{0, 0}, {1, 40}, {2, 40}};
  return g;
}

SweepGrid reference_grid() {
  SweepGrid g;
  g.learning_rates = {1e-4, 5e-5, 3e-5, 1e-5, 5e-6, 3e-6};
  g.weight_decays = {0.0, 0.01, 0.1, 1.0};
  g.max_gradient_steps = {std::size_t{1500}, std::size_t{3000}, std::size_t{6000}, std::size_t{12000},
                          std::size_t{24000}, std::size_t{96000}, std::nullopt};
  g.architectures = {{0, 0}, {1, 40}, {1, 80}, {1, 160}, {2, 40}, {2, 80}};
  return g;
}

std::string make_config_id(const GridPoint& p) {
  std::string id = "h" + std::to_string(p.architecture.hidden_layers);
  if (p.architecture.hidden_layers > 0) id += "x" + std::to_string(p.architecture.hidden_width);
  id += "_lr" + fmt_double(p.learning_rate) + "_wd" + fmt_double(p.weight_decay) + "_steps" +
        steps_text(p.max_gradient_steps);
  return id;
}

std::vector<GridPoint> enumerate_grid(const SweepGrid& grid) {
  std::vector<GridPoint> points;
  std::set<std::string> ids;
  for (const auto& arch : grid.architectures)
    for (double lr : grid.learning_rates)
      for (double wd : grid.weight_decays)
        for (const auto& steps : grid.max_gradient_steps) {
          GridPoint p{"", lr, wd, steps, arch};
          p.config_id = make_config_id(p);
          if (!ids.insert(p.config_id).second)
            throw std::invalid_argument("duplicate grid point " + p.config_id);
          points.push_back(std::move(p));
        }
  return points;
}

ProbeConfig probe_config(const GridPoint& p, std::uint64_t seed, std::size_t batch_size,
                         std::size_t max_epochs) {
  ProbeConfig c;
  c.hidden_layers = p.architecture.hidden_layers;
  c.hidden_width = p.architecture.hidden_layers > 0 ? p.architecture.hidden_width : 0;
  c.learning_rate = p.learning_rate;
  c.weight_decay = p.weight_decay;
  c.max_gradient_steps = p.max_gradient_steps;
  c.batch_size = batch_size;
  c.max_epochs = max_epochs;
  c.seed = seed;
  return c;
}

std::string_view arm_name(Arm a) {
  switch (a) {
    case Arm::probe: return "probe";
    case Arm::control_task: return "control_task";
    case Arm::control_function: return "control_function";
  }
  return "?";
}

std::size_t SweepResults::failed_count() const {
  return static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [](const SweepRecord& r) { return !r.ok; }));
}

// ---------------------------------------------------------------------------
// run_sweep

namespace {

// Unbounded multi-producer, single-consumer queue.
template <typename T>
class Channel {
 public:
  void send(T value) {
    {
      std::lock_guard lock(mutex_);
      queue_.push_back(std::move(value));
    }
    ready_.notify_one();
  }

  T receive() {
    std::unique_lock lock(mutex_);
    ready_.wait(lock, [this] { return !queue_.empty(); });
    T value = std::move(queue_.front());
    queue_.pop_front();
    return value;
  }

 private:
  std::mutex mutex_;
  std::condition_variable ready_;
  std::deque<T> queue_;
};

struct Job {
  std::size_t config = 0;
  Arm arm = Arm::probe;
  std::size_t seed_index = 0;
};

struct Finished {
  std::size_t job = 0;
  RunOutcome outcome;
};

RunOutcome run_one(const ProbeConfig& config, const ProbeData& data, Split split) {
  RunOutcome out;
  try {
    const TrainedProbe probe = train(config, data);
    out.eval = evaluate(probe.params, data, split);
    out.steps_taken = probe.steps_taken;
    out.best_step = probe.best_step;
  } catch (const TrainingDiverged& e) {
    out.ok = false;
    out.steps_taken = e.step();
    out.failure = e.what();
  } catch (const NumericalError& e) {
    out.ok = false;
    out.failure = e.what();
  }
  return out;
}

}  // namespace

SweepResults run_sweep(const SweepGrid& grid, const LabeledEmbeddingDataset& ds,
                       const ControlTaskAssignment& task, const ControlFunctionAssignment& function,
                       const SweepOptions& options) {
  grid.validate();
  const auto report = validate_dataset(ds);
  if (!report.ok) throw DataError("invalid dataset: " + report.issues.front().message);

  // One materialization per arm, shared read-only by every run.
  const std::array<ProbeData, 3> data{materialize(ds, TargetSource::gold()),
                                      materialize(ds, TargetSource::control(task)),
                                      materialize(ds, TargetSource::control(function))};

  const auto points = enumerate_grid(grid);
  const std::size_t n_seeds = grid.seeds.size();
  std::vector<Job> jobs;
  jobs.reserve(points.size() * 3 * n_seeds);
  for (std::size_t c = 0; c < points.size(); ++c)
    for (Arm arm : {Arm::probe, Arm::control_task, Arm::control_function})
      for (std::size_t s = 0; s < n_seeds; ++s) jobs.push_back({c, arm, s});

  std::vector<RunOutcome> outcomes(jobs.size());
  Channel<Finished> channel;
  std::atomic<std::size_t> next{0};
  const std::size_t workers = std::max<std::size_t>(1, std::min(options.workers, jobs.size()));
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t j = next.fetch_add(1); j < jobs.size(); j = next.fetch_add(1)) {
          const Job& job = jobs[j];
          const ProbeConfig config = probe_config(points[job.config], grid.seeds[job.seed_index],
                                                  options.batch_size, options.max_epochs);
          channel.send({j, run_one(config, data[static_cast<std::size_t>(job.arm)], options.eval_split)});
        }
      });
    // The aggregator is the only writer of the outcome table.
    for (std::size_t received = 0; received < jobs.size(); ++received) {
      Finished f = channel.receive();
      outcomes[f.job] = std::move(f.outcome);
    }
  }

  SweepResults results;
  results.provenance.dataset_fingerprint = [&] {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(dataset_fingerprint(ds)));
    return std::string(buf);
  }();
  results.provenance.control_task_seed = task.seed;
  results.provenance.control_function_seed = function.seed;
  results.provenance.control_task_granularity = std::string(granularity_name(task.granularity));
  results.provenance.control_function_granularity = std::string(granularity_name(function.granularity));
  results.provenance.seeds = grid.seeds;

  for (std::size_t c = 0; c < points.size(); ++c) {
    SweepRecord rec;
    rec.point = points[c];
    rec.runs.assign(3, {});
    std::array<std::vector<EvalResult>, 3> evals;
    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t s = 0; s < n_seeds; ++s) {
        const RunOutcome& o = outcomes[(c * 3 + a) * n_seeds + s];
        rec.runs[a].push_back(o);
        if (!o.ok && rec.ok) {
          rec.ok = false;
          rec.failure = std::string(arm_name(static_cast<Arm>(a))) + " seed " +
                        std::to_string(grid.seeds[s]) + ": " + o.failure;
        }
        evals[a].push_back(o.eval);
      }
    if (rec.ok) {
      rec.criteria = compute_criteria(evals[0], evals[1], evals[2]);
      rec.criteria.seeds = grid.seeds;
    }
    rec.criteria.config_id = rec.point.config_id;
    results.records.push_back(std::move(rec));
  }
  // Order-normalized by config id, independent of how the jobs were scheduled.
  std::sort(results.records.begin(), results.records.end(),
            [](const SweepRecord& a, const SweepRecord& b) { return a.point.config_id < b.point.config_id; });
  return results;
}

// ---------------------------------------------------------------------------
// Spearman

std::vector<double> average_ranks(const std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = mid;
    i = j + 1;
  }
  return ranks;
}

namespace {

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) throw std::domain_error("zero rank variance: correlation undefined");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

void check_pair(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size())
    throw std::invalid_argument("length mismatch: " + std::to_string(x.size()) + " vs " + std::to_string(y.size()));
  if (x.size() < 3) throw std::invalid_argument("spearman needs at least 3 observations");
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw std::invalid_argument("non-finite observation");
}

}  // namespace

SpearmanResult spearman(const std::vector<double>& x, const std::vector<double>& y) {
  check_pair(x, y);
  SpearmanResult r;
  r.rho = pearson(average_ranks(x), average_ranks(y));
  const double dof = static_cast<double>(x.size() - 2);
  if (std::abs(r.rho) >= 1.0) {
    r.p_value = 0.0;
    return r;
  }
  const double t = r.rho * std::sqrt(dof / ((1.0 - r.rho) * (1.0 + r.rho)));
  const boost::math::students_t_distribution<double> dist(dof);
  r.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  return r;
}

double spearman_permutation_pvalue(const std::vector<double>& x, const std::vector<double>& y) {
  check_pair(x, y);
  if (x.size() > 10) throw std::invalid_argument("exact permutation test limited to n <= 10");
  const auto rx = average_ranks(x);
  auto ry = average_ranks(y);
  const double observed = std::abs(pearson(rx, ry));
  std::sort(ry.begin(), ry.end());
  std::size_t extreme = 0, total = 0;
  do {
    ++total;
    if (std::abs(pearson(rx, ry)) >= observed - 1e-12) ++extreme;
  } while (std::next_permutation(ry.begin(), ry.end()));
  return static_cast<double>(extreme) / static_cast<double>(total);
}

const CorrelationPair& CorrelationTable::pair(const std::string& x, const std::string& y) const {
  for (const auto& p : pairs)
    if (p.x == x && p.y == y) return p;
  throw std::out_of_range("no correlation pair (" + x + ", " + y + ")");
}

CorrelationTable correlate_criteria(const SweepResults& results) {
  CorrelationTable table;
  std::vector<double> t_acc, t_ent, f_acc, f_ent;
  for (const auto& r : results.records) {
    if (!r.ok) {
      ++table.excluded_failed;
      continue;
    }
    t_acc.push_back(r.criteria.t_acc);
    t_ent.push_back(r.criteria.t_ent);
    f_acc.push_back(r.criteria.f_acc);
    f_ent.push_back(r.criteria.f_ent);
  }
  table.n = t_acc.size();
  if (table.n < 3)
    throw std::invalid_argument("need at least 3 successful configurations, have " + std::to_string(table.n));
  table.pairs.push_back({"t_acc", "f_ent", spearman(t_acc, f_ent)});
  table.pairs.push_back({"t_acc", "t_ent", spearman(t_acc, t_ent)});
  table.pairs.push_back({"f_acc", "f_ent", spearman(f_acc, f_ent)});
  return table;
}

// ---------------------------------------------------------------------------
// Output files

namespace {

double unit_scale(LogBase base) { return base == LogBase::bits ? 1.0 / std::log(2.0) : 1.0; }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> parse_csv_line(std::istream& in, bool& ok) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false, any = false;
  char c;
  ok = false;
  while (in.get(c)) {
    any = true;
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field += '"';
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      break;
    } else if (c != '\r') {
      field += c;
    }
  }
  if (any) {
    fields.push_back(std::move(field));
    ok = true;
  }
  return fields;
}

std::string arch_label(const Architecture& a) {
  return a.hidden_layers == 0 ? "h0" : "h" + std::to_string(a.hidden_layers) + "x" + std::to_string(a.hidden_width);
}

}  // namespace

std::string results_csv(const SweepResults& results, LogBase base) {
  const double k = unit_scale(base);
  std::string out = std::string(kResultsCsvHeader) + "\n";
  for (const auto& r : results.records) {
    const auto& p = r.point;
    std::vector<std::string> row{
        csv_field(p.config_id),
        fmt_double(p.learning_rate),
        fmt_double(p.weight_decay),
        steps_text(p.max_gradient_steps),
        std::to_string(p.architecture.hidden_layers),
        std::to_string(p.architecture.hidden_width),
        std::to_string(r.runs.empty() ? 0 : r.runs.front().size()),
        r.ok ? "ok" : "failed"};
    if (r.ok) {
      const auto& c = r.criteria;
      for (double v : {c.t_acc, c.t_ent * k, c.f_acc, c.f_ent * k, c.probe_mean.accuracy,
                       c.probe_mean.cross_entropy * k, c.control_task_mean.accuracy,
                       c.control_task_mean.cross_entropy * k, c.control_function_mean.accuracy,
                       c.control_function_mean.cross_entropy * k})
        row.push_back(fmt_double(v));
    } else {
      row.insert(row.end(), 10, "");
    }
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += row[i];
    }
    out += '\n';
  }
  return out;
}

SweepResults read_results_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  bool ok = false;
  const auto header = parse_csv_line(in, ok);
  std::string joined;
  for (std::size_t i = 0; i < header.size(); ++i) joined += (i ? "," : "") + header[i];
  if (!ok || joined != kResultsCsvHeader) throw std::runtime_error(path.string() + ": unexpected header");

  SweepResults results;
  std::size_t line = 1;
  while (true) {
    auto f = parse_csv_line(in, ok);
    ++line;
    if (!ok) break;
    if (f.size() == 1 && f[0].empty()) continue;
    if (f.size() != 18)
      throw std::runtime_error(path.string() + ":" + std::to_string(line) + ": expected 18 fields");
    try {
      SweepRecord r;
      r.point.config_id = f[0];
      r.point.learning_rate = parse_double(f[1]);
      r.point.weight_decay = parse_double(f[2]);
      if (f[3] != "inf") r.point.max_gradient_steps = static_cast<std::size_t>(std::stoull(f[3]));
      r.point.architecture = {static_cast<std::size_t>(std::stoull(f[4])), static_cast<std::size_t>(std::stoull(f[5]))};
      r.ok = f[7] == "ok";
      r.criteria.config_id = f[0];
      if (r.ok) {
        auto& c = r.criteria;
        c.t_acc = parse_double(f[8]);
        c.t_ent = parse_double(f[9]);
        c.f_acc = parse_double(f[10]);
        c.f_ent = parse_double(f[11]);
        c.probe_mean.accuracy = parse_double(f[12]);
        c.probe_mean.cross_entropy = parse_double(f[13]);
        c.control_task_mean.accuracy = parse_double(f[14]);
        c.control_task_mean.cross_entropy = parse_double(f[15]);
        c.control_function_mean.accuracy = parse_double(f[16]);
        c.control_function_mean.cross_entropy = parse_double(f[17]);
      } else {
        r.failure = "failed";
      }
      results.records.push_back(std::move(r));
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line) + ": " + e.what());
    }
  }
  return results;
}

json correlations_json(const CorrelationTable& table, const SweepResults& results) {
  json pairs = json::array();
  for (const auto& p : table.pairs)
    pairs.push_back({{"x", p.x}, {"y", p.y}, {"rho", p.result.rho}, {"p_value", p.result.p_value}});
  json j{{"method", "spearman"},
         {"p_value_method", "t-approximation"},
         {"n", table.n},
         {"excluded_failed", table.excluded_failed},
         {"pairs", pairs}};
  const auto& prov = results.provenance;
  if (!prov.dataset_fingerprint.empty())
    j["provenance"] = {{"dataset_fingerprint", prov.dataset_fingerprint},
                       {"control_task_seed", prov.control_task_seed},
                       {"control_function_seed", prov.control_function_seed},
                       {"control_task_granularity", prov.control_task_granularity},
                       {"control_function_granularity", prov.control_function_granularity},
                       {"seeds", prov.seeds}};
  return j;
}

void emit_plotdata(const SweepResults& results, const fs::path& dir, LogBase base) {
  const double k = unit_scale(base);
  const fs::path out = dir / "plotdata";
  fs::create_directories(out);

  std::vector<const SweepRecord*> ok;
  for (const auto& r : results.records)
    if (r.ok) ok.push_back(&r);
  if (ok.empty()) return;
  double min_wd = ok.front()->point.weight_decay;
  for (const auto* r : ok) min_wd = std::min(min_wd, r->point.weight_decay);

  auto metric = [k](const SweepRecord& r, const std::string& m) {
    const auto& c = r.criteria;
    if (m == "probe_acc") return c.probe_mean.accuracy;
    if (m == "probe_ent") return c.probe_mean.cross_entropy * k;
    if (m == "t_acc") return c.t_acc;
    if (m == "f_acc") return c.f_acc;
    if (m == "t_ent") return c.t_ent * k;
    return c.f_ent * k;  // f_ent
  };

  // For each (architecture, x) keep the record with the highest probe
  // accuracy among the admitted ones; first in grid order wins ties.
  auto family = [&](const std::string& name, auto x_of, bool zero_decay_only,
                    const std::vector<std::string>& metrics) {
    std::map<std::string, std::map<double, const SweepRecord*>> best;
    for (const auto* r : ok) {
      if (zero_decay_only && r->point.weight_decay != min_wd) continue;
      auto& slot = best[arch_label(r->point.architecture)][x_of(*r)];
      if (slot == nullptr || r->criteria.probe_mean.accuracy > slot->criteria.probe_mean.accuracy) slot = r;
    }
    for (const auto& m : metrics)
      for (const auto& [arch, series] : best) {
        std::ofstream f(out / (name + "__" + m + "__" + arch + ".tsv"));
        for (const auto& [x, r] : series) {
          if (std::isinf(x))
            f << "inf";
          else
            f << fmt_double(x);
          f << '\t' << fmt_double(metric(*r, m)) << '\n';
        }
      }
  };

  family(
      "max_gradient_steps",
      [](const SweepRecord& r) {
        return r.point.max_gradient_steps ? static_cast<double>(*r.point.max_gradient_steps)
                                          : std::numeric_limits<double>::infinity();
      },
      true, {"probe_acc", "t_acc", "f_acc", "probe_ent", "t_ent", "f_ent"});
  family("weight_decay", [](const SweepRecord& r) { return r.point.weight_decay; }, false, {"t_acc", "f_ent"});
  family("learning_rate", [](const SweepRecord& r) { return r.point.learning_rate; }, true, {"t_acc", "f_ent"});
}

void emit_results(const SweepResults& results, const CorrelationTable& table, const fs::path& dir,
                  LogBase base) {
  if (results.records.empty()) throw std::invalid_argument("no sweep records to emit");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());

  {
    std::ofstream f(dir / "results.csv", std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + (dir / "results.csv").string());
    f << results_csv(results, base);
  }
  {
    const double k = unit_scale(base);
    std::ofstream f(dir / "runs.csv", std::ios::binary);
    f << "config_id,seed,arm,status,accuracy,cross_entropy,steps_taken,best_step\n";
    for (const auto& r : results.records)
      for (std::size_t a = 0; a < r.runs.size(); ++a)
        for (std::size_t s = 0; s < r.runs[a].size(); ++s) {
          const auto& o = r.runs[a][s];
          f << csv_field(r.point.config_id) << ','
            << (s < results.provenance.seeds.size() ? std::to_string(results.provenance.seeds[s]) : "") << ','
            << arm_name(static_cast<Arm>(a)) << ',' << (o.ok ? "ok" : "failed") << ','
            << (o.ok ? fmt_double(o.eval.accuracy) : "") << ','
            << (o.ok ? fmt_double(o.eval.cross_entropy * k) : "") << ',' << o.steps_taken << ','
            << o.best_step << '\n';
        }
  }
  {
    json j = correlations_json(table, results);
    j["unit"] = base == LogBase::bits ? "bits" : "nats";
    std::ofstream f(dir / "correlations.json");
    f << j.dump(2) << "\n";
  }
  emit_plotdata(results, dir, base);
}

}  // namespace probekit
