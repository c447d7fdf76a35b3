#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "oracles.hpp"
#include "probekit/sweep.hpp"
#include "probekit/synth.hpp"
#include "test_support.hpp"

using namespace probekit;
using probekit::testing::TempDir;

namespace {

struct SmallWorld {
  LabeledEmbeddingDataset ds;
  ControlTaskAssignment task;
  ControlFunctionAssignment function;
};

SmallWorld small_world() {
  SyntheticSpec s;
  s.type_count = 16;
  s.label_count = 4;
  s.embedding_dim = 6;
  s.label_noise = 0.2;
  s.train_tokens = 400;
  s.dev_tokens = 100;
  s.test_tokens = 100;
  s.scheme = EmbeddingScheme::clustered;
  SmallWorld w{generate(s).first, {}, {}};
  w.task = make_control_task(w.ds, 1);
  w.function = make_control_function(w.ds, 2);
  return w;
}

SweepGrid small_grid() {
  SweepGrid g;
  g.learning_rates = {1e-2, 1e-3};
  g.weight_decays = {0.0, 0.1};
  g.max_gradient_steps = {std::size_t{20}, std::nullopt};
  g.architectures = {{0, 0}, {1, 8}};
  g.seeds = {73, 421};
  return g;
}

SweepOptions quick_options(std::size_t workers = 1) {
  SweepOptions o;
  o.workers = workers;
  o.batch_size = 64;
  o.max_epochs = 3;
  return o;
}

SweepRecord fake_record(const std::string& id, double t_acc, double f_ent, double t_ent, double f_acc) {
  SweepRecord r;
  r.point.config_id = id;
  r.point.learning_rate = 1e-3;
  r.point.architecture = {1, 10};
  r.criteria.t_acc = t_acc;
  r.criteria.f_ent = f_ent;
  r.criteria.t_ent = t_ent;
  r.criteria.f_acc = f_acc;
  return r;
}

}  // namespace

TEST(Ranks, AverageTies) {
  EXPECT_EQ(average_ranks({10, 20, 20, 40}), (std::vector<double>{1, 2.5, 2.5, 4}));
  EXPECT_EQ(average_ranks({3, 3, 3}), (std::vector<double>{2, 2, 2}));
  EXPECT_EQ(average_ranks({5, 1, 4}), (std::vector<double>{3, 1, 2}));
}

TEST(Spearman, Trivial) {
  EXPECT_DOUBLE_EQ(spearman({1, 2, 3, 4}, {1, 2, 3, 4}).rho, 1.0);
  EXPECT_DOUBLE_EQ(spearman({1, 2, 3, 4}, {4, 3, 2, 1}).rho, -1.0);
}

TEST(Spearman, FrozenWithTies) {
  const auto r = spearman({1, 2, 2, 4}, {1, 3, 2, 4});
  // Rank-then-Pearson at 50 digits: 3/sqrt(10); t-approximation p with 2 dof.
  EXPECT_NEAR(r.rho, 0.9486832980505138, 1e-15);
  EXPECT_NEAR(r.p_value, 0.0513167019494862, 1e-13);
  EXPECT_NEAR(r.rho, static_cast<double>(oracle::spearman_rho({1, 2, 2, 4}, {1, 3, 2, 4})), 1e-15);
}

TEST(Spearman, Errors) {
  EXPECT_THROW(spearman({1, 2, 3}, {1, 2}), std::invalid_argument);
  EXPECT_THROW(spearman({1, 2}, {1, 2}), std::invalid_argument);
  EXPECT_THROW(spearman({2, 2, 2}, {1, 2, 3}), std::domain_error);
}

TEST(Spearman, RandomTiedVectorsMatchOracle) {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> len(3, 12), val(0, 4);
  int checked = 0;
  while (checked < 200) {
    const int n = len(rng);
    std::vector<double> x(n), y(n);
    for (auto& v : x) v = val(rng);
    for (auto& v : y) v = val(rng);
    const auto rx = average_ranks(x), ry = average_ranks(y);
    if (std::adjacent_find(rx.begin(), rx.end(), std::not_equal_to<>()) == rx.end() ||
        std::adjacent_find(ry.begin(), ry.end(), std::not_equal_to<>()) == ry.end())
      continue;  // constant input: undefined
    const auto r = spearman(x, y);
    EXPECT_NEAR(r.rho, static_cast<double>(oracle::spearman_rho(x, y)), 1e-13);
    EXPECT_GE(r.rho, -1.0);
    EXPECT_LE(r.rho, 1.0);
    EXPECT_GE(r.p_value, 0.0);
    EXPECT_LE(r.p_value, 1.0);
    ++checked;
  }
}

TEST(Spearman, Invariances) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x(9), y(9);
    for (auto& v : x) v = g(rng);
    for (auto& v : y) v = g(rng);
    const double rho = spearman(x, y).rho;

    std::vector<std::size_t> perm(9);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> px, py, neg, mono;
    for (auto i : perm) {
      px.push_back(x[i]);
      py.push_back(y[i]);
    }
    for (double v : y) neg.push_back(-v);
    for (double v : x) mono.push_back(std::exp(3.0 * v) + 1.0);
    EXPECT_NEAR(spearman(px, py).rho, rho, 1e-14);
    EXPECT_NEAR(spearman(x, neg).rho, -rho, 1e-14);
    EXPECT_NEAR(spearman(mono, y).rho, rho, 1e-14);
  }
}

TEST(Spearman, ExactPermutationPValue) {
  // Only the identity and the reversal reach |rho| = 1 among 4! orderings.
  EXPECT_NEAR(spearman_permutation_pvalue({1, 2, 3, 4}, {1, 2, 3, 4}), 2.0 / 24.0, 1e-15);
  EXPECT_THROW(spearman_permutation_pvalue(std::vector<double>(11, 1.0), std::vector<double>(11, 1.0)),
               std::invalid_argument);
  // Near-agreement with the t approximation for moderate n.
  const std::vector<double> x{1, 2, 3, 4, 5, 6, 7, 8}, y{2, 1, 4, 3, 6, 5, 8, 7};
  EXPECT_NEAR(spearman_permutation_pvalue(x, y), spearman(x, y).p_value, 0.01);
}

TEST(Grid, DeskGridShape) {
  const auto g = desk_grid();
  EXPECT_EQ(g.config_count(), 18u);
  EXPECT_EQ(g.seeds, (std::vector<std::uint64_t>{73, 421, 9973, 361091}));
  const auto points = enumerate_grid(g);
  std::set<std::string> ids;
  for (const auto& p : points) ids.insert(p.config_id);
  EXPECT_EQ(ids.size(), 18u);
}

TEST(Grid, ReferenceGridIsValid) { EXPECT_NO_THROW(reference_grid().validate()); }

TEST(Grid, Validation) {
  auto g = small_grid();
  g.learning_rates.clear();
  EXPECT_THROW(g.validate(), std::invalid_argument);
  g = small_grid();
  g.seeds = {1, 1};
  EXPECT_THROW(g.validate(), std::invalid_argument);
  g = small_grid();
  g.max_gradient_steps = {std::size_t{0}};
  EXPECT_THROW(g.validate(), std::invalid_argument);
}

TEST(Grid, ConfigIds) {
  GridPoint p{"", 3e-4, 0.1, std::nullopt, {2, 40}};
  EXPECT_EQ(make_config_id(p), "h2x40_lr0.0003_wd0.1_stepsinf");
  p.max_gradient_steps = 1500;
  p.architecture = {0, 0};
  EXPECT_EQ(make_config_id(p), "h0_lr0.0003_wd0.1_steps1500");
}

TEST(RunSweep, OneConfigOneSeed) {
  const auto w = small_world();
  SweepGrid g;
  g.learning_rates = {1e-2};
  g.weight_decays = {0.0};
  g.max_gradient_steps = {std::size_t{30}};
  g.architectures = {{1, 8}};
  g.seeds = {73};
  const auto res = run_sweep(g, w.ds, w.task, w.function, quick_options());
  ASSERT_EQ(res.records.size(), 1u);
  const auto& r = res.records.front();
  ASSERT_EQ(r.runs.size(), 3u);
  for (const auto& arm : r.runs) {
    ASSERT_EQ(arm.size(), 1u);
    EXPECT_TRUE(arm.front().ok);
    EXPECT_EQ(arm.front().steps_taken, 21u);  // 3 epochs of 7 batches cap below 30
  }
}

TEST(RunSweep, MatchesStandaloneRuns) {
  const auto w = small_world();
  const auto g = small_grid();
  const auto res = run_sweep(g, w.ds, w.task, w.function, quick_options());
  EXPECT_EQ(res.records.size(), g.config_count());
  const auto& rec = res.records[3];
  std::vector<EvalResult> p, ct, cf;
  for (auto seed : g.seeds) {
    const auto cfg = probe_config(rec.point, seed, 64, 3);
    p.push_back(evaluate(train(cfg, w.ds, TargetSource::gold()), w.ds, TargetSource::gold(), Split::test));
    ct.push_back(evaluate(train(cfg, w.ds, TargetSource::control(w.task)), w.ds, TargetSource::control(w.task), Split::test));
    cf.push_back(evaluate(train(cfg, w.ds, TargetSource::control(w.function)), w.ds,
                          TargetSource::control(w.function), Split::test));
  }
  const auto expect = compute_criteria(p, ct, cf);
  EXPECT_EQ(rec.criteria.t_acc, expect.t_acc);
  EXPECT_EQ(rec.criteria.f_ent, expect.f_ent);
  EXPECT_EQ(rec.criteria.t_ent, expect.t_ent);
  EXPECT_EQ(rec.criteria.f_acc, expect.f_acc);
  // Seed averaging from the retained raw runs.
  double mean = 0.0;
  for (const auto& run : rec.runs[0]) mean += run.eval.cross_entropy;
  EXPECT_NEAR(rec.criteria.probe_mean.cross_entropy, mean / 2.0, 1e-15);
}

TEST(RunSweep, ParallelismDoesNotChangeResults) {
  const auto w = small_world();
  const auto g = small_grid();
  const auto a = run_sweep(g, w.ds, w.task, w.function, quick_options(1));
  const auto b = run_sweep(g, w.ds, w.task, w.function, quick_options(4));
  EXPECT_EQ(results_csv(a), results_csv(b));
  EXPECT_TRUE(std::is_sorted(a.records.begin(), a.records.end(),
                             [](const auto& x, const auto& y) { return x.point.config_id < y.point.config_id; }));
}

TEST(RunSweep, DivergedRunsAreRecordedAndExcluded) {
  const auto w = small_world();
  SweepGrid g;
  g.learning_rates = {1e300, 1e-2, 3e-3, 1e-3};
  g.weight_decays = {0.0};
  g.max_gradient_steps = {std::size_t{20}};
  g.architectures = {{1, 8}};
  g.seeds = {73};
  const auto res = run_sweep(g, w.ds, w.task, w.function, quick_options());
  EXPECT_EQ(res.failed_count(), 1u);
  const auto failed = std::find_if(res.records.begin(), res.records.end(), [](const auto& r) { return !r.ok; });
  ASSERT_NE(failed, res.records.end());
  EXPECT_NE(failed->point.config_id.find("lr1e+300"), std::string::npos);
  EXPECT_FALSE(failed->failure.empty());
  const auto table = correlate_criteria(res);
  EXPECT_EQ(table.n, 3u);
  EXPECT_EQ(table.excluded_failed, 1u);
}

TEST(Correlate, MonotoneRelationAndErrors) {
  SweepResults res;
  for (int i = 0; i < 5; ++i)
    res.records.push_back(fake_record("c" + std::to_string(i), 0.1 * i, std::exp(0.1 * i), 0.3 * i * i, -0.2 * i));
  const auto t = correlate_criteria(res);
  EXPECT_EQ(t.n, 5u);
  EXPECT_DOUBLE_EQ(t.pair("t_acc", "f_ent").result.rho, 1.0);
  EXPECT_DOUBLE_EQ(t.pair("f_acc", "f_ent").result.rho, -1.0);
  EXPECT_THROW(t.pair("f_ent", "t_acc"), std::out_of_range);

  for (auto& r : res.records) r.criteria.t_acc = 0.5;
  EXPECT_THROW(correlate_criteria(res), std::domain_error);
  res.records.resize(2);
  EXPECT_THROW(correlate_criteria(res), std::invalid_argument);
}

TEST(Emit, FilesRoundTripAndPlotFamilies) {
  TempDir tmp;
  const auto w = small_world();
  const auto res = run_sweep(small_grid(), w.ds, w.task, w.function, quick_options());
  const auto table = correlate_criteria(res);
  emit_results(res, table, tmp.path());

  const auto csv = probekit::testing::slurp(tmp / "results.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 17);  // header + 16 configs
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kResultsCsvHeader);

  const auto back = read_results_csv(tmp / "results.csv");
  ASSERT_EQ(back.records.size(), res.records.size());
  for (std::size_t i = 0; i < res.records.size(); ++i) {
    const auto& a = res.records[i];
    const auto& b = back.records[i];
    EXPECT_EQ(a.point.config_id, b.point.config_id);
    EXPECT_EQ(a.point.max_gradient_steps, b.point.max_gradient_steps);
    EXPECT_EQ(a.point.architecture, b.point.architecture);
    EXPECT_NEAR(a.criteria.t_acc, b.criteria.t_acc, 1e-12);
    EXPECT_NEAR(a.criteria.t_ent, b.criteria.t_ent, 1e-12);
    EXPECT_NEAR(a.criteria.f_acc, b.criteria.f_acc, 1e-12);
    EXPECT_NEAR(a.criteria.f_ent, b.criteria.f_ent, 1e-12);
    EXPECT_NEAR(a.criteria.control_function_mean.cross_entropy, b.criteria.control_function_mean.cross_entropy, 1e-12);
  }

  const auto j = nlohmann::json::parse(probekit::testing::slurp(tmp / "correlations.json"));
  ASSERT_EQ(j["pairs"].size(), 3u);
  for (const auto& p : j["pairs"]) {
    EXPECT_GE(p["rho"].get<double>(), -1.0);
    EXPECT_LE(p["rho"].get<double>(), 1.0);
  }
  EXPECT_TRUE(std::filesystem::exists(tmp / "runs.csv"));

  std::set<std::string> families;
  std::size_t series = 0;
  for (const auto& e : std::filesystem::directory_iterator(tmp / "plotdata")) {
    const auto name = e.path().filename().string();
    families.insert(name.substr(0, name.find("__")));
    ++series;
    const auto body = probekit::testing::slurp(e.path());
    const auto first = body.substr(0, body.find('\n'));
    EXPECT_EQ(std::count(first.begin(), first.end(), '\t'), 1) << name;
  }
  EXPECT_EQ(families, (std::set<std::string>{"learning_rate", "max_gradient_steps", "weight_decay"}));
  // steps: 6 metrics, weight decay and lr: 2 each; one series per architecture.
  EXPECT_EQ(series, (6u + 2u + 2u) * 2u);
  const auto steps = probekit::testing::slurp(tmp / "plotdata" / "max_gradient_steps__t_acc__h1x8.tsv");
  EXPECT_EQ(steps.substr(0, 3), "20\t");
  EXPECT_NE(steps.find("inf\t"), std::string::npos);
}

TEST(Emit, QuotesAwkwardIdsAndMarksFailures) {
  TempDir tmp;
  SweepResults res;
  res.records.push_back(fake_record("a,\"b\"", 0.1, 0.2, 0.3, 0.4));
  res.records.back().runs.assign(3, std::vector<RunOutcome>(1));
  res.records.push_back(fake_record("plain", 0, 0, 0, 0));
  res.records.back().ok = false;
  res.records.back().runs.assign(3, std::vector<RunOutcome>(1));
  const auto csv = results_csv(res);
  EXPECT_NE(csv.find("\"a,\"\"b\"\"\",0.001"), std::string::npos) << csv;
  EXPECT_NE(csv.find("plain,0.001,0,inf,1,10,1,failed,,,,,,,,,,\n"), std::string::npos) << csv;
  std::ofstream(tmp / "r.csv") << csv;
  const auto back = read_results_csv(tmp / "r.csv");
  EXPECT_EQ(back.records[0].point.config_id, "a,\"b\"");
  EXPECT_FALSE(back.records[1].ok);
  EXPECT_EQ(back.failed_count(), 1u);
}

TEST(Emit, BitsScaleInformationColumns) {
  SweepResults res;
  res.records.push_back(fake_record("x", 0.5, std::log(2.0), 2 * std::log(2.0), 0.25));
  res.records.back().runs.assign(3, std::vector<RunOutcome>(1));
  const auto csv = results_csv(res, LogBase::bits);
  EXPECT_NE(csv.find(",ok,0.5,2,0.25,1,"), std::string::npos) << csv;
}
