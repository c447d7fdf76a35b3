#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "probekit/probe.hpp"
#include "probekit/synth.hpp"
#include "test_support.hpp"

using namespace probekit;
using probekit::testing::TempDir;

namespace {

ProbeData small_synthetic(std::uint64_t seed = 7) {
  SyntheticSpec spec;
  spec.type_count = 12;
  spec.label_count = 3;
  spec.embedding_dim = 6;
  spec.label_noise = 0.1;
  spec.train_tokens = 600;
  spec.dev_tokens = 200;
  spec.test_tokens = 200;
  spec.scheme = EmbeddingScheme::clustered;
  spec.seed = seed;
  return materialize(generate(spec).first, TargetSource::gold());
}

ProbeConfig quick(std::size_t layers = 1, std::uint64_t seed = 73) {
  ProbeConfig c;
  c.hidden_layers = layers;
  c.hidden_width = layers > 0 ? 8 : 0;
  c.learning_rate = 1e-2;
  c.batch_size = 32;
  c.max_epochs = 5;
  c.seed = seed;
  return c;
}

}  // namespace

TEST(ProbeConfig, Validation) {
  ProbeConfig c;
  EXPECT_NO_THROW(c.validate());
  c.learning_rate = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.weight_decay = -1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.max_gradient_steps = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Parameters, ShapesAndCount) {
  ProbeConfig c;
  c.hidden_layers = 2;
  c.hidden_width = 5;
  const auto p = init_probe(c, 3, 4);
  ASSERT_EQ(p.layers.size(), 3u);
  EXPECT_EQ(p.layers[0].weight.rows(), 5);
  EXPECT_EQ(p.layers[0].weight.cols(), 3);
  EXPECT_EQ(p.layers[2].weight.rows(), 4);
  EXPECT_EQ(p.parameter_count(), std::size_t(5 * 3 + 5 + 5 * 5 + 5 + 4 * 5 + 4));
  c.hidden_layers = 0;
  EXPECT_EQ(init_probe(c, 3, 4).layers.size(), 1u);
}

TEST(Parameters, FlattenRoundTrip) {
  const auto s = oracle::random_small_problem(4);
  auto flat = s.params.flatten();
  ProbeParameters q = s.params.zeros_like();
  q.assign_flat(flat);
  EXPECT_EQ(q, s.params);
  flat.push_back(1.0);
  EXPECT_THROW(q.assign_flat(flat), std::invalid_argument);
}

TEST(Parameters, InitIsSeedDeterministicAndBiasFree) {
  ProbeConfig c;
  const auto a = init_probe(c, 4, 3), b = init_probe(c, 4, 3);
  EXPECT_EQ(a, b);
  c.seed = 74;
  EXPECT_FALSE(init_probe(c, 4, 3) == a);
  for (const auto& l : a.layers) EXPECT_EQ(l.bias.squaredNorm(), 0.0);
}

TEST(Forward, MatchesLongDoubleOracle) {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const auto s = oracle::random_small_problem(seed);
    const Eigen::MatrixXd out = forward(s.params, s.X);
    for (Eigen::Index r = 0; r < s.X.rows(); ++r) {
      std::vector<double> row(static_cast<std::size_t>(s.X.cols()));
      for (Eigen::Index c = 0; c < s.X.cols(); ++c) row[static_cast<std::size_t>(c)] = s.X(r, c);
      const auto ref = oracle::forward(s.params, row);
      const auto one = forward_one(s.params, row);
      for (Eigen::Index c = 0; c < out.cols(); ++c) {
        EXPECT_NEAR(out(r, c), static_cast<double>(ref[static_cast<std::size_t>(c)]), 1e-12);
        EXPECT_NEAR(one[static_cast<std::size_t>(c)], out(r, c), 1e-14);
      }
    }
  }
}

TEST(Forward, ExtremeLogitsStayFinite) {
  ProbeParameters p;
  p.layers.push_back({Eigen::MatrixXd::Constant(2, 1, 0.0), Eigen::VectorXd(2)});
  p.layers[0].weight << 1000.0, -1000.0;
  p.layers[0].bias << 0.0, 0.0;
  const Eigen::MatrixXd out = forward(p, Eigen::MatrixXd::Ones(1, 1));
  EXPECT_NEAR(out(0, 0), 0.0, 1e-300);
  EXPECT_NEAR(out(0, 1), -2000.0, 1e-9);
}

TEST(Gradients, MatchCentralDifferences) {
  for (std::uint64_t seed = 100; seed < 120; ++seed) {
    const auto s = oracle::random_small_problem(seed);
    const auto lg = loss_and_gradients(s.params, s.X, s.y, s.weight_decay);
    EXPECT_NEAR(lg.loss, static_cast<double>(oracle::objective(s.params, s.X, s.y, s.weight_decay)), 1e-12);
    const auto check = oracle::gradient_check(s.params, lg.gradients, s.X, s.y, s.weight_decay);
    EXPECT_LT(check.max_relative_error, 1e-4) << "seed " << seed;
  }
}

TEST(Gradients, DecayPenaltyExcludesBiases) {
  const auto s = oracle::random_small_problem(3);
  const double base = loss_and_gradients(s.params, s.X, s.y, 0.0).loss;
  double sq = 0.0;
  for (const auto& l : s.params.layers) sq += l.weight.squaredNorm();
  EXPECT_NEAR(loss_and_gradients(s.params, s.X, s.y, 0.5).loss - base, 0.25 * sq, 1e-12);
}

TEST(Evaluate, MatchesHandComputation) {
  // Single linear layer, 2 labels, inputs chosen so predictions are known.
  ProbeParameters p;
  p.layers.push_back({Eigen::MatrixXd(2, 1), Eigen::VectorXd::Zero(2)});
  p.layers[0].weight << 1.0, -1.0;
  ProbeData d;
  d.input_dim = 1;
  d.num_labels = 2;
  for (auto& x : d.inputs) x = Eigen::MatrixXd(3, 1);
  d.inputs[2] << 1.0, -2.0, 0.0;
  d.labels[2] = {0, 0, 1};
  const auto r = evaluate(p, d, Split::test);
  // logits (1,-1), (-2,2), (0,0): predictions 0, 1, 0 (tie -> lowest index)
  EXPECT_DOUBLE_EQ(r.accuracy, 1.0 / 3.0);
  const double ce = (std::log1p(std::exp(-2.0)) + std::log1p(std::exp(4.0)) + std::log(2.0)) / 3.0;
  EXPECT_NEAR(r.cross_entropy, ce, 1e-14);
  EXPECT_EQ(r.token_count, 3u);
}

TEST(Train, ReducesLossAndRecordsTrace) {
  const auto data = small_synthetic();
  const auto probe = train(quick(), data);
  ASSERT_GE(probe.trace.size(), 2u);
  EXPECT_EQ(probe.trace.front().step, 0u);
  EXPECT_LT(probe.best_dev_loss, probe.trace.front().dev_loss);
  EXPECT_LT(probe.trace.back().train_loss, probe.trace.front().train_loss);
  // The checkpoint is the dev-loss minimizer of the trace.
  double best = probe.trace.front().dev_loss;
  for (const auto& t : probe.trace) best = std::min(best, t.dev_loss);
  EXPECT_EQ(probe.best_dev_loss, best);
  EXPECT_NEAR(evaluate(probe.params, data, Split::dev).cross_entropy, probe.best_dev_loss, 1e-12);
}

TEST(Train, StepCapIsExact) {
  const auto data = small_synthetic();
  auto c = quick();
  c.max_gradient_steps = 7;
  const auto probe = train(c, data);
  EXPECT_EQ(probe.steps_taken, 7u);
  EXPECT_EQ(probe.trace.back().step, 7u);
  EXPECT_LE(probe.best_step, 7u);
  c.max_gradient_steps.reset();
  c.max_epochs = 2;
  EXPECT_EQ(train(c, data).steps_taken, 2u * ((600 + 31) / 32));
}

TEST(Train, SeedDeterministic) {
  const auto data = small_synthetic();
  const auto a = train(quick(2, 5), data), b = train(quick(2, 5), data), c = train(quick(2, 6), data);
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.best_dev_loss, b.best_dev_loss);
  EXPECT_FALSE(a.params == c.params);
}

TEST(Train, DivergenceIsReported) {
  const auto data = small_synthetic();
  auto c = quick(1);
  c.learning_rate = 1e300;
  c.max_epochs = 3;
  EXPECT_THROW(train(c, data), TrainingDiverged);
}

TEST(Train, EmptySplitIsError) {
  auto data = small_synthetic();
  data.labels[1].clear();
  data.inputs[1].resize(0, data.inputs[1].cols());
  EXPECT_THROW(train(quick(), data), std::invalid_argument);
}

TEST(Materialize, ControlArmsUseTheirTargets) {
  SyntheticSpec spec;
  spec.type_count = 10;
  spec.label_count = 3;
  spec.embedding_dim = 4;
  spec.train_tokens = spec.dev_tokens = spec.test_tokens = 50;
  const auto ds = generate(spec).first;
  const auto task = make_control_task(ds, 3);
  const auto fn = make_control_function(ds, 4);
  const auto ct = materialize(ds, TargetSource::control(task));
  const auto cf = materialize(ds, TargetSource::control(fn));
  std::size_t row = 0;
  for (std::size_t i : ds.indices(Split::train)) {
    const auto& r = ds.records[i];
    EXPECT_EQ(ct.y(Split::train)[row], task.mapping[static_cast<std::size_t>(r.type_id)]);
    EXPECT_EQ(cf.y(Split::train)[row], r.label_id);
    EXPECT_EQ(cf.x(Split::train)(static_cast<Eigen::Index>(row), 0), fn.vectors[static_cast<std::size_t>(r.type_id)][0]);
    ++row;
  }
}

TEST(Checkpoint, RoundTripIsExact) {
  TempDir tmp;
  const auto probe = train(quick(2), small_synthetic());
  save_probe(probe, tmp.path());
  const auto back = load_probe(tmp.path());
  EXPECT_EQ(back.params, probe.params);
  EXPECT_EQ(back.config, probe.config);
  EXPECT_EQ(back.steps_taken, probe.steps_taken);
  EXPECT_EQ(back.best_step, probe.best_step);
  EXPECT_EQ(back.trace.size(), probe.trace.size());
  EXPECT_THROW(load_probe(tmp / "missing"), std::runtime_error);
}
