#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "probekit/infotheory.hpp"

using namespace probekit;

namespace {

// Long-double plug-in MI straight from the defining double sum.
long double mi_oracle(const std::vector<std::uint64_t>& c, std::size_t rows, std::size_t cols) {
  long double n = 0;
  for (auto v : c) n += v;
  std::vector<long double> r(rows, 0), k(cols, 0);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      r[i] += c[i * cols + j];
      k[j] += c[i * cols + j];
    }
  long double mi = 0;
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      const long double v = c[i * cols + j];
      if (v > 0) mi += v / n * std::log(v * n / (r[i] * k[j]));
    }
  return mi;
}

}  // namespace

TEST(Entropy, FrozenTwoPoint) {
  // 50-digit reference: 0.56233514461880835028803031522445885766538235035345
  EXPECT_NEAR(entropy(Categorical({0.75, 0.25})), 0.5623351446188083, 1e-15);
}

TEST(Entropy, UniformIsLogK) {
  for (std::size_t k : {1u, 2u, 7u, 64u}) EXPECT_NEAR(entropy(Categorical::uniform(k)), std::log(double(k)), 1e-13);
}

TEST(Entropy, PointMassIsZeroAndZeroLogZeroIsZero) {
  EXPECT_EQ(entropy(Categorical({0.0, 1.0, 0.0})), 0.0);
}

TEST(Entropy, BoundedByLogSupport) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> w(1 + trial % 9);
    for (auto& v : w) v = u(rng);
    const auto d = Categorical::from_weights(w);
    const double h = entropy(d);
    EXPECT_GE(h, 0.0);
    EXPECT_LE(h, std::log(double(w.size())) + 1e-12);
  }
}

TEST(Categorical, RejectsBadInput) {
  EXPECT_THROW(Categorical({}), InfoError);
  EXPECT_THROW(Categorical({0.5, 0.6}), InfoError);
  EXPECT_THROW(Categorical({1.5, -0.5}), InfoError);
  EXPECT_THROW(Categorical({std::nan(""), 1.0}), InfoError);
  EXPECT_THROW(Categorical::from_weights({0.0, 0.0}), InfoError);
}

TEST(KL, FrozenAgainstUniform) {
  // 50-digit reference: 0.13081203594113695912920180623371771041011778400681
  EXPECT_NEAR(kl_divergence(Categorical({0.75, 0.25}), Categorical({0.5, 0.5})), 0.13081203594113696, 1e-15);
}

TEST(KL, SelfIsZeroAndNonNegative) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> a(4), b(4);
    for (auto& v : a) v = u(rng);
    for (auto& v : b) v = u(rng);
    const auto p = Categorical::from_weights(a), q = Categorical::from_weights(b);
    EXPECT_NEAR(kl_divergence(p, p), 0.0, 1e-15);
    EXPECT_GE(kl_divergence(p, q), 0.0);
  }
}

TEST(KL, AbsoluteContinuityViolationNamesIndex) {
  try {
    kl_divergence(Categorical({0.5, 0.25, 0.25}), Categorical({0.5, 0.5, 0.0}));
    FAIL() << "expected InfoError";
  } catch (const InfoError& e) {
    EXPECT_NE(std::string(e.what()).find("index 2"), std::string::npos) << e.what();
  }
}

TEST(KL, SupportMismatch) {
  EXPECT_THROW(kl_divergence(Categorical({1.0}), Categorical({0.5, 0.5})), InfoError);
}

TEST(MutualInformation, FrozenTwoByTwo) {
  // 50-digit reference: 0.19274475702175742988404418256507143747069899506815
  EXPECT_NEAR(mutual_information_plugin(JointCounts(2, 2, {40, 10, 10, 40})), 0.19274475702175743, 1e-15);
}

TEST(MutualInformation, IndependentIsZero) {
  EXPECT_NEAR(mutual_information_plugin(JointCounts(2, 3, {2, 4, 6, 1, 2, 3})), 0.0, 1e-15);
}

TEST(MutualInformation, BijectionIsLogK) {
  EXPECT_NEAR(mutual_information_plugin(JointCounts(3, 3, {5, 0, 0, 0, 5, 0, 0, 0, 5})), std::log(3.0), 1e-14);
}

TEST(MutualInformation, ZeroTotalIsError) {
  EXPECT_THROW(mutual_information_plugin(JointCounts(2, 2)), InfoError);
}

TEST(MutualInformation, RandomJointsMatchOracleAndBounds) {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> cell(0, 30);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t r = 1 + trial % 5, c = 1 + (trial / 5) % 5;
    JointCounts j(r, c);
    for (auto& v : j.counts) v = static_cast<std::uint64_t>(cell(rng));
    if (j.total() == 0) j.at(0, 0) = 1;
    const double mi = mutual_information_plugin(j);
    EXPECT_NEAR(mi, static_cast<double>(mi_oracle(j.counts, r, c)), 1e-12);

    std::vector<double> rows(r, 0.0), cols(c, 0.0);
    for (std::size_t a = 0; a < r; ++a)
      for (std::size_t b = 0; b < c; ++b) {
        rows[a] += double(j.at(a, b));
        cols[b] += double(j.at(a, b));
      }
    EXPECT_GE(mi, 0.0);
    EXPECT_LE(mi, std::min(entropy(Categorical::from_weights(rows)), entropy(Categorical::from_weights(cols))) + 1e-12);

    // Symmetry under transposition.
    JointCounts t(c, r);
    for (std::size_t a = 0; a < r; ++a)
      for (std::size_t b = 0; b < c; ++b) t.at(b, a) = j.at(a, b);
    EXPECT_NEAR(mutual_information_plugin(t), mi, 1e-13);

    // The probability-table form agrees with the count form.
    std::vector<double> joint(r * c);
    for (std::size_t i = 0; i < joint.size(); ++i) joint[i] = double(j.counts[i]) / double(j.total());
    EXPECT_NEAR(mutual_information(joint, r, c), mi, 1e-13);
  }
}

TEST(CrossEntropyLog, DecomposesIntoEntropyPlusKL) {
  const std::vector<double> p{0.5, 0.3, 0.2, 0.0};
  const std::vector<double> q{0.1, 0.2, 0.3, 0.4};
  std::vector<double> lq;
  for (double v : q) lq.push_back(std::log(v));
  EXPECT_NEAR(cross_entropy_log(p, lq),
              entropy(Categorical({0.5, 0.3, 0.2, 0.0})) + kl_divergence_log(p, lq), 1e-14);
}

TEST(CrossEntropyLog, InfiniteLogQUnderMassIsError) {
  const std::vector<double> p{0.5, 0.5};
  const std::vector<double> lq{0.0, -std::numeric_limits<double>::infinity()};
  EXPECT_THROW(cross_entropy_log(p, lq, "code 3"), InfoError);
  // No mass on the impossible label: fine.
  EXPECT_NEAR(cross_entropy_log(std::vector<double>{1.0, 0.0}, lq), 0.0, 0.0);
}

TEST(Units, NatsToBits) { EXPECT_NEAR(nats_to_bits(std::log(2.0)), 1.0, 1e-15); }
