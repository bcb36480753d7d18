#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "scgn/errors.hpp"
#include "scgn/numerics.hpp"
#include "scgn/sgn.hpp"
#include "oracles.hpp"

namespace scgn {
namespace {

// Aggregator with every parameter random, so the residual branch is not a no-op.
Aggregator random_aggregator(std::size_t d, std::size_t hidden, RngStream& rng) {
  Aggregator a = Aggregator::create(d, hidden, rng);
  a.w2 = random_normal(hidden, d, rng, 0.3);
  a.b2 = random_normal(1, d, rng, 0.3);
  return a;
}

SampleGraphNet random_net(std::size_t d, RngStream& rng) {
  SampleGraphNet net = SampleGraphNet::create(d, 6, 5, -2.0, rng);
  net.aggregator = random_aggregator(d, 5, rng);
  net.relation.gamma1 = random_normal(1, 6, rng, 0.5);
  for (double& v : net.relation.gamma1.data()) v += 1.0;
  net.relation.beta1 = random_normal(1, 6, rng, 0.5);
  return net;
}


std::vector<std::size_t> grouped_labels(std::size_t way, std::size_t shot) {
  std::vector<std::size_t> labels;
  for (std::size_t c = 0; c < way; ++c) labels.insert(labels.end(), shot, c);
  return labels;
}

TEST(Relations, IdenticalFeaturesGiveConstantMatrix) {
  RngStream rng(1);
  const SampleGraphNet net = random_net(4, rng);
  const Tensor2D row = random_normal(1, 4, rng);
  Tensor2D r(5, 4);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t k = 0; k < 4; ++k) r(i, k) = row(0, k);
  const Tensor2D e = pairwise_relations(r, net.relation);
  for (std::size_t p = 0; p < e.size(); ++p) EXPECT_EQ(e[p], e[0]);
}

TEST(Relations, SingletonIsOneByOne) {
  RngStream rng(2);
  const SampleGraphNet net = random_net(4, rng);
  const Tensor2D e = pairwise_relations(random_normal(1, 4, rng), net.relation);
  ASSERT_EQ(e.rows(), 1u);
  ASSERT_EQ(e.cols(), 1u);
  EXPECT_GT(e[0], 0.0);
  EXPECT_LT(e[0], 1.0);
}

TEST(Relations, SymmetricWithConstantDiagonalOverRandomSets) {
  RngStream rng(3);
  const SampleGraphNet net = random_net(5, rng);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.index(8);
    const Tensor2D e = pairwise_relations(random_normal(n, 5, rng), net.relation);
    for (std::size_t i = 0; i < n; ++i) {
      ASSERT_EQ(e(i, i), e(0, 0));
      for (std::size_t j = 0; j < n; ++j) {
        ASSERT_EQ(e(i, j), e(j, i));
        ASSERT_TRUE(std::isfinite(e(i, j)));
      }
    }
  }
}

TEST(Relations, MatchLoopOracle) {
  RngStream rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const SampleGraphNet net = random_net(4, rng);
    const Tensor2D r = random_normal(1 + rng.index(7), 4, rng);
    ASSERT_LT(max_abs_diff(pairwise_relations(r, net.relation), oracle::relations(r, net.relation)), 1e-9);
  }
}

TEST(Aggregation, ZeroRelationsAndIdentityGiveClassMeans) {
  RngStream rng(5);
  const Tensor2D r = random_normal(6, 3, rng);
  const auto labels = grouped_labels(2, 3);
  const Tensor2D out =
      aggregate_to_class_features(r, Tensor2D(6, 6, 0.0), labels, 2, Aggregator::identity(3));
  EXPECT_LT(max_abs_diff(out, matmul(class_mean_matrix(labels, 2), r)), 1e-15);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(out(1, k), (r(3, k) + r(4, k) + r(5, k)) / 3.0, 1e-15);
}

TEST(Aggregation, OneShotZeroRelationsIdentityIsPassthrough) {
  RngStream rng(6);
  const Tensor2D r = random_normal(4, 3, rng);
  const auto labels = grouped_labels(4, 1);
  EXPECT_EQ(aggregate_to_class_features(r, Tensor2D(4, 4, 0.0), labels, 4, Aggregator::identity(3)), r);
}

TEST(Aggregation, MatchesDoubleLoopOracle) {
  RngStream rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const SampleGraphNet net = random_net(4, rng);
    const Tensor2D r = random_normal(6, 4, rng);
    const auto labels = grouped_labels(2, 3);
    const Tensor2D e = pairwise_relations(r, net.relation);
    const Tensor2D got = refine_class_features(r, labels, 2, net);
    ASSERT_LT(max_abs_diff(got, oracle::class_features(r, e, labels, 2, net.aggregator)), 1e-9);
    ASSERT_LT(max_abs_diff(aggregate_to_class_features(r, e, labels, 2, net.aggregator), got), 1e-12);
  }
}

TEST(Aggregation, InvariantToPermutationWithinClass) {
  RngStream rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const SampleGraphNet net = random_net(4, rng);
    const Tensor2D r = random_normal(9, 4, rng);
    const auto labels = grouped_labels(3, 3);
    std::vector<std::size_t> perm{2, 0, 1, 3, 5, 4, 8, 7, 6};
    rng.shuffle(std::span<std::size_t>(perm.data(), 3));
    const Tensor2D permuted = r.rows_subset(perm);
    ASSERT_LT(max_abs_diff(refine_class_features(r, labels, 3, net), refine_class_features(permuted, labels, 3, net)),
              1e-9);
  }
}

TEST(Aggregation, MissingClassIsDomainError) {
  const std::vector<std::size_t> labels{0, 0, 2, 2};
  EXPECT_THROW(class_mean_matrix(labels, 3), DomainError);
  const std::vector<std::size_t> out_of_range{0, 3};
  EXPECT_THROW(class_mean_matrix(out_of_range, 2), DomainError);
}

TEST(Aggregation, EndToEndGradients) {
  RngStream rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    const SampleGraphNet net = random_net(3, rng);
    const auto labels = grouped_labels(2, 2);
    // A relation unit that is active on every pair has a shift parameter whose
    // effect the next standardization removes, so its true gradient is 0. The
    // 1e-8 error floor is absolute, so the probe is kept small enough that
    // finite-difference rounding noise on such entries stays below it.
    const Tensor2D probe = random_normal(2, 3, rng, 1e-3);
    std::vector<Tensor2D> point{random_normal(4, 3, rng)};
    for (const Tensor2D* p : net.parameters()) point.push_back(*p);
    const DifferentiableFn fn = [&](std::span<const Var> p) {
      return sum_all(mul(refine_class_features(p[0], labels, 2, net, p.subspan(1)), Var::constant(probe)));
    };
    const auto report = grad_check("sgn", fn, point);
    EXPECT_TRUE(report.pass) << report.max_relative_error << " " << report.note;
  }
}

}  // namespace
}  // namespace scgn
