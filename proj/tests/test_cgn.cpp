#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "scgn/cgn.hpp"
#include "scgn/errors.hpp"
#include "scgn/numerics.hpp"
#include "oracles.hpp"

namespace scgn {
namespace {

ClassGraphNet random_net(std::size_t d, std::size_t heads, std::size_t key_dim, RngStream& rng) {
  ClassGraphNet net = ClassGraphNet::create(d, heads, key_dim, 5, rng);
  net.aggregator.w2 = random_normal(5, d, rng, 0.3);
  net.aggregator.b2 = random_normal(1, d, rng, 0.3);
  return net;
}

TEST(Attention, RowsSumToOneForEveryHead) {
  RngStream rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t d = 2 + rng.index(4);
    const ClassGraphNet net = random_net(d, 1 + rng.index(3), 1 + rng.index(4), rng);
    const std::size_t m = rng.index(6), n = 1 + rng.index(4);
    const auto alpha = attention_weights(random_normal(n, d, rng), random_normal(m, d, rng), net.attention);
    ASSERT_EQ(alpha.size(), net.attention.heads());
    for (const Tensor2D& a : alpha) {
      ASSERT_EQ(a.rows(), m + n);
      ASSERT_EQ(a.cols(), n);
      for (std::size_t q = 0; q < a.rows(); ++q) {
        double s = 0.0;
        for (double v : a.row(q)) s += v;
        ASSERT_NEAR(s, 1.0, 1e-9);
      }
    }
  }
}

TEST(Attention, SingleKeyGivesOnes) {
  RngStream rng(2);
  const ClassGraphNet net = random_net(4, 2, 3, rng);
  for (const Tensor2D& a : attention_weights(random_normal(1, 4, rng), random_normal(5, 4, rng), net.attention))
    EXPECT_EQ(a, Tensor2D(6, 1, 1.0));
}

TEST(Attention, ZeroKeyProjectionIsUniform) {
  RngStream rng(3);
  ClassGraphNet net = random_net(4, 1, 4, rng);
  net.attention.w_k[0].fill(0.0);
  const auto alpha = attention_weights(random_normal(3, 4, rng), random_normal(2, 4, rng), net.attention);
  for (double v : alpha[0].data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Attention, DimensionMismatchIsDomainError) {
  RngStream rng(4);
  const ClassGraphNet net = random_net(4, 1, 4, rng);
  EXPECT_THROW(attention_weights(random_normal(2, 4, rng), random_normal(2, 3, rng), net.attention), DomainError);
  EXPECT_THROW(calibrate(random_normal(2, 5, rng), random_normal(2, 5, rng), net), DomainError);
}

TEST(Calibrate, IdentityAggregatorAndZeroMessagePassThrough) {
  RngStream rng(5);
  const Tensor2D fresh = random_normal(3, 4, rng);
  const Aggregator agg = Aggregator::identity(4);
  const auto params = bind_constants(agg.parameters());
  const Var out = calibrate_with_message(Var::constant(fresh), Var::constant(Tensor2D(3, 4, 0.0)), agg, params);
  EXPECT_EQ(out.value(), fresh);
}

TEST(Calibrate, EmptyBankSingleClassAttendsToItself) {
  RngStream rng(6);
  ClassGraphNet net = random_net(4, 1, 4, rng);
  net.aggregator = Aggregator::identity(4);
  const Tensor2D fresh = random_normal(1, 4, rng);
  const Tensor2D out = calibrate(fresh, Tensor2D(0, 4), net);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(out(0, k), 2.0 * fresh(0, k), 1e-15);
}

TEST(Calibrate, MatchesLoopOracle) {
  RngStream rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t heads = 1 + trial % 3;
    const ClassGraphNet net = random_net(4, heads, 3, rng);
    const Tensor2D fresh = random_normal(3, 4, rng);
    const Tensor2D bank = random_normal(5, 4, rng);
    ASSERT_LT(max_abs_diff(calibrate(fresh, bank, net), oracle::calibrate(fresh, bank, net)), 1e-9)
        << "heads=" << heads;
  }
}

TEST(Calibrate, InvariantToBankRowOrder) {
  RngStream rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const ClassGraphNet net = random_net(4, 2, 3, rng);
    const Tensor2D fresh = random_normal(2, 4, rng);
    const Tensor2D bank = random_normal(6, 4, rng);
    std::vector<std::size_t> perm{0, 1, 2, 3, 4, 5};
    rng.shuffle(std::span<std::size_t>(perm));
    ASSERT_LT(max_abs_diff(calibrate(fresh, bank, net), calibrate(fresh, bank.rows_subset(perm), net)), 1e-9);
  }
}

TEST(Calibrate, OutputRowsFollowInputClasses) {
  RngStream rng(9);
  const ClassGraphNet net = random_net(3, 1, 3, rng);
  const Tensor2D out = calibrate(random_normal(4, 3, rng), random_normal(2, 3, rng), net);
  EXPECT_EQ(out.rows(), 4u);
  EXPECT_EQ(out.cols(), 3u);
}

TEST(Calibrate, GradientsForEveryInputAndParameter) {
  RngStream rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t heads = 1 + trial % 2;
    const ClassGraphNet net = random_net(3, heads, 2, rng);
    const Tensor2D probe = random_normal(2, 3, rng);
    std::vector<Tensor2D> point{random_normal(2, 3, rng), random_normal(3, 3, rng)};
    for (const Tensor2D* p : net.parameters()) point.push_back(*p);
    const DifferentiableFn fn = [&](std::span<const Var> p) {
      return sum_all(mul(calibrate(p[0], p[1], net, p.subspan(2)), Var::constant(probe)));
    };
    const auto report = grad_check("cgn", fn, point);
    EXPECT_TRUE(report.pass) << "heads=" << heads << " " << report.max_relative_error << " " << report.note;
  }
}

}  // namespace
}  // namespace scgn
