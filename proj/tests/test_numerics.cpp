#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "scgn/autodiff.hpp"
#include "scgn/errors.hpp"
#include "scgn/numerics.hpp"
#include "scgn/rng.hpp"
#include "scgn/tensor.hpp"

namespace scgn {
namespace {

TEST(Tensor, ConstructorRejectsWrongLength) {
  EXPECT_THROW(Tensor2D(2, 3, std::vector<double>(5)), DomainError);
  const Tensor2D t(2, 3, std::vector<double>{1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t(1, 0), 4.0);
}

TEST(Tensor, MatmulMatchesHandComputation) {
  const Tensor2D a = Tensor2D::from_rows({{1, 2}, {3, 4}});
  const Tensor2D b = Tensor2D::from_rows({{5, 6}, {7, 8}});
  EXPECT_EQ(matmul(a, b), Tensor2D::from_rows({{19, 22}, {43, 50}}));
  EXPECT_THROW(matmul(a, Tensor2D(3, 1)), DomainError);
}

TEST(Tensor, MatmulPropagatesNan) {
  Tensor2D a = Tensor2D::from_rows({{0.0, 1.0}});
  Tensor2D b = Tensor2D::from_rows({{std::numeric_limits<double>::quiet_NaN()}, {1.0}});
  EXPECT_TRUE(std::isnan(matmul(a, b)(0, 0)));
}

TEST(Cosine, Examples) {
  const std::vector<double> v{0.3, -1.2, 2.0};
  std::vector<double> neg(v.size());
  std::transform(v.begin(), v.end(), neg.begin(), [](double x) { return -x; });
  EXPECT_DOUBLE_EQ(cosine_similarity(v, v), 1.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(v, neg), -1.0);
  EXPECT_EQ(cosine_similarity(std::vector<double>{1, 0}, std::vector<double>{0, 1}), 0.0);
}

TEST(Cosine, ZeroNormAndLengthMismatchThrow) {
  EXPECT_THROW(cosine_similarity(std::vector<double>{0, 0}, std::vector<double>{1, 0}), DomainError);
  EXPECT_THROW(cosine_similarity(std::vector<double>{1}, std::vector<double>{1, 0}), DomainError);
}

TEST(Cosine, RangeSymmetryAndScaleInvarianceOverRandomVectors) {
  RngStream rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.index(8);
    std::vector<double> a(n), b(n), ca(n);
    for (auto& x : a) x = rng.normal();
    for (auto& x : b) x = rng.normal();
    const double c = rng.uniform(0.01, 100.0);
    for (std::size_t i = 0; i < n; ++i) ca[i] = c * a[i];
    const double s = cosine_similarity(a, b);
    ASSERT_GE(s, -1.0);
    ASSERT_LE(s, 1.0);
    ASSERT_EQ(s, cosine_similarity(b, a));
    ASSERT_NEAR(cosine_similarity(ca, b), s, 1e-12);
    ASSERT_NEAR(cosine_similarity(a, ca), 1.0, 1e-9);
  }
}

TEST(Softmax, Examples) {
  for (double p : softmax(std::vector<double>{2.5, 2.5, 2.5})) EXPECT_NEAR(p, 1.0 / 3.0, 1e-15);
  EXPECT_EQ(softmax(std::vector<double>{-7.0}), std::vector<double>{1.0});
  const auto p = softmax(std::vector<double>{0.0, std::log(2.0)});
  EXPECT_NEAR(p[0], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(p[1], 2.0 / 3.0, 1e-15);
}

TEST(Softmax, NonPositiveTemperatureThrows) {
  EXPECT_THROW(softmax(std::vector<double>{1.0}, 0.0), DomainError);
  EXPECT_THROW(softmax(std::vector<double>{1.0}, -1.0), DomainError);
}

TEST(Softmax, SumsToOneAndIsShiftInvariantOverRandomLogits) {
  RngStream rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.index(20);
    std::vector<double> logits(n), shifted(n);
    const double shift = rng.uniform(-50.0, 50.0);
    for (std::size_t i = 0; i < n; ++i) {
      logits[i] = rng.normal(0.0, 10.0);
      shifted[i] = logits[i] + shift;
    }
    const double t = rng.uniform(0.05, 5.0);
    const auto p = softmax(logits, t);
    const auto q = softmax(shifted, t);
    ASSERT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-9);
    for (std::size_t i = 0; i < n; ++i) {
      ASSERT_GE(p[i], 0.0);
      ASSERT_LE(p[i], 1.0);
      ASSERT_NEAR(p[i], q[i], 1e-9);
    }
  }
}

TEST(Rng, SameSeedSameSequence) {
  RngStream a(42), b(42);
  for (int i = 0; i < 1000; ++i) {
    ASSERT_EQ(a.next_u64(), b.next_u64());
    ASSERT_EQ(a.normal(), b.normal());
    ASSERT_EQ(sample_beta(2.0, 3.0, a), sample_beta(2.0, 3.0, b));
  }
}

TEST(Rng, DerivedStreamsDifferAndDoNotAdvanceParent) {
  RngStream parent(1);
  RngStream c1 = parent.derive(1);
  RngStream c2 = parent.derive(2);
  EXPECT_NE(c1.next_u64(), c2.next_u64());
  RngStream fresh(1);
  EXPECT_EQ(parent.next_u64(), fresh.next_u64());
}

TEST(Rng, IndexIsInRangeAndCoversAllValues) {
  RngStream rng(3);
  std::vector<int> seen(7, 0);
  for (int i = 0; i < 7000; ++i) {
    const auto k = rng.index(7);
    ASSERT_LT(k, 7u);
    ++seen[k];
  }
  for (int c : seen) EXPECT_GT(c, 800);
}

// Kolmogorov-Smirnov distance of the empirical CDF from the uniform CDF.
double ks_uniform(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    d = std::max({d, std::abs((i + 1) / n - xs[i]), std::abs(xs[i] - i / n)});
  }
  return d;
}

TEST(SampleBeta, UniformCaseMatchesUniformCdf) {
  RngStream rng(2024);
  std::vector<double> xs(100000);
  for (auto& x : xs) x = sample_beta(1.0, 1.0, rng);
  EXPECT_LT(ks_uniform(xs), 0.01);
}

TEST(SampleBeta, SymmetricMeanIsOneHalf) {
  RngStream rng(7);
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double x = sample_beta(2.0, 2.0, rng);
    ASSERT_GE(x, 0.0);
    ASSERT_LE(x, 1.0);
    sum += x;
  }
  EXPECT_NEAR(sum / n, 0.5, 0.01);
}

TEST(SampleBeta, AsymmetricMeanAndVarianceMatchClosedForm) {
  RngStream rng(8);
  const double a = 0.5, b = 3.0;
  const int n = 100000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = sample_beta(a, b, rng);
    s += x;
    s2 += x * x;
  }
  const double mean = s / n;
  const double var = s2 / n - mean * mean;
  EXPECT_NEAR(mean, a / (a + b), 0.005);
  EXPECT_NEAR(var, a * b / ((a + b) * (a + b) * (a + b + 1)), 0.002);
}

TEST(SampleBeta, NonPositiveParametersThrow) {
  RngStream rng(0);
  EXPECT_THROW(sample_beta(0.0, 1.0, rng), DomainError);
  EXPECT_THROW(sample_beta(1.0, -2.0, rng), DomainError);
}

TEST(GradCheck, AffineMapIsExact) {
  // Central differences carry no truncation error on a linear map, so the
  // largest allowed step keeps the rounding error far below the bound.
  RngStream rng(1);
  const Tensor2D w = random_normal(3, 4, rng);
  const Tensor2D probe = random_normal(3, 1, rng);
  const DifferentiableFn fn = [&](std::span<const Var> p) {
    return sum_all(mul(matmul(Var::constant(w), p[0]), Var::constant(probe)));
  };
  const auto report = grad_check("affine", fn, {random_normal(4, 1, rng)}, 1e-3);
  EXPECT_TRUE(report.pass);
  EXPECT_LT(report.max_relative_error, 1e-10);
}

TEST(GradCheck, TanhAtRandomPoint) {
  RngStream rng(2);
  const Tensor2D w = random_normal(3, 3, rng);
  const DifferentiableFn fn = [&](std::span<const Var> p) {
    return sum_all(mul(tanh(p[0]), Var::constant(w)));
  };
  const auto report = grad_check("tanh", fn, {random_normal(3, 3, rng)});
  EXPECT_TRUE(report.pass);
  EXPECT_LT(report.max_relative_error, 1e-6);
}

TEST(GradCheck, SoftmaxOfAffine) {
  RngStream rng(3);
  const Tensor2D w = random_normal(4, 5, rng);
  const DifferentiableFn fn = [&](std::span<const Var> p) {
    return sum_all(mul(softmax_rows(matmul(p[0], p[1])), Var::constant(w)));
  };
  const auto report = grad_check("softmax_affine", fn, {random_normal(4, 2, rng), random_normal(2, 5, rng)});
  EXPECT_TRUE(report.pass);
  EXPECT_LT(report.max_relative_error, 1e-5);
}

TEST(GradCheck, WrongGradientIsReported) {
  // Forward computes x^2 but the backward rule claims 3x.
  const DifferentiableFn fn = [](std::span<const Var> p) {
    const Var& x = p[0];
    Tensor2D v = x.value();
    for (double& e : v.data()) e *= e;
    const Var y = Var::make(v, {x}, [x](detail::Node& self) {
      Tensor2D& g = x.node().grad;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += 3.0 * x.value()[i] * self.grad[i];
    });
    return sum_all(y);
  };
  const auto report = grad_check("bad", fn, {Tensor2D::from_rows({{0.7, -1.3}})});
  EXPECT_FALSE(report.pass);
  EXPECT_GT(report.max_relative_error, 0.1);
}

TEST(GradCheck, NonFiniteIsAFailureNotACrash) {
  const DifferentiableFn fn = [](std::span<const Var> p) { return sum_all(log(p[0])); };
  const auto report = grad_check("log", fn, {Tensor2D::from_rows({{-1.0, 2.0}})});
  EXPECT_FALSE(report.pass);
  EXPECT_FALSE(report.note.empty());
}

TEST(GradCheck, DomainErrorIsAFailureNotACrash) {
  const DifferentiableFn fn = [](std::span<const Var> p) { return sum_all(normalize_rows(p[0])); };
  const auto report = grad_check("normalize", fn, {Tensor2D(1, 3, 0.0)});
  EXPECT_FALSE(report.pass);
}

TEST(GradCheck, EpsilonOutsideRangeIsReportedAsFailure) {
  const DifferentiableFn fn = [](std::span<const Var> p) { return sum_all(p[0]); };
  for (double eps : {1e-8, 1e-2}) {
    const auto report = grad_check("sum", fn, {Tensor2D(1, 1, 1.0)}, eps);
    EXPECT_FALSE(report.pass);
    EXPECT_FALSE(report.note.empty());
  }
  EXPECT_TRUE(grad_check("sum", fn, {Tensor2D(1, 1, 1.0)}, 1e-3).pass);
}

TEST(GradCheck, PassIffErrorWithinTolerance) {
  RngStream rng(4);
  const DifferentiableFn fn = [](std::span<const Var> p) { return sum_all(square(tanh(p[0]))); };
  for (int i = 0; i < 20; ++i) {
    const auto r = grad_check("sq_tanh", fn, {random_normal(2, 2, rng)});
    EXPECT_EQ(r.pass, r.max_relative_error <= r.tolerance);
  }
}

}  // namespace
}  // namespace scgn
