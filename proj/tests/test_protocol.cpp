#include <gtest/gtest.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <sstream>

#include "scgn/errors.hpp"
#include "scgn/numerics.hpp"
#include "scgn/protocol.hpp"

namespace scgn {
namespace {

bool bit_equal(const Tensor2D& a, const Tensor2D& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i])) return false;
  return true;
}

std::vector<std::size_t> iota_ids(std::size_t from, std::size_t count) {
  std::vector<std::size_t> ids(count);
  std::iota(ids.begin(), ids.end(), from);
  return ids;
}

// 60 base classes in the bank, 5 fresh classes to register.
struct SessionFixture {
  LabeledDataset data;
  SessionState state;
};

SessionFixture make_session_fixture(bool sgn, bool cgn) {
  SyntheticSpec spec;
  spec.num_classes = 65;
  spec.input_dim = 8;
  spec.samples_per_class = 12;
  RngStream rng(11);
  SessionFixture f;
  f.data = generate_synthetic_dataset(spec, rng);
  f.state.encoder = SplitEncoder::create(8, {10, 10}, 6, rng);
  TrainConfig tc;
  tc.aggregator_hidden = 8;
  f.state.model = MetaModel::create(6, tc, rng);
  f.state.model.use_sgn = sgn;
  f.state.model.use_cgn = cgn;
  const auto base = iota_ids(0, 60);
  f.state.bank = PrototypeBank(6);
  f.state.bank.append(random_normal(60, 6, rng), base, Provenance{});
  f.state.seen = base;
  return f;
}

RunConfig small_config() {
  RunConfig c;
  c.synthetic.num_classes = 12;
  c.synthetic.input_dim = 6;
  c.synthetic.samples_per_class = 16;
  c.num_base = 6;
  c.way = 2;
  c.shot = 3;
  c.pretrain.epochs = 5;
  c.pretrain.hidden_dims = {12, 12};
  c.pretrain.feature_dim = 8;
  c.meta.iterations = 10;
  c.meta.way = 2;
  c.meta.shot = 3;
  c.meta.aggregator_hidden = 8;
  c.base_refine_rounds = 2;
  c.finetune_steps = 3;
  return c;
}

class Registration : public ::testing::TestWithParam<std::pair<bool, bool>> {};

TEST_P(Registration, AppendsWayRowsAndKeepsOldRowsBitIdentical) {
  const auto [sgn, cgn] = GetParam();
  const SessionFixture f = make_session_fixture(sgn, cgn);
  RngStream rng(12);
  const Episode ep = sample_episode_for_classes(f.data, iota_ids(60, 5), 5, 0, rng);
  const SessionState next = register_session(f.state, ep, f.data);
  ASSERT_EQ(next.bank.size(), 65u);
  ASSERT_EQ(next.seen.size(), 65u);
  Tensor2D old_rows(60, 6);
  for (std::size_t i = 0; i < 60; ++i)
    for (std::size_t k = 0; k < 6; ++k) old_rows(i, k) = next.bank.matrix()(i, k);
  EXPECT_TRUE(bit_equal(old_rows, f.state.bank.matrix()));
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(next.bank.class_ids()[60 + i], 60 + i);
    EXPECT_EQ(next.bank.provenance()[60 + i].kind, ProvenanceKind::kIncremental);
  }
}

TEST_P(Registration, RegisteringTheSameClassesTwiceIsProtocolError) {
  const auto [sgn, cgn] = GetParam();
  const SessionFixture f = make_session_fixture(sgn, cgn);
  RngStream rng(13);
  const Episode ep = sample_episode_for_classes(f.data, iota_ids(60, 5), 5, 0, rng);
  const SessionState next = register_session(f.state, ep, f.data);
  EXPECT_THROW(register_session(next, ep, f.data), ProtocolError);
  const Episode base_ep = sample_episode_for_classes(f.data, {3, 61}, 2, 0, rng);
  EXPECT_THROW(register_session(f.state, base_ep, f.data), ProtocolError);
}

INSTANTIATE_TEST_SUITE_P(Pipelines, Registration,
                         ::testing::Values(std::pair{false, false}, std::pair{true, false}, std::pair{false, true},
                                           std::pair{true, true}));

TEST(Registration, PlainMeansMatchEmbeddedSupportMeans) {
  const SessionFixture f = make_session_fixture(false, false);
  RngStream rng(14);
  const Episode ep = sample_episode_for_classes(f.data, iota_ids(60, 5), 4, 0, rng);
  const SessionState next = register_session(f.state, ep, f.data);
  const Tensor2D emb = f.state.encoder.features(ep.support_features(f.data));
  for (std::size_t c = 0; c < 5; ++c)
    for (std::size_t k = 0; k < 6; ++k) {
      double m = 0.0;
      for (std::size_t s = 0; s < 4; ++s) m += emb(c * 4 + s, k);
      EXPECT_NEAR(next.bank.matrix()(60 + c, k), m / 4.0, 1e-12);
    }
}

TEST(Evaluate, OrthogonalPrototypesAreExact) {
  PrototypeBank bank(4);
  bank.append(Tensor2D::identity(4), std::vector<std::size_t>{7, 3, 9, 1}, Provenance{});
  Tensor2D x(8, 4, 0.0);
  std::vector<std::size_t> labels;
  const std::size_t ids[] = {7, 3, 9, 1};
  for (std::size_t i = 0; i < 8; ++i) {
    x(i, i % 4) = 1.0 + double(i);
    x(i, (i + 1) % 4) = 0.1;
    labels.push_back(ids[i % 4]);
  }
  const EvalResult r = evaluate_features(bank, x, labels);
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.correct, 8u);
  EXPECT_EQ(r.ties, 0u);
}

TEST(Evaluate, PermutedLabelsAreAtChance) {
  const std::size_t classes = 10, per = 500;
  RngStream rng(15);
  PrototypeBank bank(classes);
  bank.append(Tensor2D::identity(classes), iota_ids(0, classes), Provenance{});
  Tensor2D x(classes * per, classes);
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < classes * per; ++i) {
    x(i, i % classes) = 1.0;
    for (std::size_t k = 0; k < classes; ++k) x(i, k) += 0.01 * rng.normal();
    labels.push_back(i % classes);
  }
  ASSERT_EQ(evaluate_features(bank, x, labels).accuracy, 1.0);
  rng.shuffle(std::span<std::size_t>(labels));
  const double n = double(classes * per), p = 1.0 / classes;
  EXPECT_NEAR(evaluate_features(bank, x, labels).accuracy, p, 3.0 * std::sqrt(p * (1 - p) / n));
}

TEST(Evaluate, TiesGoToLowestIndexAndAreCounted) {
  PrototypeBank bank(2);
  bank.append(Tensor2D::from_rows({{1.0, 0.0}, {1.0, 0.0}}), std::vector<std::size_t>{5, 6}, Provenance{});
  const Tensor2D x = Tensor2D::from_rows({{2.0, 1.0}, {3.0, -1.0}});
  const std::vector<std::size_t> first{5, 5}, second{6, 6};
  const EvalResult a = evaluate_features(bank, x, first);
  EXPECT_EQ(a.accuracy, 1.0);
  EXPECT_EQ(a.ties, 2u);
  EXPECT_EQ(evaluate_features(bank, x, second).accuracy, 0.0);
}

TEST(Evaluate, EmptyOrUnseenIsAnError) {
  PrototypeBank bank(2);
  bank.append(Tensor2D::identity(2), std::vector<std::size_t>{0, 1}, Provenance{});
  EXPECT_THROW(evaluate_features(bank, Tensor2D(0, 2), std::vector<std::size_t>{}), DomainError);
  const std::vector<std::size_t> unseen{0, 4};
  EXPECT_THROW(evaluate_features(bank, Tensor2D::identity(2), unseen), ProtocolError);
}

TEST(PerformanceDropping, ReferenceValues) {
  EXPECT_NEAR(performance_dropping(73.25, 52.00), 21.25, 1e-9);
  EXPECT_NEAR(performance_dropping(61.31, 1.40), 59.91, 1e-9);
  EXPECT_NEAR(performance_dropping(0.7325, 0.52), 0.2125, 1e-12);
  for (double x : {0.0, 0.3, 1.0, 42.0, 100.0}) EXPECT_EQ(performance_dropping(x, x), 0.0);
}

TEST(PerformanceDropping, BadInputsAreDomainErrors) {
  EXPECT_THROW(performance_dropping(73.25, 0.52), DomainError);
  EXPECT_THROW(performance_dropping(0.9, 52.0), DomainError);
  EXPECT_THROW(performance_dropping(-0.1, 0.2), DomainError);
  EXPECT_THROW(performance_dropping(0.5, 101.0), DomainError);
  EXPECT_THROW(performance_dropping(std::nan(""), 0.2), DomainError);
}

TEST(Variants, NamesRoundTrip) {
  for (Variant v : {Variant::kBaseline, Variant::kSgn, Variant::kCgn, Variant::kSgnCgn, Variant::kFinetune})
    EXPECT_EQ(variant_from_string(to_string(v)), v);
  EXPECT_THROW(variant_from_string("sgn-cgn"), ConfigError);
  EXPECT_TRUE(uses_sgn(Variant::kSgnCgn));
  EXPECT_FALSE(uses_cgn(Variant::kSgn));
  EXPECT_FALSE(is_meta_variant(Variant::kFinetune));
  EXPECT_FALSE(is_meta_variant(Variant::kBaseline));
}

TEST(Sessions, BankGrowsByWayAndPdIsFirstMinusLast) {
  const RunConfig c = small_config();
  const LabeledDataset data = resolve_dataset(c, 3);
  const PipelineState pre = pretrain_stage(data, c, 3);
  ASSERT_EQ(pre.splits.size(), 4u);
  for (Variant v : {Variant::kBaseline, Variant::kFinetune}) {
    const SessionReport r = run_sessions(pre, data, c, v);
    ASSERT_EQ(r.accuracies.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) {
      EXPECT_EQ(r.bank_sizes[i], c.num_base + i * c.way);
      EXPECT_GE(r.accuracies[i], 0.0);
      EXPECT_LE(r.accuracies[i], 1.0);
    }
    EXPECT_EQ(r.pd, r.accuracies.front() - r.accuracies.back());
  }
  const PipelineState meta = metatrain_stage(pre, data, c, Variant::kSgnCgn);
  const SessionReport r = run_sessions(meta, data, c, Variant::kSgnCgn);
  EXPECT_EQ(r.bank_sizes.back(), 12u);
  EXPECT_THROW(run_sessions(meta, data, c, Variant::kSgn), ProtocolError);
  EXPECT_THROW(run_sessions(pre, data, c, Variant::kCgn), ProtocolError);
}

TEST(Sessions, BaseAccuracyDoesNotDependOnFutureSessions) {
  const RunConfig c = small_config();
  const LabeledDataset data = resolve_dataset(c, 4);
  const PipelineState meta = metatrain_stage(pretrain_stage(data, c, 4), data, c, Variant::kSgnCgn);
  const SessionReport full = run_sessions(meta, data, c, Variant::kSgnCgn);
  for (std::size_t keep = 1; keep < meta.splits.size(); ++keep) {
    PipelineState cut = meta;
    cut.splits.resize(keep);
    const SessionReport r = run_sessions(cut, data, c, Variant::kSgnCgn);
    ASSERT_EQ(r.accuracies.size(), keep);
    EXPECT_EQ(r.accuracies.front(), full.accuracies.front());
  }
}

TEST(Ablation, OneVariantGivesOneRowAndRepeatedSeedsAgree) {
  RunConfig c = small_config();
  c.variants = {"cgn"};
  c.seeds = {7, 7};
  const AblationReport rep = run_ablation(c);
  ASSERT_EQ(rep.summary.size(), 1u);
  EXPECT_EQ(rep.summary[0].variant, "cgn");
  EXPECT_EQ(rep.summary[0].runs, 2u);
  ASSERT_EQ(rep.runs.size(), 2u);
  EXPECT_EQ(rep.runs[0].accuracies, rep.runs[1].accuracies);
  EXPECT_EQ(rep.summary[0].final_std, 0.0);
  EXPECT_EQ(rep.config_digest, config_digest(c));
}

TEST(Ablation, SummaryMeanAndSampleStd) {
  std::vector<SessionReport> runs(3);
  const double finals[] = {0.5, 0.6, 0.9};
  for (int i = 0; i < 3; ++i) {
    runs[i].variant = "baseline";
    runs[i].accuracies = {1.0, finals[i]};
    runs[i].pd = 1.0 - finals[i];
  }
  const auto rows = summarize(runs, {"baseline", "sgn"});
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_NEAR(rows[0].final_mean, 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(rows[0].final_std, std::sqrt(((0.5 - 2.0 / 3) * (0.5 - 2.0 / 3) + (0.6 - 2.0 / 3) * (0.6 - 2.0 / 3) +
                                            (0.9 - 2.0 / 3) * (0.9 - 2.0 / 3)) / 2.0),
              1e-12);
  EXPECT_NEAR(rows[0].pd_mean, 1.0 / 3.0, 1e-12);
  EXPECT_EQ(rows[1].runs, 0u);
}

TEST(Writers, TableAndPlotLayout) {
  SessionReport r;
  r.variant = "sgn";
  r.seed = 2;
  r.accuracies = {0.75, 0.5, 0.25};
  r.pd = 0.5;
  std::ostringstream table, plot;
  write_session_table({r}, table);
  write_plot_data(r, plot);
  std::istringstream t(table.str());
  std::string header, row, extra;
  std::getline(t, header);
  std::getline(t, row);
  EXPECT_EQ(header, "variant,seed,session_0,session_1,session_2,PD");
  EXPECT_EQ(std::count(row.begin(), row.end(), ','), std::count(header.begin(), header.end(), ','));
  EXPECT_EQ(row.rfind("sgn,2,75", 0), 0u);
  EXPECT_FALSE(std::getline(t, extra));
  std::istringstream p(plot.str());
  std::string line;
  std::getline(p, line);
  EXPECT_EQ(line, "# session accuracy");
  std::size_t n = 0;
  while (std::getline(p, line)) {
    std::istringstream fields(line);
    std::size_t idx;
    double acc;
    fields >> idx >> acc;
    EXPECT_EQ(idx, n);
    EXPECT_NEAR(acc, 100.0 * r.accuracies[n], 1e-9);
    ++n;
  }
  EXPECT_EQ(n, 3u);
}

}  // namespace
}  // namespace scgn
