#include "scgn/pseudo_incremental.hpp"

#include <algorithm>

#include "scgn/errors.hpp"

namespace scgn {

Tensor2D mix_hidden(const Tensor2D& a, const Tensor2D& b, double lambda) {
  if (!a.same_shape(b)) throw DomainError("mix_hidden: shape mismatch");
  Tensor2D out(a.rows(), a.cols());
  const double mu = 1.0 - lambda;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = lambda * a[i] + mu * b[i];
  return out;
}

namespace {

// Pairs query rows of matching local class and position; classes keep the
// smaller of the two query counts.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> paired_queries(
    const Episode& c1, const Episode& c2, std::vector<std::size_t>& labels) {
  std::vector<std::size_t> q1, q2;
  for (std::size_t c = 0; c < c1.way; ++c) {
    std::vector<std::size_t> a, b;
    for (std::size_t i = 0; i < c1.query.size(); ++i)
      if (c1.query_labels[i] == c) a.push_back(c1.query[i]);
    for (std::size_t i = 0; i < c2.query.size(); ++i)
      if (c2.query_labels[i] == c) b.push_back(c2.query[i]);
    const std::size_t n = std::min(a.size(), b.size());
    for (std::size_t k = 0; k < n; ++k) {
      q1.push_back(a[k]);
      q2.push_back(b[k]);
      labels.push_back(c);
    }
  }
  return {q1, q2};
}

}  // namespace

VirtualEpisode synthesize_virtual_task_with_lambda(const Episode& c1, const Episode& c2,
                                                   const LabeledDataset& data,
                                                   const SplitEncoder& encoder, double lambda) {
  if (c1.way != c2.way || c1.shot != c2.shot || c1.support.size() != c2.support.size()) {
    throw DomainError("synthesize_virtual_task: episodes differ in way or shot");
  }
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw DomainError("synthesize_virtual_task: lambda outside [0, 1]");
  for (std::size_t a : c1.class_ids) {
    if (std::find(c2.class_ids.begin(), c2.class_ids.end(), a) != c2.class_ids.end()) {
      throw DomainError("synthesize_virtual_task: episodes share class " + std::to_string(a));
    }
  }

  VirtualEpisode v;
  v.way = c1.way;
  v.shot = c1.shot;
  v.lambda = lambda;
  v.labels = c1.support_labels;
  for (std::size_t c = 0; c < c1.way; ++c) v.pairing.emplace_back(c1.class_ids[c], c2.class_ids[c]);

  const Tensor2D h1 = encoder.hidden(c1.support_features(data));
  const Tensor2D h2 = encoder.hidden(c2.support_features(data));
  v.features = encoder.features_from_hidden(mix_hidden(h1, h2, lambda));

  auto [q1, q2] = paired_queries(c1, c2, v.query_labels);
  if (!q1.empty()) {
    const Tensor2D hq1 = encoder.hidden(data.features.rows_subset(q1));
    const Tensor2D hq2 = encoder.hidden(data.features.rows_subset(q2));
    v.query_features = encoder.features_from_hidden(mix_hidden(hq1, hq2, lambda));
  } else {
    v.query_features = Tensor2D(0, encoder.feature_dim());
  }
  return v;
}

VirtualEpisode synthesize_virtual_task(const Episode& c1, const Episode& c2, const LabeledDataset& data,
                                       const SplitEncoder& encoder, const BetaParams& params,
                                       RngStream& rng) {
  const double lambda = sample_beta(params.alpha, params.beta, rng);
  return synthesize_virtual_task_with_lambda(c1, c2, data, encoder, lambda);
}

}  // namespace scgn
