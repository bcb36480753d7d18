#include "scgn/sgn.hpp"

#include <cmath>
#include <string>

#include "scgn/errors.hpp"
#include "scgn/numerics.hpp"

namespace scgn {

RelationEncoder RelationEncoder::create(std::size_t dim, std::size_t hidden, double score_bias,
                                        RngStream& rng) {
  RelationEncoder r;
  r.w1 = random_normal(dim, hidden, rng, std::sqrt(2.0 / static_cast<double>(dim)));
  r.gamma1 = Tensor2D(1, hidden, 1.0);
  r.beta1 = Tensor2D(1, hidden, 0.0);
  r.w2 = random_normal(hidden, 1, rng, std::sqrt(1.0 / static_cast<double>(hidden)));
  r.gamma2 = Tensor2D(1, 1, 1.0);
  r.beta2 = Tensor2D(1, 1, score_bias);
  return r;
}

Var RelationEncoder::forward(const Var& x, std::span<const Var> p) const {
  if (x.cols() != dim()) throw DomainError("RelationEncoder: input width differs from feature_dim");
  const Var a = relu(batch_standardize(matmul(x, p[0]), p[1], p[2]));
  return sigmoid(batch_standardize(matmul(a, p[3]), p[4], p[5]));
}

std::vector<Tensor2D*> RelationEncoder::parameters() { return {&w1, &gamma1, &beta1, &w2, &gamma2, &beta2}; }
std::vector<const Tensor2D*> RelationEncoder::parameters() const {
  return {&w1, &gamma1, &beta1, &w2, &gamma2, &beta2};
}

SampleGraphNet SampleGraphNet::create(std::size_t dim, std::size_t relation_hidden,
                                      std::size_t aggregator_hidden, double score_bias, RngStream& rng) {
  SampleGraphNet net;
  net.relation = RelationEncoder::create(dim, relation_hidden, score_bias, rng);
  net.aggregator = Aggregator::create(dim, aggregator_hidden, rng);
  return net;
}

std::vector<Tensor2D*> SampleGraphNet::parameters() {
  auto out = relation.parameters();
  for (Tensor2D* p : aggregator.parameters()) out.push_back(p);
  return out;
}

std::vector<const Tensor2D*> SampleGraphNet::parameters() const {
  auto out = relation.parameters();
  for (const Tensor2D* p : aggregator.parameters()) out.push_back(p);
  return out;
}

Var pairwise_relations(const Var& features, const RelationEncoder& relation, std::span<const Var> params) {
  const std::size_t n = features.rows();
  if (n == 0) throw DomainError("pairwise_relations: empty feature set");
  std::vector<std::size_t> left, right;
  left.reserve(n * n);
  right.reserve(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      left.push_back(i);
      right.push_back(j);
    }
  }
  const Var diffs = square(sub(gather_rows(features, std::move(left)), gather_rows(features, std::move(right))));
  return reshape(relation.forward(diffs, params), n, n);
}

Tensor2D pairwise_relations(const Tensor2D& features, const RelationEncoder& relation) {
  const auto params = bind_constants(relation.parameters());
  return pairwise_relations(Var::constant(features), relation, params).value();
}

Tensor2D class_mean_matrix(std::span<const std::size_t> labels, std::size_t num_classes) {
  std::vector<std::size_t> counts(num_classes, 0);
  for (std::size_t l : labels) {
    if (l >= num_classes) throw DomainError("class label " + std::to_string(l) + " out of range");
    ++counts[l];
  }
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (counts[c] == 0) throw DomainError("class " + std::to_string(c) + " has no samples");
  }
  Tensor2D m(num_classes, labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    m(labels[i], i) = 1.0 / static_cast<double>(counts[labels[i]]);
  }
  return m;
}

Var aggregate_to_class_features(const Var& features, const Var& relations,
                                std::span<const std::size_t> labels, std::size_t num_classes,
                                const Aggregator& aggregator, std::span<const Var> aggregator_params) {
  const std::size_t n = features.rows();
  if (relations.rows() != n || relations.cols() != n) {
    throw DomainError("aggregate_to_class_features: relation matrix must be NK x NK");
  }
  if (labels.size() != n) throw DomainError("aggregate_to_class_features: one label per sample required");
  const Var averaging = Var::constant(class_mean_matrix(labels, num_classes));
  const Var updated = aggregator.forward(add(features, matmul(relations, features)), aggregator_params);
  return matmul(averaging, updated);
}

Tensor2D aggregate_to_class_features(const Tensor2D& features, const Tensor2D& relations,
                                     std::span<const std::size_t> labels, std::size_t num_classes,
                                     const Aggregator& aggregator) {
  const auto params = bind_constants(aggregator.parameters());
  return aggregate_to_class_features(Var::constant(features), Var::constant(relations), labels,
                                     num_classes, aggregator, params)
      .value();
}

Var refine_class_features(const Var& features, std::span<const std::size_t> labels, std::size_t num_classes,
                          const SampleGraphNet& net, std::span<const Var> params) {
  const Var relations = pairwise_relations(features, net.relation, params.subspan(0, 6));
  return aggregate_to_class_features(features, relations, labels, num_classes, net.aggregator,
                                     params.subspan(6));
}

Tensor2D refine_class_features(const Tensor2D& features, std::span<const std::size_t> labels,
                               std::size_t num_classes, const SampleGraphNet& net) {
  const auto params = bind_constants(net.parameters());
  return refine_class_features(Var::constant(features), labels, num_classes, net, params).value();
}

}  // namespace scgn
