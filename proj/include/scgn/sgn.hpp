#pragma once

#include <span>
#include <vector>

#include "scgn/aggregator.hpp"
#include "scgn/autodiff.hpp"
#include "scgn/rng.hpp"
#include "scgn/tensor.hpp"

namespace scgn {

/// Pairwise relation network f_r. Input rows are elementwise squared feature
/// differences; output is one score in (0, 1) per row:
///
///     block 1: relu(bn(x W1))       (d -> hidden)
///     block 2: sigmoid(bn(a W2))    (hidden -> 1)
///
/// bn is batch standardization over the rows with learned scale/shift. The
/// affine maps carry no bias because standardization removes it.
struct RelationEncoder {
  Tensor2D w1;      ///< d x hidden
  Tensor2D gamma1;  ///< 1 x hidden
  Tensor2D beta1;   ///< 1 x hidden
  Tensor2D w2;      ///< hidden x 1
  Tensor2D gamma2;  ///< 1 x 1
  Tensor2D beta2;   ///< 1 x 1

  static RelationEncoder create(std::size_t dim, std::size_t hidden, double score_bias, RngStream& rng);

  std::size_t dim() const { return w1.rows(); }

  Var forward(const Var& squared_diffs, std::span<const Var> params) const;

  std::vector<Tensor2D*> parameters();
  std::vector<const Tensor2D*> parameters() const;
};

/// Sample-level graph network parameters (theta_s).
struct SampleGraphNet {
  RelationEncoder relation;
  Aggregator aggregator;

  static SampleGraphNet create(std::size_t dim, std::size_t relation_hidden, std::size_t aggregator_hidden,
                               double score_bias, RngStream& rng);

  /// Relation parameters followed by aggregator parameters.
  std::vector<Tensor2D*> parameters();
  std::vector<const Tensor2D*> parameters() const;
  std::size_t relation_param_count() const { return 6; }
};

/// e_ij = f_r((r_i - r_j)^2) over all ordered pairs; NK x NK.
Var pairwise_relations(const Var& features, const RelationEncoder& relation, std::span<const Var> params);
Tensor2D pairwise_relations(const Tensor2D& features, const RelationEncoder& relation);

/// N x NK matrix averaging rows with the same label. Throws DomainError when a
/// label in [0, num_classes) has no rows or a label is out of range.
Tensor2D class_mean_matrix(std::span<const std::size_t> labels, std::size_t num_classes);

/// Row c is the mean over samples i with label c of SGN(r_i + sum_j e_ij r_j).
Var aggregate_to_class_features(const Var& features, const Var& relations,
                                std::span<const std::size_t> labels, std::size_t num_classes,
                                const Aggregator& aggregator, std::span<const Var> aggregator_params);
Tensor2D aggregate_to_class_features(const Tensor2D& features, const Tensor2D& relations,
                                     std::span<const std::size_t> labels, std::size_t num_classes,
                                     const Aggregator& aggregator);

/// Relations followed by aggregation. `params` follows SampleGraphNet::parameters().
Var refine_class_features(const Var& features, std::span<const std::size_t> labels, std::size_t num_classes,
                          const SampleGraphNet& net, std::span<const Var> params);
Tensor2D refine_class_features(const Tensor2D& features, std::span<const std::size_t> labels,
                               std::size_t num_classes, const SampleGraphNet& net);

}  // namespace scgn
