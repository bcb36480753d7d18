#pragma once

#include <utility>
#include <vector>

#include "scgn/dataset.hpp"
#include "scgn/encoder.hpp"
#include "scgn/episodes.hpp"
#include "scgn/rng.hpp"

namespace scgn {

struct BetaParams {
  double alpha = 2.0;
  double beta = 2.0;
};

/// Virtual few-shot task built by mixing two disjoint episodes at the hidden layer.
/// Row i of `features` is g(lambda * h(x_i^{c1}) + (1 - lambda) * h(x_i^{c2})) where
/// x_i^{c1} and x_i^{c2} share local class and within-class position.
struct VirtualEpisode {
  std::size_t way = 0;
  std::size_t shot = 0;
  Tensor2D features;                 ///< way*shot rows, grouped by virtual class
  std::vector<std::size_t> labels;   ///< virtual class per row
  Tensor2D query_features;           ///< mixed query rows (may be empty)
  std::vector<std::size_t> query_labels;
  double lambda = 0.0;
  /// Virtual class c mixes global class pairing[c].first (from C1) with pairing[c].second (from C2).
  std::vector<std::pair<std::size_t, std::size_t>> pairing;
};

/// Draws one lambda ~ Beta(params) and mixes C1 with C2.
VirtualEpisode synthesize_virtual_task(const Episode& c1, const Episode& c2, const LabeledDataset& data,
                                       const SplitEncoder& encoder, const BetaParams& params,
                                       RngStream& rng);

/// Same as `synthesize_virtual_task` with a fixed mixing coefficient.
VirtualEpisode synthesize_virtual_task_with_lambda(const Episode& c1, const Episode& c2,
                                                   const LabeledDataset& data,
                                                   const SplitEncoder& encoder, double lambda);

/// lambda * a + (1 - lambda) * b, row for row.
Tensor2D mix_hidden(const Tensor2D& a, const Tensor2D& b, double lambda);

}  // namespace scgn
