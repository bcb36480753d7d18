#pragma once

#include <cstddef>
#include <vector>

#include "scgn/dataset.hpp"
#include "scgn/rng.hpp"

namespace scgn {

/// Classes owned by one session. Session 0 is the base session; its `shot`
/// is 0, meaning every training sample of its classes is available.
struct SessionSplit {
  std::size_t session_index = 0;
  std::vector<std::size_t> class_ids;
  std::size_t shot = 0;
};

/// Shuffles class ids with `rng`, gives the first `num_base` to session 0 and
/// cuts the rest into sessions of `way` classes. Throws ConfigError when the
/// incremental remainder is not divisible by `way`.
std::vector<SessionSplit> make_session_splits(std::size_t num_classes, std::size_t num_base,
                                              std::size_t way, std::size_t shot, RngStream& rng);

/// N-way K-shot task. Support rows are grouped by local class: indices
/// [c*K, (c+1)*K) hold class c. Query samples follow the same local labels.
struct Episode {
  std::size_t way = 0;
  std::size_t shot = 0;
  std::vector<std::size_t> support;  ///< dataset sample indices
  std::vector<std::size_t> support_labels;
  std::vector<std::size_t> query;
  std::vector<std::size_t> query_labels;
  std::vector<std::size_t> class_ids;  ///< local label -> global class id

  Tensor2D support_features(const LabeledDataset& data) const { return data.features.rows_subset(support); }
  Tensor2D query_features(const LabeledDataset& data) const { return data.features.rows_subset(query); }
};

/// Query samples drawn per class on top of the K support samples, capped by
/// what the class has left. kDefaultQuery means "same as shot".
inline constexpr std::size_t kDefaultQuery = static_cast<std::size_t>(-1);

/// Samples an episode over `classes` in the given order (no class sampling).
Episode sample_episode_for_classes(const LabeledDataset& data, const std::vector<std::size_t>& classes,
                                   std::size_t shot, std::size_t query_per_class, RngStream& rng);

/// Draws 2N distinct classes from the base split's training data and returns two
/// N-way K-shot episodes over disjoint class sets.
std::pair<Episode, Episode> sample_disjoint_episode_pair(const SessionSplit& base_split,
                                                         const LabeledDataset& data, std::size_t way,
                                                         std::size_t shot, RngStream& rng,
                                                         std::size_t query_per_class = kDefaultQuery);

}  // namespace scgn
