#include "scgn/episodes.hpp"

#include <algorithm>
#include <string>

#include "scgn/errors.hpp"

namespace scgn {

std::vector<SessionSplit> make_session_splits(std::size_t num_classes, std::size_t num_base,
                                              std::size_t way, std::size_t shot, RngStream& rng) {
  if (num_base == 0 || num_base > num_classes) {
    throw ConfigError("num_base must be in [1, num_classes] (num_base=" + std::to_string(num_base) +
                      ", num_classes=" + std::to_string(num_classes) + ")");
  }
  const std::size_t remainder = num_classes - num_base;
  if (remainder > 0 && (way == 0 || remainder % way != 0)) {
    throw ConfigError("way: " + std::to_string(remainder) +
                      " incremental classes are not divisible into sessions of way=" +
                      std::to_string(way));
  }
  if (remainder > 0 && shot == 0) throw ConfigError("shot must be >= 1");

  std::vector<std::size_t> order(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) order[c] = c;
  rng.shuffle(std::span<std::size_t>(order));

  std::vector<SessionSplit> splits;
  splits.push_back({0, {order.begin(), order.begin() + static_cast<std::ptrdiff_t>(num_base)}, 0});
  const std::size_t sessions = remainder == 0 ? 0 : remainder / way;
  for (std::size_t s = 0; s < sessions; ++s) {
    const auto begin = order.begin() + static_cast<std::ptrdiff_t>(num_base + s * way);
    splits.push_back({s + 1, {begin, begin + static_cast<std::ptrdiff_t>(way)}, shot});
  }
  return splits;
}

Episode sample_episode_for_classes(const LabeledDataset& data, const std::vector<std::size_t>& classes,
                                   std::size_t shot, std::size_t query_per_class, RngStream& rng) {
  if (classes.empty() || shot == 0) throw SamplingError("episode needs at least one class and one shot");
  const std::size_t query = query_per_class == kDefaultQuery ? shot : query_per_class;

  Episode ep;
  ep.way = classes.size();
  ep.shot = shot;
  ep.class_ids = classes;
  for (std::size_t local = 0; local < classes.size(); ++local) {
    std::vector<std::size_t> pool = data.indices_of(classes[local], Partition::kTrain);
    if (pool.size() < shot) {
      throw SamplingError("class " + std::to_string(classes[local]) + " has " +
                          std::to_string(pool.size()) + " training samples, need " +
                          std::to_string(shot));
    }
    rng.shuffle(std::span<std::size_t>(pool));
    for (std::size_t k = 0; k < shot; ++k) {
      ep.support.push_back(pool[k]);
      ep.support_labels.push_back(local);
    }
    const std::size_t q = std::min(query, pool.size() - shot);
    for (std::size_t k = 0; k < q; ++k) {
      ep.query.push_back(pool[shot + k]);
      ep.query_labels.push_back(local);
    }
  }
  return ep;
}

std::pair<Episode, Episode> sample_disjoint_episode_pair(const SessionSplit& base_split,
                                                         const LabeledDataset& data, std::size_t way,
                                                         std::size_t shot, RngStream& rng,
                                                         std::size_t query_per_class) {
  if (way == 0 || shot == 0) throw SamplingError("way and shot must be positive");
  const auto& pool = base_split.class_ids;
  if (pool.size() < 2 * way) {
    throw SamplingError("base split has " + std::to_string(pool.size()) + " classes, need " +
                        std::to_string(2 * way) + " for two disjoint " + std::to_string(way) +
                        "-way episodes");
  }
  for (std::size_t c : pool) {
    if (data.indices_of(c, Partition::kTrain).size() < shot) {
      throw SamplingError("base class " + std::to_string(c) + " has fewer than " +
                          std::to_string(shot) + " training samples");
    }
  }
  std::vector<std::size_t> classes = pool;
  // Partial Fisher-Yates: the first 2N positions become a uniform draw without replacement.
  for (std::size_t i = 0; i < 2 * way; ++i) {
    std::swap(classes[i], classes[i + rng.index(classes.size() - i)]);
  }
  std::vector<std::size_t> first(classes.begin(), classes.begin() + static_cast<std::ptrdiff_t>(way));
  std::vector<std::size_t> second(classes.begin() + static_cast<std::ptrdiff_t>(way),
                                  classes.begin() + static_cast<std::ptrdiff_t>(2 * way));
  Episode c1 = sample_episode_for_classes(data, first, shot, query_per_class, rng);
  Episode c2 = sample_episode_for_classes(data, second, shot, query_per_class, rng);
  return {std::move(c1), std::move(c2)};
}

}  // namespace scgn
