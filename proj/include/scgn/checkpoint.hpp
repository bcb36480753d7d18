#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "scgn/protocol.hpp"
#include "scgn/tensor.hpp"

namespace scgn {

inline constexpr int kCheckpointVersion = 1;

/// Ordered text fields plus named tensors. On disk:
///
///     scgn-checkpoint 1
///     field <name> <value...>
///     tensor <name> <rows> <cols>
///     <one line per row, hex floats separated by spaces>
///     end
///
/// Hex floats make the round trip bit-exact.
struct Checkpoint {
  std::vector<std::pair<std::string, std::string>> fields;
  std::vector<std::pair<std::string, Tensor2D>> tensors;

  void set(const std::string& name, const std::string& value);
  void put(const std::string& name, const Tensor2D& value);
  bool has(const std::string& name) const;
  /// Throws ParseError (line 0) for missing entries.
  const std::string& field(const std::string& name) const;
  const Tensor2D& tensor(const std::string& name) const;
};

std::string checkpoint_to_text(const Checkpoint& ckpt);
/// ParseError with the offending line on malformed input or a version mismatch.
Checkpoint checkpoint_from_text(const std::string& text);

/// Writes to a sibling temporary file and renames it into place, so a failed
/// write never leaves a partial checkpoint. IoError on failure.
void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Stage "pretrain" holds splits, encoder and theta_p; stage "meta" adds the model.
Checkpoint pipeline_to_checkpoint(const PipelineState& state);
PipelineState pipeline_from_checkpoint(const Checkpoint& ckpt);

/// ConfigError when the checkpoint cannot serve `data` under `config`
/// (input width, feature width, class count or split scheme differ).
void check_compatible(const PipelineState& state, const LabeledDataset& data, const RunConfig& config);

}  // namespace scgn
