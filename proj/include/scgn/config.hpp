#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "scgn/dataset.hpp"
#include "scgn/encoder.hpp"
#include "scgn/meta_trainer.hpp"

namespace scgn {

/// Everything a pipeline run needs. Dataset: synthetic Gaussian mixture unless
/// `feature_file` is set.
struct RunConfig {
  std::string feature_file;         ///< empty: synthetic
  SyntheticSpec synthetic;
  double holdout_fraction = 0.25;   ///< test share for feature files

  std::size_t num_base = 18;
  std::size_t way = 4;
  std::size_t shot = 5;

  PretrainConfig pretrain;
  TrainConfig meta;

  /// Episode rounds averaged into each base prototype when SGN refines the base session.
  std::size_t base_refine_rounds = 6;
  /// Finetune-style reference: SGD steps on each session's support set.
  std::size_t finetune_steps = 30;
  double finetune_lr = 0.05;

  std::string variant = "sgn+cgn";
  std::vector<std::string> variants{"baseline", "sgn", "cgn", "sgn+cgn", "finetune"};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::uint64_t seed = 0;

  std::filesystem::path out = "scgn_out";

  /// Throws ConfigError naming the first offending field.
  void validate() const;
};

/// One configuration key. Names use underscores; the CLI flag is the same name
/// with dashes (`num_base` -> `--num-base`).
struct ConfigField {
  std::string name;
  std::string help;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<ConfigField>& config_fields();

/// Sets one key from its text form. Throws ConfigError for unknown keys or bad values.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);
std::string get_config_value(const RunConfig& config, const std::string& key);

/// Parses `key = value` lines; `#` starts a comment. ParseError carries the line number.
/// Keys found are appended to `keys` when given.
RunConfig parse_config_text(const std::string& text, RunConfig base = {}, std::vector<std::string>* keys = nullptr);
RunConfig load_config_file(const std::filesystem::path& path, RunConfig base = {},
                           std::vector<std::string>* keys = nullptr);

/// Every key except `out`, one `key = value` line each, in field-table order.
std::string canonical_config_text(const RunConfig& config);

/// FNV-1a 64 of canonical_config_text, as 16 hex digits.
std::string config_digest(const RunConfig& config);

/// Shortest text that parses back to the same double.
std::string format_double(double value);

/// Dataset for `seed`: generated when synthetic, loaded and held out otherwise.
LabeledDataset resolve_dataset(const RunConfig& config, std::uint64_t seed);

}  // namespace scgn
