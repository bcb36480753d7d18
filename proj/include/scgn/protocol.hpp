#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "scgn/config.hpp"
#include "scgn/dataset.hpp"
#include "scgn/encoder.hpp"
#include "scgn/episodes.hpp"
#include "scgn/meta_trainer.hpp"

namespace scgn {

enum class Variant : std::uint8_t { kBaseline, kSgn, kCgn, kSgnCgn, kFinetune };

const char* to_string(Variant v);
/// "baseline", "sgn", "cgn", "sgn+cgn", "finetune". Throws ConfigError otherwise.
Variant variant_from_string(const std::string& name);
bool uses_sgn(Variant v);
bool uses_cgn(Variant v);
bool is_meta_variant(Variant v);

/// Trained artifacts of one seed, as stored in checkpoints.
struct PipelineState {
  std::uint64_t seed = 0;
  std::string config_digest;
  std::vector<SessionSplit> splits;
  SplitEncoder encoder;
  /// Pretrained classifier prototypes of the base classes; empty when pretraining was skipped.
  PrototypeBank theta_p;
  std::vector<double> pretrain_losses;
  /// Present after meta-training.
  std::optional<MetaModel> model;
  std::string variant;
  TrainLog meta_log;
};

/// Session splits, encoder and theta_p. Pretraining is skipped when
/// config.pretrain.epochs == 0, leaving a randomly initialized encoder.
PipelineState pretrain_stage(const LabeledDataset& data, const RunConfig& config, std::uint64_t seed);

/// Adds SGN/CGN parameters for `variant` (which must use at least one of them).
/// Training is skipped when config.meta.iterations == 0.
PipelineState metatrain_stage(PipelineState state, const LabeledDataset& data, const RunConfig& config,
                              Variant variant);

struct SessionState {
  std::size_t session = 0;
  PrototypeBank bank;
  std::vector<std::size_t> seen;  ///< class ids in bank order
  SplitEncoder encoder;
  MetaModel model;  ///< use_sgn / use_cgn select the registration pipeline
};

/// Base prototypes: plain class means of the base training features, or SGN-refined
/// class features averaged over `rounds` random partitions of the base classes into
/// `way`-class episodes of `shot` support samples.
/// With CGN enabled and theta_p present, rows are rescaled to theta_p's row norms so
/// the attention sees the magnitudes it was trained on.
PrototypeBank build_base_bank(const SplitEncoder& encoder, const MetaModel& model, const PrototypeBank& theta_p,
                              const LabeledDataset& data, const SessionSplit& base_split, std::size_t way,
                              std::size_t shot, std::size_t rounds, RngStream& rng);

/// Embeds the support set, refines it (SGN or class means), calibrates it against
/// the bank (CGN or identity) and appends one row per class. Old rows are untouched.
/// Throws ProtocolError on class collision.
SessionState register_session(const SessionState& state, const Episode& episode, const LabeledDataset& data);

/// Finetune-style reference: imprint class means, then `steps` full-batch SGD steps of
/// cosine cross-entropy on the support set, updating the encoder and every bank row.
SessionState finetune_session(const SessionState& state, const Episode& episode, const LabeledDataset& data,
                              std::size_t steps, double lr, double temperature);

struct EvalResult {
  double accuracy = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;
  std::size_t ties = 0;  ///< samples whose top logit is shared by several rows
};

/// Top-1 of argmax cosine over the bank; `labels` are class ids. Ties go to the
/// lowest bank index. Empty input -> DomainError; unseen label -> ProtocolError.
EvalResult evaluate_features(const PrototypeBank& bank, const Tensor2D& features,
                             std::span<const std::size_t> labels);

/// Test samples of every seen class, embedded by the state's encoder.
EvalResult evaluate_session(const SessionState& state, const LabeledDataset& data);

/// A_0 - A_N. Both on [0,1] or both on [0,100]; mixed scales -> DomainError.
double performance_dropping(double a0, double an);

struct SessionReport {
  std::string variant;
  std::uint64_t seed = 0;
  std::string config_digest;
  std::vector<double> accuracies;  ///< fraction correct, session 0 first
  std::vector<std::size_t> ties;
  std::vector<std::size_t> bank_sizes;
  double pd = 0.0;
};

/// Runs base evaluation and every incremental session for one trained pipeline.
SessionReport run_sessions(const PipelineState& state, const LabeledDataset& data, const RunConfig& config,
                           Variant variant);

/// pretrain_stage + metatrain_stage (when needed) + run_sessions.
SessionReport run_protocol(const LabeledDataset& data, const RunConfig& config, Variant variant,
                           std::uint64_t seed);

struct AblationRow {
  std::string variant;
  std::size_t runs = 0;
  double final_mean = 0.0;
  double final_std = 0.0;
  double pd_mean = 0.0;
  double pd_std = 0.0;
};

struct AblationReport {
  std::string config_digest;
  std::vector<SessionReport> runs;  ///< seed-major, variants in config order
  std::vector<AblationRow> summary;  ///< one row per variant
};

/// Every variant of config.variants for every seed of config.seeds. The dataset is
/// resolved and pretraining done once per seed and shared by all variants.
AblationReport run_ablation(const RunConfig& config);

/// Mean and sample standard deviation per variant (std 0 for a single run).
std::vector<AblationRow> summarize(const std::vector<SessionReport>& runs, const std::vector<std::string>& variants);

std::string session_report_json(const SessionReport& report);
/// Header `variant,seed,session_0,...,session_n,PD`; values in percent.
void write_session_table(const std::vector<SessionReport>& reports, std::ostream& out);
/// `# session accuracy` header, then one `i A_i` line per session.
void write_plot_data(const SessionReport& report, std::ostream& out);
std::string ablation_report_json(const AblationReport& report);
/// Header `variant,runs,final_mean,final_std,pd_mean,pd_std`; values in percent.
void write_ablation_table(const AblationReport& report, std::ostream& out);

}  // namespace scgn
