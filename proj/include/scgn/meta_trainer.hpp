#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "scgn/cgn.hpp"
#include "scgn/dataset.hpp"
#include "scgn/encoder.hpp"
#include "scgn/episodes.hpp"
#include "scgn/pseudo_incremental.hpp"
#include "scgn/sgn.hpp"

namespace scgn {

struct TrainConfig {
  std::size_t iterations = 500;
  std::size_t way = 4;
  std::size_t shot = 5;
  std::size_t query = kDefaultQuery;
  double lr = 0.1;
  double momentum = 0.9;
  BetaParams beta{};
  double temperature = 1.0 / 16.0;
  double w1 = 1.0;
  double w2 = 1.0;
  std::uint64_t seed = 0;

  std::size_t relation_hidden = 32;
  double relation_score_bias = -2.0;
  std::size_t aggregator_hidden = 32;
  std::size_t heads = 1;
  std::size_t key_dim = 0;  ///< 0 means feature_dim
  bool use_sgn = true;
  bool use_cgn = true;
  /// Also update the encoder from the meta objective. Off by default.
  bool finetune_encoder = false;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Trainable graph networks on top of a frozen encoder.
struct MetaModel {
  SampleGraphNet sgn;
  ClassGraphNet cgn;
  bool use_sgn = true;
  bool use_cgn = true;

  static MetaModel create(std::size_t feature_dim, const TrainConfig& config, RngStream& rng);

  /// SGN parameters when enabled, then CGN parameters when enabled.
  std::vector<Tensor2D*> parameters();
  std::vector<const Tensor2D*> parameters() const;
  std::size_t sgn_param_count() const { return use_sgn ? sgn.parameters().size() : 0; }

  /// Class-level features of an episode: SGN refinement, or plain class means when SGN is off.
  Var class_features(const Var& features, std::span<const std::size_t> labels, std::size_t num_classes,
                     std::span<const Var> params) const;
  Tensor2D class_features(const Tensor2D& features, std::span<const std::size_t> labels,
                          std::size_t num_classes) const;
  /// CGN calibration against `bank`, or identity when CGN is off.
  Var calibrated(const Var& new_classes, const Var& bank, std::span<const Var> params) const;
  Tensor2D calibrated(const Tensor2D& new_classes, const Tensor2D& bank) const;
};

/// L1 = -sum_i cos(tanh(refined_i), tanh(prototype_i)) over matched rows.
Var sgn_alignment_loss(const Var& refined, const Var& prototypes);

/// L1 for an episode pair: rows of both refined sets against the bank rows of
/// their classes. Throws DomainError when a class is missing from the bank.
double loss_sgn_alignment(const Tensor2D& refined_c1, const Tensor2D& refined_c2, const PrototypeBank& bank,
                          std::span<const std::size_t> class_ids_c1, std::span<const std::size_t> class_ids_c2);

/// L2 = mean cross-entropy of cos(r_i, [bank; calibrated]) / temperature with
/// virtual label t mapped to position M + t.
Var cgn_classification_loss(const Var& virtual_features, const Var& bank, const Var& calibrated,
                            std::span<const std::size_t> targets, double temperature);
double loss_cgn_classification(const Tensor2D& virtual_features, const Tensor2D& bank,
                               const Tensor2D& calibrated, std::span<const std::size_t> targets,
                               double temperature);

/// Everything one meta-training step needs, with features already embedded.
struct MetaBatch {
  std::size_t way = 0;
  Tensor2D c1_features;
  Tensor2D c2_features;
  std::vector<std::size_t> c1_labels;
  std::vector<std::size_t> c2_labels;
  std::vector<std::size_t> prototype_rows;  ///< bank rows of C1 classes then C2 classes
  Tensor2D virtual_support;
  std::vector<std::size_t> virtual_labels;
  Tensor2D virtual_eval;  ///< rows classified by L2: virtual queries, or the virtual support
  std::vector<std::size_t> virtual_eval_labels;
  double lambda = 0.0;

  // Raw inputs, kept for encoder fine-tuning. The virtual rows mix mix_a with mix_b.
  Tensor2D c1_inputs;
  Tensor2D c2_inputs;
  Tensor2D virtual_support_a, virtual_support_b;
  Tensor2D virtual_eval_a, virtual_eval_b;
};

MetaBatch make_meta_batch(const Episode& c1, const Episode& c2, const VirtualEpisode& virtual_task,
                          const LabeledDataset& data, const SplitEncoder& encoder, const PrototypeBank& bank);

struct MetaLoss {
  Var l1;
  Var l2;
  Var total;
};

/// w1 * L1 + w2 * L2 on one batch; `params` follows MetaModel::parameters().
MetaLoss meta_objective(const MetaBatch& batch, const Var& bank, const MetaModel& model,
                        std::span<const Var> params, double w1, double w2, double temperature);

/// Same objective with episode features recomputed through `encoder` on the graph,
/// so gradients also reach `encoder_params` (SplitEncoder::parameters() order).
MetaLoss meta_objective(const MetaBatch& batch, const Var& bank, const MetaModel& model,
                        std::span<const Var> params, const SplitEncoder& encoder,
                        std::span<const Var> encoder_params, double w1, double w2, double temperature);

struct TrainLogEntry {
  std::size_t iteration = 0;
  double l1 = 0.0;
  double l2 = 0.0;
  double total = 0.0;
  double lambda = 0.0;
  double lr = 0.0;

  friend bool operator==(const TrainLogEntry&, const TrainLogEntry&) = default;
};

using TrainLog = std::vector<TrainLogEntry>;

/// One JSON object per line: iteration, l1, l2, total, lr, lambda.
void write_train_log(const TrainLog& log, std::ostream& out);

struct MetaTrainResult {
  MetaModel model;
  TrainLog log;
  /// Set only with finetune_encoder.
  SplitEncoder encoder;
};

/// Pseudo-incremental meta-training. Each iteration draws a disjoint episode
/// pair from the base split, mixes it into a virtual task and applies one
/// SGD-with-momentum step on w1*L1 + w2*L2 with a cosine-annealed learning rate.
/// The encoder (unless finetune_encoder) and the bank stay fixed.
MetaTrainResult meta_train(const SplitEncoder& encoder, const PrototypeBank& bank, const LabeledDataset& data,
                           const SessionSplit& base_split, const TrainConfig& config);

/// Continues training an existing model (used by tests to check parameter invariance).
MetaTrainResult meta_train(const SplitEncoder& encoder, const PrototypeBank& bank, const LabeledDataset& data,
                           const SessionSplit& base_split, const TrainConfig& config, MetaModel initial);

}  // namespace scgn
