#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "scgn/autodiff.hpp"
#include "scgn/dataset.hpp"
#include "scgn/rng.hpp"
#include "scgn/tensor.hpp"

namespace scgn {

enum class Activation : std::uint8_t { kLinear, kRelu, kTanh };

const char* to_string(Activation a);
Activation activation_from_string(const std::string& name);
Var activate(const Var& x, Activation a);

/// y = act(x W + b), W is in x out, b is 1 x out.
struct DenseLayer {
  Tensor2D weight;
  Tensor2D bias;
  Activation activation = Activation::kRelu;

  std::size_t in_dim() const { return weight.rows(); }
  std::size_t out_dim() const { return weight.cols(); }

  static DenseLayer he_normal(std::size_t in, std::size_t out, Activation act, RngStream& rng);
  Var forward(const Var& x, const Var& w, const Var& b) const;
};

/// Feature extractor f_e = g o h, split at a hidden layer for manifold mixup.
class SplitEncoder {
 public:
  SplitEncoder() = default;
  SplitEncoder(std::vector<DenseLayer> h, std::vector<DenseLayer> g);

  /// Three rectified affine layers: input -> hidden_dims[0] -> hidden_dims[1] form h,
  /// the last layer hidden_dims[1] -> feature_dim forms g.
  static SplitEncoder create(std::size_t input_dim, std::pair<std::size_t, std::size_t> hidden_dims,
                             std::size_t feature_dim, RngStream& rng);

  std::size_t input_dim() const;
  std::size_t hidden_dim() const;
  std::size_t feature_dim() const;

  /// Batched: one sample per row. Returns (h(x), g(h(x))).
  std::pair<Tensor2D, Tensor2D> embed(const Tensor2D& x) const;
  Tensor2D hidden(const Tensor2D& x) const;
  Tensor2D features(const Tensor2D& x) const { return embed(x).second; }
  Tensor2D features_from_hidden(const Tensor2D& hidden) const;

  /// Graph versions. `params` follows `parameters()` order.
  Var forward_h(const Var& x, std::span<const Var> params) const;
  Var forward_g(const Var& hidden, std::span<const Var> params) const;

  /// Weight then bias of every h layer, then of every g layer.
  std::vector<Tensor2D*> parameters();
  std::vector<const Tensor2D*> parameters() const;

  const std::vector<DenseLayer>& h_layers() const { return h_; }
  const std::vector<DenseLayer>& g_layers() const { return g_; }

 private:
  std::vector<DenseLayer> h_;
  std::vector<DenseLayer> g_;
};

enum class ProvenanceKind : std::uint8_t { kBase, kIncremental, kVirtual };

struct Provenance {
  ProvenanceKind kind = ProvenanceKind::kBase;
  std::size_t session = 0;

  std::string to_string() const;
  friend bool operator==(const Provenance&, const Provenance&) = default;
};

/// Ordered class-level feature vectors. Rows are append-only; classifier
/// logits are cosine similarities against them.
class PrototypeBank {
 public:
  PrototypeBank() = default;
  explicit PrototypeBank(std::size_t feature_dim) : rows_(0, feature_dim) {}

  std::size_t size() const { return class_ids_.size(); }
  bool empty() const { return class_ids_.empty(); }
  std::size_t feature_dim() const { return rows_.cols(); }

  const Tensor2D& matrix() const { return rows_; }
  /// Mutable access for training the pretrained prototypes in place.
  Tensor2D& mutable_matrix() { return rows_; }
  const std::vector<std::size_t>& class_ids() const { return class_ids_; }
  const std::vector<Provenance>& provenance() const { return provenance_; }

  std::optional<std::size_t> index_of(std::size_t class_id) const;
  bool contains(std::size_t class_id) const { return index_of(class_id).has_value(); }

  /// Appends one row per class id. Throws DomainError on dimension mismatch,
  /// non-finite rows or an already registered class id.
  void append(const Tensor2D& rows, std::span<const std::size_t> class_ids, Provenance tag);

 private:
  Tensor2D rows_;
  std::vector<std::size_t> class_ids_;
  std::vector<Provenance> provenance_;
};

/// logits[k] = cos(feature, bank row k) / temperature.
std::vector<double> classify(std::span<const double> feature, const PrototypeBank& bank,
                             double temperature);
/// Batched classify: one row of logits per feature row.
Tensor2D classify_batch(const Tensor2D& features, const PrototypeBank& bank, double temperature);

struct PretrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double temperature = 1.0 / 16.0;
  std::pair<std::size_t, std::size_t> hidden_dims{64, 64};
  std::size_t feature_dim = 32;
};

struct PretrainResult {
  SplitEncoder encoder;
  PrototypeBank bank;
  std::vector<double> epoch_losses;
};

/// Cross-entropy of softmax(cos(f_e(x), theta_p) / temperature) over the base
/// classes' training samples, minimized by SGD with momentum and a cosine-annealed
/// learning rate. Bank rows follow `base_classes` order and start as random unit vectors.
PretrainResult pretrain_base(const LabeledDataset& data, const std::vector<std::size_t>& base_classes,
                             const PretrainConfig& config, RngStream& rng);

/// Pretraining objective on one batch, exposed for gradient checks.
/// `params` = encoder parameters followed by the prototype matrix.
Var pretrain_loss(const SplitEncoder& encoder, const Var& x, std::span<const Var> params,
                  std::span<const std::size_t> targets, double temperature);

}  // namespace scgn
