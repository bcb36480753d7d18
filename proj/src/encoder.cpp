#include "scgn/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "scgn/errors.hpp"
#include "scgn/numerics.hpp"
#include "scgn/optim.hpp"

namespace scgn {

const char* to_string(Activation a) {
  switch (a) {
    case Activation::kLinear: return "linear";
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
  }
  return "?";
}

Activation activation_from_string(const std::string& name) {
  if (name == "linear") return Activation::kLinear;
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  throw DomainError("unknown activation '" + name + "'");
}

Var activate(const Var& x, Activation a) {
  switch (a) {
    case Activation::kLinear: return x;
    case Activation::kRelu: return relu(x);
    case Activation::kTanh: return tanh(x);
  }
  return x;
}

namespace {

Tensor2D dense_apply(const DenseLayer& layer, const Tensor2D& x) {
  if (x.cols() != layer.in_dim()) {
    throw DomainError("dense layer expects " + std::to_string(layer.in_dim()) + " inputs, got " +
                      std::to_string(x.cols()));
  }
  Tensor2D y = matmul(x, layer.weight);
  for (std::size_t r = 0; r < y.rows(); ++r) {
    for (std::size_t c = 0; c < y.cols(); ++c) {
      double v = y(r, c) + layer.bias[c];
      switch (layer.activation) {
        case Activation::kLinear: break;
        case Activation::kRelu: v = v > 0.0 ? v : 0.0; break;
        case Activation::kTanh: v = std::tanh(v); break;
      }
      y(r, c) = v;
    }
  }
  return y;
}

Tensor2D apply_stack(const std::vector<DenseLayer>& layers, Tensor2D x) {
  for (const auto& layer : layers) x = dense_apply(layer, x);
  return x;
}

Var forward_stack(const std::vector<DenseLayer>& layers, Var x, std::span<const Var> params) {
  if (params.size() != 2 * layers.size()) throw DomainError("encoder: wrong number of parameters");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    x = layers[i].forward(x, params[2 * i], params[2 * i + 1]);
  }
  return x;
}

}  // namespace

DenseLayer DenseLayer::he_normal(std::size_t in, std::size_t out, Activation act, RngStream& rng) {
  return {random_normal(in, out, rng, std::sqrt(2.0 / static_cast<double>(in))), Tensor2D(1, out), act};
}

Var DenseLayer::forward(const Var& x, const Var& w, const Var& b) const {
  return activate(add_row(matmul(x, w), b), activation);
}

SplitEncoder::SplitEncoder(std::vector<DenseLayer> h, std::vector<DenseLayer> g)
    : h_(std::move(h)), g_(std::move(g)) {
  if (h_.empty() || g_.empty()) throw DomainError("SplitEncoder: h and g need at least one layer each");
  std::size_t dim = h_.front().in_dim();
  for (const auto* stack : {&h_, &g_}) {
    for (const auto& layer : *stack) {
      if (layer.in_dim() != dim || layer.bias.rows() != 1 || layer.bias.cols() != layer.out_dim()) {
        throw DomainError("SplitEncoder: layer shapes do not chain");
      }
      dim = layer.out_dim();
    }
  }
}

SplitEncoder SplitEncoder::create(std::size_t input_dim, std::pair<std::size_t, std::size_t> hidden_dims,
                                  std::size_t feature_dim, RngStream& rng) {
  std::vector<DenseLayer> h;
  h.push_back(DenseLayer::he_normal(input_dim, hidden_dims.first, Activation::kRelu, rng));
  h.push_back(DenseLayer::he_normal(hidden_dims.first, hidden_dims.second, Activation::kRelu, rng));
  std::vector<DenseLayer> g;
  g.push_back(DenseLayer::he_normal(hidden_dims.second, feature_dim, Activation::kRelu, rng));
  return SplitEncoder(std::move(h), std::move(g));
}

std::size_t SplitEncoder::input_dim() const { return h_.front().in_dim(); }
std::size_t SplitEncoder::hidden_dim() const { return h_.back().out_dim(); }
std::size_t SplitEncoder::feature_dim() const { return g_.back().out_dim(); }

std::pair<Tensor2D, Tensor2D> SplitEncoder::embed(const Tensor2D& x) const {
  Tensor2D hid = hidden(x);
  Tensor2D feat = features_from_hidden(hid);
  return {std::move(hid), std::move(feat)};
}

Tensor2D SplitEncoder::hidden(const Tensor2D& x) const { return apply_stack(h_, x); }

Tensor2D SplitEncoder::features_from_hidden(const Tensor2D& hidden) const {
  return apply_stack(g_, hidden);
}

Var SplitEncoder::forward_h(const Var& x, std::span<const Var> params) const {
  if (params.size() < 2 * h_.size()) throw DomainError("forward_h: too few encoder parameters");
  return forward_stack(h_, x, params.subspan(0, 2 * h_.size()));
}

Var SplitEncoder::forward_g(const Var& hidden, std::span<const Var> params) const {
  if (params.size() < 2 * (h_.size() + g_.size())) throw DomainError("forward_g: too few encoder parameters");
  return forward_stack(g_, hidden, params.subspan(2 * h_.size(), 2 * g_.size()));
}

std::vector<Tensor2D*> SplitEncoder::parameters() {
  std::vector<Tensor2D*> out;
  for (auto* stack : {&h_, &g_}) {
    for (auto& layer : *stack) {
      out.push_back(&layer.weight);
      out.push_back(&layer.bias);
    }
  }
  return out;
}

std::vector<const Tensor2D*> SplitEncoder::parameters() const {
  std::vector<const Tensor2D*> out;
  for (const auto* stack : {&h_, &g_}) {
    for (const auto& layer : *stack) {
      out.push_back(&layer.weight);
      out.push_back(&layer.bias);
    }
  }
  return out;
}

std::string Provenance::to_string() const {
  switch (kind) {
    case ProvenanceKind::kBase: return "base";
    case ProvenanceKind::kIncremental: return "incremental-session-" + std::to_string(session);
    case ProvenanceKind::kVirtual: return "virtual";
  }
  return "?";
}

std::optional<std::size_t> PrototypeBank::index_of(std::size_t class_id) const {
  for (std::size_t i = 0; i < class_ids_.size(); ++i) {
    if (class_ids_[i] == class_id) return i;
  }
  return std::nullopt;
}

void PrototypeBank::append(const Tensor2D& rows, std::span<const std::size_t> class_ids, Provenance tag) {
  if (rows.rows() != class_ids.size()) throw DomainError("PrototypeBank::append: one class id per row");
  if (rows.rows() == 0) return;
  if (rows_.cols() != 0 && rows.cols() != rows_.cols()) {
    throw DomainError("PrototypeBank::append: feature_dim mismatch");
  }
  if (!rows.all_finite()) throw DomainError("PrototypeBank::append: non-finite prototype");
  for (std::size_t i = 0; i < class_ids.size(); ++i) {
    if (contains(class_ids[i]) ||
        std::find(class_ids.begin(), class_ids.begin() + static_cast<std::ptrdiff_t>(i), class_ids[i]) !=
            class_ids.begin() + static_cast<std::ptrdiff_t>(i)) {
      throw DomainError("PrototypeBank::append: class " + std::to_string(class_ids[i]) +
                        " already registered");
    }
  }
  rows_ = vstack(rows_, rows);
  class_ids_.insert(class_ids_.end(), class_ids.begin(), class_ids.end());
  provenance_.insert(provenance_.end(), class_ids.size(), tag);
}

std::vector<double> classify(std::span<const double> feature, const PrototypeBank& bank,
                             double temperature) {
  if (bank.empty()) throw DomainError("classify: empty prototype bank");
  if (feature.size() != bank.feature_dim()) throw DomainError("classify: feature_dim mismatch");
  if (!(temperature > 0.0)) throw DomainError("classify: temperature must be positive");
  std::vector<double> logits(bank.size());
  for (std::size_t k = 0; k < bank.size(); ++k) {
    logits[k] = cosine_similarity(feature, bank.matrix().row(k)) / temperature;
  }
  return logits;
}

Tensor2D classify_batch(const Tensor2D& features, const PrototypeBank& bank, double temperature) {
  Tensor2D out(features.rows(), bank.size());
  for (std::size_t r = 0; r < features.rows(); ++r) {
    const auto logits = classify(features.row(r), bank, temperature);
    std::copy(logits.begin(), logits.end(), out.row(r).begin());
  }
  return out;
}

Var pretrain_loss(const SplitEncoder& encoder, const Var& x, std::span<const Var> params,
                  std::span<const std::size_t> targets, double temperature) {
  const std::size_t n_enc = encoder.parameters().size();
  const Var feat = encoder.forward_g(encoder.forward_h(x, params), params);
  const Var logits = scale(row_cosine(feat, params[n_enc]), 1.0 / temperature);
  return cross_entropy(logits, targets);
}

PretrainResult pretrain_base(const LabeledDataset& data, const std::vector<std::size_t>& base_classes,
                             const PretrainConfig& config, RngStream& rng) {
  if (base_classes.size() < 2) throw ConfigError("num_base: pretraining needs at least 2 base classes");
  if (config.epochs == 0 || config.batch_size == 0) throw ConfigError("epochs and batch_size must be >= 1");
  if (!(config.lr > 0.0)) throw ConfigError("lr must be > 0");
  if (!(config.temperature > 0.0)) throw ConfigError("temperature must be > 0");

  std::vector<std::size_t> target_of(data.num_classes(), static_cast<std::size_t>(-1));
  for (std::size_t i = 0; i < base_classes.size(); ++i) target_of[base_classes[i]] = i;
  std::vector<std::size_t> samples = data.indices_in(base_classes, Partition::kTrain);
  if (samples.empty()) throw ConfigError("base session has no training samples");

  PretrainResult result;
  result.encoder = SplitEncoder::create(data.input_dim(), config.hidden_dims, config.feature_dim, rng);
  Tensor2D protos = random_normal(base_classes.size(), config.feature_dim, rng);
  for (std::size_t r = 0; r < protos.rows(); ++r) {
    double n = 0.0;
    for (double v : protos.row(r)) n += v * v;
    n = std::sqrt(n);
    for (double& v : protos.row(r)) v /= n;
  }
  result.bank = PrototypeBank(config.feature_dim);
  result.bank.append(protos, base_classes, {ProvenanceKind::kBase, 0});

  std::vector<Tensor2D*> params = result.encoder.parameters();
  params.push_back(&result.bank.mutable_matrix());
  SgdMomentum opt(config.momentum, config.weight_decay);

  const std::size_t steps_per_epoch = (samples.size() + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = config.epochs * steps_per_epoch;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(samples));
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < samples.size(); start += config.batch_size, ++step) {
      const std::size_t end = std::min(start + config.batch_size, samples.size());
      const std::span<const std::size_t> batch(samples.data() + start, end - start);
      std::vector<std::size_t> targets;
      targets.reserve(batch.size());
      for (std::size_t i : batch) targets.push_back(target_of[data.labels[i]]);

      std::vector<const Tensor2D*> cparams(params.begin(), params.end());
      const std::vector<Var> vars = bind_parameters(cparams);
      const Var x = Var::constant(data.features.rows_subset(batch));
      const Var loss = pretrain_loss(result.encoder, x, vars, targets, config.temperature);
      if (!std::isfinite(loss.item())) throw TrainingError("pretraining loss is not finite", step);
      backward(loss);

      std::vector<Tensor2D> grads;
      grads.reserve(vars.size());
      for (const Var& v : vars) grads.push_back(v.grad());
      opt.step(params, grads, cosine_annealing_lr(step, total_steps, config.lr));
      epoch_loss += loss.item() * static_cast<double>(batch.size());
    }
    result.epoch_losses.push_back(epoch_loss / static_cast<double>(samples.size()));
  }
  return result;
}

}  // namespace scgn
