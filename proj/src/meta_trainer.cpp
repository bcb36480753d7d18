#include "scgn/meta_trainer.hpp"

#include <cmath>
#include <optional>
#include <ostream>

#include <nlohmann/json.hpp>

#include "scgn/errors.hpp"
#include "scgn/optim.hpp"

namespace scgn {

void TrainConfig::validate() const {
  if (iterations == 0) throw ConfigError("iterations must be >= 1");
  if (way == 0) throw ConfigError("way must be >= 1");
  if (shot == 0) throw ConfigError("shot must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
  if (!(beta.alpha > 0.0)) throw ConfigError("beta_alpha must be > 0");
  if (!(beta.beta > 0.0)) throw ConfigError("beta_beta must be > 0");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
  if (!(w1 >= 0.0)) throw ConfigError("w1 must be >= 0");
  if (!(w2 >= 0.0)) throw ConfigError("w2 must be >= 0");
  if (relation_hidden == 0) throw ConfigError("relation_hidden must be >= 1");
  if (aggregator_hidden == 0) throw ConfigError("aggregator_hidden must be >= 1");
  if (heads == 0) throw ConfigError("heads must be >= 1");
}

MetaModel MetaModel::create(std::size_t feature_dim, const TrainConfig& config, RngStream& rng) {
  MetaModel m;
  m.sgn = SampleGraphNet::create(feature_dim, config.relation_hidden, config.aggregator_hidden,
                                 config.relation_score_bias, rng);
  m.cgn = ClassGraphNet::create(feature_dim, config.heads, config.key_dim == 0 ? feature_dim : config.key_dim,
                                config.aggregator_hidden, rng);
  m.use_sgn = config.use_sgn;
  m.use_cgn = config.use_cgn;
  return m;
}

std::vector<Tensor2D*> MetaModel::parameters() {
  std::vector<Tensor2D*> out;
  if (use_sgn) out = sgn.parameters();
  if (use_cgn) {
    for (Tensor2D* p : cgn.parameters()) out.push_back(p);
  }
  return out;
}

std::vector<const Tensor2D*> MetaModel::parameters() const {
  std::vector<const Tensor2D*> out;
  if (use_sgn) out = sgn.parameters();
  if (use_cgn) {
    for (const Tensor2D* p : cgn.parameters()) out.push_back(p);
  }
  return out;
}

Var MetaModel::class_features(const Var& features, std::span<const std::size_t> labels,
                              std::size_t num_classes, std::span<const Var> params) const {
  if (!use_sgn) {
    return matmul(Var::constant(class_mean_matrix(labels, num_classes)), features);
  }
  return refine_class_features(features, labels, num_classes, sgn, params.subspan(0, sgn_param_count()));
}

Tensor2D MetaModel::class_features(const Tensor2D& features, std::span<const std::size_t> labels,
                                   std::size_t num_classes) const {
  const auto params = bind_constants(parameters());
  return class_features(Var::constant(features), labels, num_classes, params).value();
}

Var MetaModel::calibrated(const Var& new_classes, const Var& bank, std::span<const Var> params) const {
  if (!use_cgn) return new_classes;
  return calibrate(new_classes, bank, cgn, params.subspan(sgn_param_count()));
}

Tensor2D MetaModel::calibrated(const Tensor2D& new_classes, const Tensor2D& bank) const {
  const auto params = bind_constants(parameters());
  return calibrated(Var::constant(new_classes), Var::constant(bank), params).value();
}

Var sgn_alignment_loss(const Var& refined, const Var& prototypes) {
  if (!refined.value().same_shape(prototypes.value())) {
    throw DomainError("sgn_alignment_loss: refined and prototype rows must match");
  }
  const Var a = normalize_rows(tanh(refined));
  const Var b = normalize_rows(tanh(prototypes));
  return scale(sum_all(mul(a, b)), -1.0);
}

namespace {

std::vector<std::size_t> bank_rows(const PrototypeBank& bank, std::span<const std::size_t> class_ids) {
  std::vector<std::size_t> rows;
  for (std::size_t c : class_ids) {
    const auto idx = bank.index_of(c);
    if (!idx) throw DomainError("class " + std::to_string(c) + " is not in the prototype bank");
    rows.push_back(*idx);
  }
  return rows;
}

}  // namespace

double loss_sgn_alignment(const Tensor2D& refined_c1, const Tensor2D& refined_c2, const PrototypeBank& bank,
                          std::span<const std::size_t> class_ids_c1, std::span<const std::size_t> class_ids_c2) {
  if (refined_c1.rows() != class_ids_c1.size() || refined_c2.rows() != class_ids_c2.size()) {
    throw DomainError("loss_sgn_alignment: one class id per refined row");
  }
  std::vector<std::size_t> ids(class_ids_c1.begin(), class_ids_c1.end());
  ids.insert(ids.end(), class_ids_c2.begin(), class_ids_c2.end());
  const Tensor2D protos = bank.matrix().rows_subset(bank_rows(bank, ids));
  return sgn_alignment_loss(Var::constant(vstack(refined_c1, refined_c2)), Var::constant(protos)).item();
}

Var cgn_classification_loss(const Var& virtual_features, const Var& bank, const Var& calibrated,
                            std::span<const std::size_t> targets, double temperature) {
  if (!(temperature > 0.0)) throw DomainError("cgn_classification_loss: temperature must be positive");
  const std::size_t m = bank.rows();
  std::vector<std::size_t> shifted;
  shifted.reserve(targets.size());
  for (std::size_t t : targets) {
    if (t >= calibrated.rows()) throw DomainError("cgn_classification_loss: target out of range");
    shifted.push_back(m + t);
  }
  const Var all = m == 0 ? calibrated : concat_rows(bank, calibrated);
  return cross_entropy(scale(row_cosine(virtual_features, all), 1.0 / temperature), shifted);
}

double loss_cgn_classification(const Tensor2D& virtual_features, const Tensor2D& bank,
                               const Tensor2D& calibrated, std::span<const std::size_t> targets,
                               double temperature) {
  return cgn_classification_loss(Var::constant(virtual_features), Var::constant(bank),
                                 Var::constant(calibrated), targets, temperature)
      .item();
}

MetaBatch make_meta_batch(const Episode& c1, const Episode& c2, const VirtualEpisode& virtual_task,
                          const LabeledDataset& data, const SplitEncoder& encoder, const PrototypeBank& bank) {
  MetaBatch b;
  b.way = c1.way;
  b.c1_inputs = c1.support_features(data);
  b.c2_inputs = c2.support_features(data);
  b.c1_features = encoder.features(b.c1_inputs);
  b.c2_features = encoder.features(b.c2_inputs);
  b.c1_labels = c1.support_labels;
  b.c2_labels = c2.support_labels;
  std::vector<std::size_t> ids = c1.class_ids;
  ids.insert(ids.end(), c2.class_ids.begin(), c2.class_ids.end());
  b.prototype_rows = bank_rows(bank, ids);
  b.virtual_support = virtual_task.features;
  b.virtual_labels = virtual_task.labels;
  b.virtual_support_a = b.c1_inputs;
  b.virtual_support_b = b.c2_inputs;
  b.lambda = virtual_task.lambda;
  if (virtual_task.query_features.rows() > 0) {
    b.virtual_eval = virtual_task.query_features;
    b.virtual_eval_labels = virtual_task.query_labels;
    // Rebuild the paired raw query inputs in the same order the synthesizer used.
    std::vector<std::size_t> qa, qb;
    for (std::size_t c = 0; c < c1.way; ++c) {
      std::vector<std::size_t> a, bb;
      for (std::size_t i = 0; i < c1.query.size(); ++i)
        if (c1.query_labels[i] == c) a.push_back(c1.query[i]);
      for (std::size_t i = 0; i < c2.query.size(); ++i)
        if (c2.query_labels[i] == c) bb.push_back(c2.query[i]);
      for (std::size_t k = 0; k < std::min(a.size(), bb.size()); ++k) {
        qa.push_back(a[k]);
        qb.push_back(bb[k]);
      }
    }
    b.virtual_eval_a = data.features.rows_subset(qa);
    b.virtual_eval_b = data.features.rows_subset(qb);
  } else {
    b.virtual_eval = virtual_task.features;
    b.virtual_eval_labels = virtual_task.labels;
    b.virtual_eval_a = b.c1_inputs;
    b.virtual_eval_b = b.c2_inputs;
  }
  return b;
}

namespace {

struct EpisodeFeatures {
  Var c1, c2, virtual_support, virtual_eval;
};

MetaLoss objective_from(const EpisodeFeatures& f, const MetaBatch& batch, const Var& bank,
                        const MetaModel& model, std::span<const Var> params, double w1, double w2,
                        double temperature) {
  const std::size_t n = batch.way;
  const Var r1 = model.class_features(f.c1, batch.c1_labels, n, params);
  const Var r2 = model.class_features(f.c2, batch.c2_labels, n, params);
  const Var l1 = sgn_alignment_loss(concat_rows(r1, r2), gather_rows(bank, batch.prototype_rows));

  const Var r3 = model.class_features(f.virtual_support, batch.virtual_labels, n, params);
  const Var calibrated = model.calibrated(r3, bank, params);
  const Var l2 = cgn_classification_loss(f.virtual_eval, bank, calibrated, batch.virtual_eval_labels, temperature);
  return {l1, l2, add(scale(l1, w1), scale(l2, w2))};
}

}  // namespace

MetaLoss meta_objective(const MetaBatch& batch, const Var& bank, const MetaModel& model,
                        std::span<const Var> params, double w1, double w2, double temperature) {
  const EpisodeFeatures f{Var::constant(batch.c1_features), Var::constant(batch.c2_features),
                          Var::constant(batch.virtual_support), Var::constant(batch.virtual_eval)};
  return objective_from(f, batch, bank, model, params, w1, w2, temperature);
}

MetaLoss meta_objective(const MetaBatch& batch, const Var& bank, const MetaModel& model,
                        std::span<const Var> params, const SplitEncoder& encoder,
                        std::span<const Var> encoder_params, double w1, double w2, double temperature) {
  auto embed = [&](const Tensor2D& x) {
    return encoder.forward_g(encoder.forward_h(Var::constant(x), encoder_params), encoder_params);
  };
  auto mixed = [&](const Tensor2D& a, const Tensor2D& b) {
    const Var ha = encoder.forward_h(Var::constant(a), encoder_params);
    const Var hb = encoder.forward_h(Var::constant(b), encoder_params);
    return encoder.forward_g(add(scale(ha, batch.lambda), scale(hb, 1.0 - batch.lambda)), encoder_params);
  };
  const EpisodeFeatures f{embed(batch.c1_inputs), embed(batch.c2_inputs),
                          mixed(batch.virtual_support_a, batch.virtual_support_b),
                          mixed(batch.virtual_eval_a, batch.virtual_eval_b)};
  return objective_from(f, batch, bank, model, params, w1, w2, temperature);
}

void write_train_log(const TrainLog& log, std::ostream& out) {
  for (const auto& e : log) {
    nlohmann::ordered_json j;
    j["iteration"] = e.iteration;
    j["l1"] = e.l1;
    j["l2"] = e.l2;
    j["total"] = e.total;
    j["lr"] = e.lr;
    j["lambda"] = e.lambda;
    out << j.dump() << "\n";
  }
}

MetaTrainResult meta_train(const SplitEncoder& encoder, const PrototypeBank& bank, const LabeledDataset& data,
                           const SessionSplit& base_split, const TrainConfig& config) {
  RngStream init_rng = RngStream(config.seed).derive(0x1217);
  return meta_train(encoder, bank, data, base_split, config,
                    MetaModel::create(encoder.feature_dim(), config, init_rng));
}

MetaTrainResult meta_train(const SplitEncoder& encoder, const PrototypeBank& bank, const LabeledDataset& data,
                           const SessionSplit& base_split, const TrainConfig& config, MetaModel initial) {
  config.validate();
  if (bank.feature_dim() != encoder.feature_dim()) {
    throw DomainError("meta_train: bank feature_dim differs from encoder feature_dim");
  }
  MetaTrainResult result;
  result.model = std::move(initial);
  result.model.use_sgn = config.use_sgn;
  result.model.use_cgn = config.use_cgn;
  result.encoder = encoder;

  RngStream rng = RngStream(config.seed).derive(0x3e7a);
  SgdMomentum opt(config.momentum);
  SgdMomentum encoder_opt(config.momentum);
  const Var bank_var = Var::constant(bank.matrix());

  for (std::size_t it = 0; it < config.iterations; ++it) {
    const double lr = cosine_annealing_lr(it, config.iterations, config.lr);
    auto [c1, c2] = sample_disjoint_episode_pair(base_split, data, config.way, config.shot, rng, config.query);
    const VirtualEpisode virtual_task = synthesize_virtual_task(c1, c2, data, result.encoder, config.beta, rng);
    const MetaBatch batch = make_meta_batch(c1, c2, virtual_task, data, result.encoder, bank);

    std::vector<Tensor2D*> params = result.model.parameters();
    const std::vector<Var> vars = bind_parameters(std::vector<const Tensor2D*>(params.begin(), params.end()));
    std::vector<Tensor2D*> enc_params;
    std::vector<Var> enc_vars;
    MetaLoss loss;
    try {
      if (config.finetune_encoder) {
        enc_params = result.encoder.parameters();
        enc_vars = bind_parameters(std::vector<const Tensor2D*>(enc_params.begin(), enc_params.end()));
        loss = meta_objective(batch, bank_var, result.model, vars, result.encoder, enc_vars, config.w1,
                              config.w2, config.temperature);
      } else {
        loss = meta_objective(batch, bank_var, result.model, vars, config.w1, config.w2, config.temperature);
      }
    } catch (const DomainError& e) {
      // Shapes are fixed by now, so this means the parameters blew up (e.g. a zero-norm row).
      throw TrainingError(std::string("meta-training diverged: ") + e.what(), it);
    }

    const TrainLogEntry entry{it, loss.l1.item(), loss.l2.item(), loss.total.item(), batch.lambda, lr};
    if (!std::isfinite(entry.l1) || !std::isfinite(entry.l2) || !std::isfinite(entry.total)) {
      throw TrainingError("meta-training loss is not finite", it);
    }
    result.log.push_back(entry);

    backward(loss.total);
    std::vector<Tensor2D> grads;
    for (const Var& v : vars) grads.push_back(v.grad());
    opt.step(params, grads, lr);
    if (config.finetune_encoder) {
      std::vector<Tensor2D> enc_grads;
      for (const Var& v : enc_vars) enc_grads.push_back(v.grad());
      encoder_opt.step(enc_params, enc_grads, lr);
    }
    for (const Tensor2D* p : params) {
      if (!p->all_finite()) throw TrainingError("meta-training parameters are not finite", it);
    }
  }
  return result;
}

}  // namespace scgn
