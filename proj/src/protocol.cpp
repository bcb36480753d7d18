#include "scgn/protocol.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <ostream>

#include <nlohmann/json.hpp>

#include "scgn/errors.hpp"
#include "scgn/optim.hpp"
#include "scgn/sgn.hpp"

namespace scgn {

namespace {

// Substream tags; each stage draws from its own stream so that skipping or
// adding a stage never shifts the randomness of another.
constexpr std::uint64_t kSplitTag = 0x5711;
constexpr std::uint64_t kPretrainTag = 0x9e7a;
constexpr std::uint64_t kModelInitTag = 0x1217;
constexpr std::uint64_t kBaseBankTag = 0xba5e;
constexpr std::uint64_t kSessionTag = 0x5e55;

std::vector<std::size_t> test_indices_of_seen(const LabeledDataset& data, const std::vector<std::size_t>& seen) {
  return data.indices_in(seen, Partition::kTest);
}

Tensor2D class_mean_features(const SplitEncoder& encoder, const LabeledDataset& data,
                             const std::vector<std::size_t>& classes) {
  Tensor2D means(classes.size(), encoder.feature_dim());
  for (std::size_t c = 0; c < classes.size(); ++c) {
    const auto idx = data.indices_of(classes[c], Partition::kTrain);
    if (idx.empty()) throw ProtocolError("class " + std::to_string(classes[c]) + " has no training samples");
    const Tensor2D f = encoder.features(data.features.rows_subset(idx));
    for (std::size_t r = 0; r < f.rows(); ++r)
      for (std::size_t j = 0; j < f.cols(); ++j) means(c, j) += f(r, j);
    for (double& v : means.row(c)) v /= static_cast<double>(f.rows());
  }
  return means;
}

double row_norm(std::span<const double> row) {
  double s = 0.0;
  for (double v : row) s += v * v;
  return std::sqrt(s);
}

}  // namespace

const char* to_string(Variant v) {
  switch (v) {
    case Variant::kBaseline: return "baseline";
    case Variant::kSgn: return "sgn";
    case Variant::kCgn: return "cgn";
    case Variant::kSgnCgn: return "sgn+cgn";
    case Variant::kFinetune: return "finetune";
  }
  return "?";
}

Variant variant_from_string(const std::string& name) {
  for (Variant v : {Variant::kBaseline, Variant::kSgn, Variant::kCgn, Variant::kSgnCgn, Variant::kFinetune}) {
    if (name == to_string(v)) return v;
  }
  throw ConfigError("variant: unknown variant '" + name + "'");
}

bool uses_sgn(Variant v) { return v == Variant::kSgn || v == Variant::kSgnCgn; }
bool uses_cgn(Variant v) { return v == Variant::kCgn || v == Variant::kSgnCgn; }
bool is_meta_variant(Variant v) { return uses_sgn(v) || uses_cgn(v); }

PipelineState pretrain_stage(const LabeledDataset& data, const RunConfig& config, std::uint64_t seed) {
  config.validate();
  data.validate();
  PipelineState state;
  state.seed = seed;
  state.config_digest = config_digest(config);
  RngStream split_rng = RngStream(seed).derive(kSplitTag);
  state.splits = make_session_splits(data.num_classes(), config.num_base, config.way, config.shot, split_rng);

  RngStream rng = RngStream(seed).derive(kPretrainTag);
  if (config.pretrain.epochs == 0) {
    state.encoder = SplitEncoder::create(data.input_dim(), config.pretrain.hidden_dims, config.pretrain.feature_dim, rng);
    state.theta_p = PrototypeBank(config.pretrain.feature_dim);
    return state;
  }
  PretrainResult pre = pretrain_base(data, state.splits.front().class_ids, config.pretrain, rng);
  state.encoder = std::move(pre.encoder);
  state.theta_p = std::move(pre.bank);
  state.pretrain_losses = std::move(pre.epoch_losses);
  return state;
}

PipelineState metatrain_stage(PipelineState state, const LabeledDataset& data, const RunConfig& config,
                              Variant variant) {
  if (!is_meta_variant(variant)) {
    throw ConfigError(std::string("variant: '") + to_string(variant) + "' has no meta-trained modules");
  }
  if (state.splits.empty()) throw ProtocolError("pipeline state has no session splits");
  TrainConfig tc = config.meta;
  tc.way = config.way;
  tc.shot = config.shot;
  tc.seed = state.seed;
  tc.use_sgn = uses_sgn(variant);
  tc.use_cgn = uses_cgn(variant);

  RngStream init_rng = RngStream(state.seed).derive(kModelInitTag);
  MetaModel model = MetaModel::create(state.encoder.feature_dim(), tc, init_rng);
  state.variant = to_string(variant);
  state.meta_log.clear();
  if (tc.iterations == 0) {
    state.model = std::move(model);
    return state;
  }
  if (state.theta_p.empty()) throw ProtocolError("meta-training needs pretrained base prototypes");
  MetaTrainResult result = meta_train(state.encoder, state.theta_p, data, state.splits.front(), tc, std::move(model));
  state.model = std::move(result.model);
  state.meta_log = std::move(result.log);
  if (tc.finetune_encoder) state.encoder = std::move(result.encoder);
  return state;
}

PrototypeBank build_base_bank(const SplitEncoder& encoder, const MetaModel& model, const PrototypeBank& theta_p,
                              const LabeledDataset& data, const SessionSplit& base_split, std::size_t way,
                              std::size_t shot, std::size_t rounds, RngStream& rng) {
  const auto& classes = base_split.class_ids;
  if (classes.empty()) throw ProtocolError("base session has no classes");
  Tensor2D protos;
  if (!model.use_sgn) {
    protos = class_mean_features(encoder, data, classes);
  } else {
    if (way == 0 || shot == 0 || rounds == 0) throw DomainError("build_base_bank: way, shot and rounds must be >= 1");
    std::size_t min_train = static_cast<std::size_t>(-1);
    for (std::size_t c : classes) min_train = std::min(min_train, data.indices_of(c, Partition::kTrain).size());
    if (min_train == 0) throw ProtocolError("base class without training samples");
    const std::size_t k = std::min(shot, min_train);
    const std::size_t n = classes.size();
    const std::size_t w = std::min(way, n);

    protos = Tensor2D(n, encoder.feature_dim());
    std::vector<std::size_t> counts(n, 0);
    std::vector<std::size_t> order(n);
    for (std::size_t r = 0; r < rounds; ++r) {
      for (std::size_t i = 0; i < n; ++i) order[i] = i;
      rng.shuffle(std::span<std::size_t>(order));
      for (std::size_t start = 0; start < n; start += w) {
        // A short last group borrows classes from earlier in the round; only
        // the classes not yet covered this round contribute.
        const std::size_t first = std::min(start, n - w);
        std::vector<std::size_t> group_ids;
        for (std::size_t i = first; i < first + w; ++i) group_ids.push_back(classes[order[i]]);
        const Episode ep = sample_episode_for_classes(data, group_ids, k, 0, rng);
        const Tensor2D refined =
            model.class_features(encoder.features(ep.support_features(data)), ep.support_labels, w);
        for (std::size_t i = start; i < first + w; ++i) {
          const std::size_t row = order[i];
          for (std::size_t j = 0; j < protos.cols(); ++j) protos(row, j) += refined(i - first, j);
          ++counts[row];
        }
      }
    }
    for (std::size_t c = 0; c < n; ++c)
      for (double& v : protos.row(c)) v /= static_cast<double>(counts[c]);
  }

  if (model.use_cgn && !theta_p.empty()) {
    for (std::size_t c = 0; c < classes.size(); ++c) {
      const auto idx = theta_p.index_of(classes[c]);
      if (!idx) throw ProtocolError("class " + std::to_string(classes[c]) + " missing from theta_p");
      const double target = row_norm(theta_p.matrix().row(*idx));
      const double current = row_norm(protos.row(c));
      if (current > 0.0) {
        for (double& v : protos.row(c)) v *= target / current;
      }
    }
  }
  PrototypeBank bank(encoder.feature_dim());
  bank.append(protos, classes, {ProvenanceKind::kBase, 0});
  return bank;
}

namespace {

void check_new_classes(const SessionState& state, const Episode& episode) {
  if (episode.way == 0 || episode.class_ids.size() != episode.way) throw ProtocolError("episode has no classes");
  for (std::size_t i = 0; i < episode.class_ids.size(); ++i) {
    const std::size_t c = episode.class_ids[i];
    if (state.bank.contains(c) || std::find(state.seen.begin(), state.seen.end(), c) != state.seen.end()) {
      throw ProtocolError("class " + std::to_string(c) + " is already registered");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (episode.class_ids[j] == c) throw ProtocolError("class " + std::to_string(c) + " appears twice in the episode");
    }
  }
}

}  // namespace

SessionState register_session(const SessionState& state, const Episode& episode, const LabeledDataset& data) {
  check_new_classes(state, episode);
  const Tensor2D features = state.encoder.features(episode.support_features(data));
  const Tensor2D class_features = state.model.class_features(features, episode.support_labels, episode.way);
  const Tensor2D calibrated =
      state.bank.empty() && state.model.use_cgn
          ? state.model.calibrated(class_features, Tensor2D(0, class_features.cols()))
          : state.model.calibrated(class_features, state.bank.matrix());

  SessionState next = state;
  next.session = state.session + 1;
  next.bank.append(calibrated, episode.class_ids, {ProvenanceKind::kIncremental, next.session});
  next.seen.insert(next.seen.end(), episode.class_ids.begin(), episode.class_ids.end());
  return next;
}

SessionState finetune_session(const SessionState& state, const Episode& episode, const LabeledDataset& data,
                              std::size_t steps, double lr, double temperature) {
  check_new_classes(state, episode);
  const Tensor2D x = episode.support_features(data);
  Tensor2D imprint = matmul(class_mean_matrix(episode.support_labels, episode.way), state.encoder.features(x));
  // Imprinted rows take the average norm of the existing rows so their gradients
  // are on the same footing.
  double mean_norm = 0.0;
  for (std::size_t r = 0; r < state.bank.size(); ++r) mean_norm += row_norm(state.bank.matrix().row(r));
  if (state.bank.size() > 0) mean_norm /= static_cast<double>(state.bank.size());
  for (std::size_t r = 0; r < imprint.rows(); ++r) {
    const double n = row_norm(imprint.row(r));
    if (n > 0.0 && mean_norm > 0.0) {
      for (double& v : imprint.row(r)) v *= mean_norm / n;
    }
  }

  SessionState next = state;
  next.session = state.session + 1;
  next.bank.append(imprint, episode.class_ids, {ProvenanceKind::kIncremental, next.session});
  next.seen.insert(next.seen.end(), episode.class_ids.begin(), episode.class_ids.end());

  std::vector<std::size_t> targets;
  for (std::size_t l : episode.support_labels) targets.push_back(*next.bank.index_of(episode.class_ids[l]));
  std::vector<Tensor2D*> params = next.encoder.parameters();
  params.push_back(&next.bank.mutable_matrix());
  SgdMomentum opt(0.9);
  const Var xv = Var::constant(x);
  for (std::size_t s = 0; s < steps; ++s) {
    const auto vars = bind_parameters(std::vector<const Tensor2D*>(params.begin(), params.end()));
    const Var loss = pretrain_loss(next.encoder, xv, vars, targets, temperature);
    if (!std::isfinite(loss.item())) throw TrainingError("finetune loss is not finite", s);
    backward(loss);
    std::vector<Tensor2D> grads;
    for (const Var& v : vars) grads.push_back(v.grad());
    opt.step(params, grads, lr);
  }
  return next;
}

EvalResult evaluate_features(const PrototypeBank& bank, const Tensor2D& features,
                             std::span<const std::size_t> labels) {
  if (features.rows() == 0 || labels.empty()) throw DomainError("evaluate: empty test set");
  if (features.rows() != labels.size()) throw DomainError("evaluate: one label per feature row required");
  if (bank.empty()) throw ProtocolError("evaluate: empty prototype bank");
  if (features.cols() != bank.feature_dim()) throw DomainError("evaluate: feature width differs from the bank");

  std::vector<std::size_t> truth(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto idx = bank.index_of(labels[i]);
    if (!idx) throw ProtocolError("test sample of unseen class " + std::to_string(labels[i]));
    truth[i] = *idx;
  }
  const Tensor2D& protos = bank.matrix();
  std::vector<double> proto_norm(protos.rows());
  for (std::size_t k = 0; k < protos.rows(); ++k) proto_norm[k] = row_norm(protos.row(k));

  EvalResult res;
  res.total = labels.size();
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const auto f = features.row(i);
    const double fn = row_norm(f);
    std::size_t best = 0;
    double best_logit = 0.0;
    bool tied = false;
    for (std::size_t k = 0; k < protos.rows(); ++k) {
      double logit = 0.0;
      if (fn > 0.0 && proto_norm[k] > 0.0) {
        double dot = 0.0;
        const auto p = protos.row(k);
        for (std::size_t j = 0; j < f.size(); ++j) dot += f[j] * p[j];
        logit = dot / (fn * proto_norm[k]);
      }
      if (k == 0 || logit > best_logit) {
        best = k;
        best_logit = logit;
        tied = false;
      } else if (logit == best_logit) {
        tied = true;
      }
    }
    if (tied) ++res.ties;
    if (best == truth[i]) ++res.correct;
  }
  res.accuracy = static_cast<double>(res.correct) / static_cast<double>(res.total);
  return res;
}

EvalResult evaluate_session(const SessionState& state, const LabeledDataset& data) {
  const auto idx = test_indices_of_seen(data, state.seen);
  if (idx.empty()) throw DomainError("evaluate: empty test set");
  std::vector<std::size_t> labels;
  labels.reserve(idx.size());
  for (std::size_t i : idx) labels.push_back(data.labels[i]);
  return evaluate_features(state.bank, state.encoder.features(data.features.rows_subset(idx)), labels);
}

double performance_dropping(double a0, double an) {
  if (!std::isfinite(a0) || !std::isfinite(an)) throw DomainError("performance_dropping: non-finite accuracy");
  if (a0 < 0.0 || an < 0.0 || a0 > 100.0 || an > 100.0) {
    throw DomainError("performance_dropping: accuracies must lie in [0, 1] or [0, 100]");
  }
  if ((a0 <= 1.0) != (an <= 1.0)) throw DomainError("performance_dropping: accuracies on mixed scales");
  return a0 - an;
}

SessionReport run_sessions(const PipelineState& state, const LabeledDataset& data, const RunConfig& config,
                           Variant variant) {
  if (state.splits.empty()) throw ProtocolError("pipeline state has no session splits");
  SessionState s;
  s.encoder = state.encoder;
  if (is_meta_variant(variant)) {
    if (!state.model) throw ProtocolError(std::string("variant '") + to_string(variant) + "' needs a meta-trained model");
    if (state.variant != to_string(variant)) {
      throw ProtocolError("model was meta-trained for variant '" + state.variant + "', not '" + to_string(variant) + "'");
    }
    s.model = *state.model;
  }
  s.model.use_sgn = uses_sgn(variant);
  s.model.use_cgn = uses_cgn(variant);

  const SessionSplit& base = state.splits.front();
  if (variant == Variant::kFinetune && !state.theta_p.empty()) {
    s.bank = state.theta_p;
  } else {
    RngStream bank_rng = RngStream(state.seed).derive(kBaseBankTag);
    s.bank = build_base_bank(s.encoder, s.model, state.theta_p, data, base, config.way, config.shot,
                             config.base_refine_rounds, bank_rng);
  }
  s.seen = base.class_ids;

  SessionReport report;
  report.variant = to_string(variant);
  report.seed = state.seed;
  report.config_digest = state.config_digest;
  auto record = [&] {
    const EvalResult r = evaluate_session(s, data);
    report.accuracies.push_back(r.accuracy);
    report.ties.push_back(r.ties);
    report.bank_sizes.push_back(s.bank.size());
  };
  record();

  RngStream session_rng = RngStream(state.seed).derive(kSessionTag);
  for (std::size_t i = 1; i < state.splits.size(); ++i) {
    const Episode ep = sample_episode_for_classes(data, state.splits[i].class_ids, config.shot, 0, session_rng);
    if (variant == Variant::kFinetune) {
      s = finetune_session(s, ep, data, config.finetune_steps, config.finetune_lr, config.pretrain.temperature);
    } else {
      const Tensor2D before = s.bank.matrix();
      s = register_session(s, ep, data);
      for (std::size_t k = 0; k < before.size(); ++k) {
        if (std::bit_cast<std::uint64_t>(before[k]) != std::bit_cast<std::uint64_t>(s.bank.matrix()[k])) {
          throw ProtocolError("registration modified an existing bank row");
        }
      }
    }
    if (s.bank.size() != base.class_ids.size() + i * config.way) {
      throw ProtocolError("bank has " + std::to_string(s.bank.size()) + " rows after session " + std::to_string(i));
    }
    record();
  }
  report.pd = performance_dropping(report.accuracies.front(), report.accuracies.back());
  return report;
}

SessionReport run_protocol(const LabeledDataset& data, const RunConfig& config, Variant variant,
                           std::uint64_t seed) {
  PipelineState state = pretrain_stage(data, config, seed);
  if (is_meta_variant(variant)) state = metatrain_stage(std::move(state), data, config, variant);
  return run_sessions(state, data, config, variant);
}

std::vector<AblationRow> summarize(const std::vector<SessionReport>& runs, const std::vector<std::string>& variants) {
  std::vector<AblationRow> rows;
  for (const auto& v : variants) {
    std::vector<double> finals, pds;
    for (const auto& r : runs) {
      if (r.variant != v) continue;
      finals.push_back(r.accuracies.back());
      pds.push_back(r.pd);
    }
    auto stats = [](const std::vector<double>& xs) {
      if (xs.empty()) return std::pair{0.0, 0.0};
      double mean = 0.0;
      for (double x : xs) mean += x;
      mean /= static_cast<double>(xs.size());
      double var = 0.0;
      for (double x : xs) var += (x - mean) * (x - mean);
      const double sd = xs.size() > 1 ? std::sqrt(var / static_cast<double>(xs.size() - 1)) : 0.0;
      return std::pair{mean, sd};
    };
    AblationRow row;
    row.variant = v;
    row.runs = finals.size();
    std::tie(row.final_mean, row.final_std) = stats(finals);
    std::tie(row.pd_mean, row.pd_std) = stats(pds);
    rows.push_back(row);
  }
  return rows;
}

AblationReport run_ablation(const RunConfig& config) {
  config.validate();
  AblationReport report;
  report.config_digest = config_digest(config);
  for (std::uint64_t seed : config.seeds) {
    const LabeledDataset data = resolve_dataset(config, seed);
    const PipelineState pre = pretrain_stage(data, config, seed);
    for (const auto& name : config.variants) {
      const Variant v = variant_from_string(name);
      const PipelineState st = is_meta_variant(v) ? metatrain_stage(pre, data, config, v) : pre;
      report.runs.push_back(run_sessions(st, data, config, v));
    }
  }
  report.summary = summarize(report.runs, config.variants);
  return report;
}

namespace {

nlohmann::ordered_json report_to_json(const SessionReport& r) {
  nlohmann::ordered_json j;
  j["variant"] = r.variant;
  j["seed"] = r.seed;
  j["config_digest"] = r.config_digest;
  j["accuracies"] = r.accuracies;
  j["pd"] = r.pd;
  j["ties"] = r.ties;
  j["bank_sizes"] = r.bank_sizes;
  return j;
}

std::string percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", 100.0 * fraction);
  return buf;
}

}  // namespace

std::string session_report_json(const SessionReport& report) { return report_to_json(report).dump(2) + "\n"; }

void write_session_table(const std::vector<SessionReport>& reports, std::ostream& out) {
  std::size_t sessions = 0;
  for (const auto& r : reports) sessions = std::max(sessions, r.accuracies.size());
  out << "variant,seed";
  for (std::size_t i = 0; i < sessions; ++i) out << ",session_" << i;
  out << ",PD\n";
  for (const auto& r : reports) {
    out << r.variant << "," << r.seed;
    for (std::size_t i = 0; i < sessions; ++i) out << "," << (i < r.accuracies.size() ? percent(r.accuracies[i]) : "");
    out << "," << percent(r.pd) << "\n";
  }
}

void write_plot_data(const SessionReport& report, std::ostream& out) {
  out << "# session accuracy\n";
  for (std::size_t i = 0; i < report.accuracies.size(); ++i) out << i << " " << percent(report.accuracies[i]) << "\n";
}

std::string ablation_report_json(const AblationReport& report) {
  nlohmann::ordered_json j;
  j["config_digest"] = report.config_digest;
  auto& summary = j["summary"] = nlohmann::ordered_json::array();
  for (const auto& row : report.summary) {
    summary.push_back({{"variant", row.variant},
                       {"runs", row.runs},
                       {"final_mean", row.final_mean},
                       {"final_std", row.final_std},
                       {"pd_mean", row.pd_mean},
                       {"pd_std", row.pd_std}});
  }
  auto& runs = j["runs"] = nlohmann::ordered_json::array();
  for (const auto& r : report.runs) runs.push_back(report_to_json(r));
  return j.dump(2) + "\n";
}

void write_ablation_table(const AblationReport& report, std::ostream& out) {
  out << "variant,runs,final_mean,final_std,pd_mean,pd_std\n";
  for (const auto& row : report.summary) {
    out << row.variant << "," << row.runs << "," << percent(row.final_mean) << "," << percent(row.final_std) << ","
        << percent(row.pd_mean) << "," << percent(row.pd_std) << "\n";
  }
}

}  // namespace scgn
