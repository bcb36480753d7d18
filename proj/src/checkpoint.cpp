#include "scgn/checkpoint.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "scgn/errors.hpp"

namespace scgn {

namespace {

constexpr const char* kMagic = "scgn-checkpoint";

std::string join_ids(const std::vector<std::size_t>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) out += (i ? " " : "") + std::to_string(ids[i]);
  return out;
}

std::vector<std::size_t> parse_ids(const std::string& text, const std::string& what) {
  std::vector<std::size_t> out;
  std::istringstream in(text);
  std::string tok;
  while (in >> tok) {
    char* end = nullptr;
    errno = 0;
    const unsigned long long v = std::strtoull(tok.c_str(), &end, 10);
    if (errno != 0 || *end != '\0' || tok.front() == '-') throw ParseError(what + ": bad integer '" + tok + "'", 0);
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

std::size_t parse_count(const std::string& text, const std::string& what) {
  const auto ids = parse_ids(text, what);
  if (ids.size() != 1) throw ParseError(what + ": expected one integer", 0);
  return ids.front();
}

void put_layers(Checkpoint& c, const std::string& prefix, const std::vector<DenseLayer>& layers) {
  c.set(prefix + ".layers", std::to_string(layers.size()));
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string p = prefix + "." + std::to_string(i);
    c.set(p + ".activation", to_string(layers[i].activation));
    c.put(p + ".weight", layers[i].weight);
    c.put(p + ".bias", layers[i].bias);
  }
}

std::vector<DenseLayer> get_layers(const Checkpoint& c, const std::string& prefix) {
  std::vector<DenseLayer> layers(parse_count(c.field(prefix + ".layers"), prefix + ".layers"));
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string p = prefix + "." + std::to_string(i);
    try {
      layers[i].activation = activation_from_string(c.field(p + ".activation"));
    } catch (const DomainError& e) {
      throw ParseError(p + ".activation: " + e.what(), 0);
    }
    layers[i].weight = c.tensor(p + ".weight");
    layers[i].bias = c.tensor(p + ".bias");
  }
  return layers;
}

void put_aggregator(Checkpoint& c, const std::string& p, const Aggregator& a) {
  c.put(p + ".w1", a.w1);
  c.put(p + ".b1", a.b1);
  c.put(p + ".w2", a.w2);
  c.put(p + ".b2", a.b2);
}

Aggregator get_aggregator(const Checkpoint& c, const std::string& p) {
  return {c.tensor(p + ".w1"), c.tensor(p + ".b1"), c.tensor(p + ".w2"), c.tensor(p + ".b2")};
}

}  // namespace

void Checkpoint::set(const std::string& name, const std::string& value) {
  for (auto& [k, v] : fields) {
    if (k == name) {
      v = value;
      return;
    }
  }
  fields.emplace_back(name, value);
}

void Checkpoint::put(const std::string& name, const Tensor2D& value) {
  for (auto& [k, v] : tensors) {
    if (k == name) {
      v = value;
      return;
    }
  }
  tensors.emplace_back(name, value);
}

bool Checkpoint::has(const std::string& name) const {
  for (const auto& [k, v] : fields)
    if (k == name) return true;
  for (const auto& [k, v] : tensors)
    if (k == name) return true;
  return false;
}

const std::string& Checkpoint::field(const std::string& name) const {
  for (const auto& [k, v] : fields)
    if (k == name) return v;
  throw ParseError("checkpoint has no field '" + name + "'", 0);
}

const Tensor2D& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [k, v] : tensors)
    if (k == name) return v;
  throw ParseError("checkpoint has no tensor '" + name + "'", 0);
}

std::string checkpoint_to_text(const Checkpoint& ckpt) {
  std::string out = std::string(kMagic) + " " + std::to_string(kCheckpointVersion) + "\n";
  for (const auto& [k, v] : ckpt.fields) {
    if (k.find_first_of(" \n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw DomainError("checkpoint field '" + k + "' cannot be stored on one line");
    }
    out += "field " + k + " " + v + "\n";
  }
  char buf[40];
  for (const auto& [k, t] : ckpt.tensors) {
    out += "tensor " + k + " " + std::to_string(t.rows()) + " " + std::to_string(t.cols()) + "\n";
    for (std::size_t r = 0; r < t.rows(); ++r) {
      for (std::size_t c = 0; c < t.cols(); ++c) {
        std::snprintf(buf, sizeof buf, "%a", t(r, c));
        if (c) out += ' ';
        out += buf;
      }
      out += '\n';
    }
  }
  out += "end\n";
  return out;
}

Checkpoint checkpoint_from_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++line_no;
    return true;
  };
  if (!next_line()) throw ParseError("empty checkpoint", 1);
  {
    std::istringstream head(line);
    std::string magic;
    int version = -1;
    head >> magic >> version;
    if (magic != kMagic) throw ParseError("not a checkpoint file", line_no);
    if (version != kCheckpointVersion) {
      throw ParseError("unsupported checkpoint version " + std::to_string(version), line_no);
    }
  }
  Checkpoint ckpt;
  bool ended = false;
  while (next_line()) {
    if (line == "end") {
      ended = true;
      break;
    }
    if (line.rfind("field ", 0) == 0) {
      const std::string rest = line.substr(6);
      const auto sp = rest.find(' ');
      if (sp == std::string::npos || sp == 0) throw ParseError("malformed field line", line_no);
      ckpt.fields.emplace_back(rest.substr(0, sp), rest.substr(sp + 1));
    } else if (line.rfind("tensor ", 0) == 0) {
      std::istringstream head(line.substr(7));
      std::string name;
      long long rows = -1, cols = -1;
      if (!(head >> name >> rows >> cols) || rows < 0 || cols < 0) throw ParseError("malformed tensor header", line_no);
      Tensor2D t(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols));
      for (std::size_t r = 0; r < t.rows(); ++r) {
        if (!next_line()) throw ParseError("truncated tensor '" + name + "'", line_no);
        std::istringstream row(line);
        std::string tok;
        std::size_t c = 0;
        while (row >> tok) {
          if (c >= t.cols()) throw ParseError("too many values in tensor '" + name + "'", line_no);
          char* end = nullptr;
          t(r, c++) = std::strtod(tok.c_str(), &end);
          if (*end != '\0') throw ParseError("bad value '" + tok + "' in tensor '" + name + "'", line_no);
        }
        if (c != t.cols()) throw ParseError("too few values in tensor '" + name + "'", line_no);
      }
      ckpt.tensors.emplace_back(name, std::move(t));
    } else if (!line.empty()) {
      throw ParseError("unexpected line", line_no);
    }
  }
  if (!ended) throw ParseError("checkpoint is truncated (no end marker)", line_no);
  return ckpt;
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string text = checkpoint_to_text(ckpt);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    out << text;
    out.flush();
    if (!out) {
      out.close();
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw IoError("failed writing '" + tmp.string() + "'");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move checkpoint into '" + path.string() + "'");
  }
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return checkpoint_from_text(buf.str());
}

Checkpoint pipeline_to_checkpoint(const PipelineState& state) {
  Checkpoint c;
  c.set("stage", state.model ? "meta" : "pretrain");
  c.set("seed", std::to_string(state.seed));
  c.set("config_digest", state.config_digest.empty() ? "-" : state.config_digest);
  c.set("input_dim", std::to_string(state.encoder.input_dim()));
  c.set("feature_dim", std::to_string(state.encoder.feature_dim()));
  c.set("splits", std::to_string(state.splits.size()));
  for (std::size_t i = 0; i < state.splits.size(); ++i) {
    c.set("split." + std::to_string(i) + ".shot", std::to_string(state.splits[i].shot));
    c.set("split." + std::to_string(i) + ".classes", join_ids(state.splits[i].class_ids));
  }
  put_layers(c, "encoder.h", state.encoder.h_layers());
  put_layers(c, "encoder.g", state.encoder.g_layers());
  c.set("theta_p.classes", state.theta_p.empty() ? "-" : join_ids(state.theta_p.class_ids()));
  if (!state.theta_p.empty()) c.put("theta_p", state.theta_p.matrix());
  if (!state.pretrain_losses.empty()) c.put("pretrain.losses", Tensor2D::row_vector(state.pretrain_losses));

  if (state.model) {
    const MetaModel& m = *state.model;
    c.set("variant", state.variant);
    c.set("model.use_sgn", m.use_sgn ? "1" : "0");
    c.set("model.use_cgn", m.use_cgn ? "1" : "0");
    const auto& r = m.sgn.relation;
    c.put("sgn.relation.w1", r.w1);
    c.put("sgn.relation.gamma1", r.gamma1);
    c.put("sgn.relation.beta1", r.beta1);
    c.put("sgn.relation.w2", r.w2);
    c.put("sgn.relation.gamma2", r.gamma2);
    c.put("sgn.relation.beta2", r.beta2);
    put_aggregator(c, "sgn.aggregator", m.sgn.aggregator);
    c.set("cgn.heads", std::to_string(m.cgn.attention.heads()));
    for (std::size_t h = 0; h < m.cgn.attention.heads(); ++h) {
      c.put("cgn.w_k." + std::to_string(h), m.cgn.attention.w_k[h]);
      c.put("cgn.w_q." + std::to_string(h), m.cgn.attention.w_q[h]);
    }
    if (!m.cgn.attention.w_out.empty()) c.put("cgn.w_out", m.cgn.attention.w_out);
    put_aggregator(c, "cgn.aggregator", m.cgn.aggregator);
  }
  return c;
}

PipelineState pipeline_from_checkpoint(const Checkpoint& c) {
  PipelineState s;
  const std::string& stage = c.field("stage");
  if (stage != "pretrain" && stage != "meta") throw ParseError("unknown checkpoint stage '" + stage + "'", 0);
  s.seed = parse_count(c.field("seed"), "seed");
  s.config_digest = c.field("config_digest") == "-" ? "" : c.field("config_digest");
  const std::size_t n_splits = parse_count(c.field("splits"), "splits");
  for (std::size_t i = 0; i < n_splits; ++i) {
    SessionSplit sp;
    sp.session_index = i;
    sp.shot = parse_count(c.field("split." + std::to_string(i) + ".shot"), "split shot");
    sp.class_ids = parse_ids(c.field("split." + std::to_string(i) + ".classes"), "split classes");
    s.splits.push_back(std::move(sp));
  }
  try {
    s.encoder = SplitEncoder(get_layers(c, "encoder.h"), get_layers(c, "encoder.g"));
  } catch (const DomainError& e) {
    throw ParseError(std::string("encoder: ") + e.what(), 0);
  }
  s.theta_p = PrototypeBank(s.encoder.feature_dim());
  if (c.field("theta_p.classes") != "-") {
    const auto ids = parse_ids(c.field("theta_p.classes"), "theta_p.classes");
    try {
      s.theta_p.append(c.tensor("theta_p"), ids, {ProvenanceKind::kBase, 0});
    } catch (const DomainError& e) {
      throw ParseError(std::string("theta_p: ") + e.what(), 0);
    }
  }
  if (c.has("pretrain.losses")) s.pretrain_losses = c.tensor("pretrain.losses").data();

  if (stage == "meta") {
    MetaModel m;
    s.variant = c.field("variant");
    m.use_sgn = c.field("model.use_sgn") == "1";
    m.use_cgn = c.field("model.use_cgn") == "1";
    auto& r = m.sgn.relation;
    r.w1 = c.tensor("sgn.relation.w1");
    r.gamma1 = c.tensor("sgn.relation.gamma1");
    r.beta1 = c.tensor("sgn.relation.beta1");
    r.w2 = c.tensor("sgn.relation.w2");
    r.gamma2 = c.tensor("sgn.relation.gamma2");
    r.beta2 = c.tensor("sgn.relation.beta2");
    m.sgn.aggregator = get_aggregator(c, "sgn.aggregator");
    const std::size_t heads = parse_count(c.field("cgn.heads"), "cgn.heads");
    for (std::size_t h = 0; h < heads; ++h) {
      m.cgn.attention.w_k.push_back(c.tensor("cgn.w_k." + std::to_string(h)));
      m.cgn.attention.w_q.push_back(c.tensor("cgn.w_q." + std::to_string(h)));
    }
    if (heads > 1) m.cgn.attention.w_out = c.tensor("cgn.w_out");
    m.cgn.aggregator = get_aggregator(c, "cgn.aggregator");

    const std::size_t d = s.encoder.feature_dim();
    if (r.dim() != d || m.sgn.aggregator.dim() != d || m.cgn.attention.dim() != d || m.cgn.aggregator.dim() != d) {
      throw ParseError("graph network widths differ from the encoder feature width", 0);
    }
    s.model = std::move(m);
  }
  return s;
}

void check_compatible(const PipelineState& state, const LabeledDataset& data, const RunConfig& config) {
  if (state.encoder.input_dim() != data.input_dim()) {
    throw ConfigError("checkpoint input_dim " + std::to_string(state.encoder.input_dim()) +
                      " differs from the dataset's " + std::to_string(data.input_dim()));
  }
  if (state.encoder.feature_dim() != config.pretrain.feature_dim) {
    throw ConfigError("feature_dim: checkpoint has " + std::to_string(state.encoder.feature_dim()) +
                      ", config has " + std::to_string(config.pretrain.feature_dim));
  }
  if (state.splits.empty() || state.splits.front().class_ids.size() != config.num_base) {
    throw ConfigError("num_base: checkpoint split does not match the config");
  }
  std::size_t total = 0;
  for (const auto& sp : state.splits) {
    if (sp.session_index > 0 && sp.class_ids.size() != config.way) {
      throw ConfigError("way: checkpoint sessions do not have " + std::to_string(config.way) + " classes");
    }
    for (std::size_t c : sp.class_ids) {
      if (c >= data.num_classes()) throw ConfigError("checkpoint refers to class " + std::to_string(c) + " beyond the dataset");
    }
    total += sp.class_ids.size();
  }
  if (total != data.num_classes()) throw ConfigError("checkpoint splits do not cover the dataset's classes");
}

}  // namespace scgn
