#include "scgn/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "scgn/errors.hpp"

namespace scgn {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end || !std::isfinite(out)) {
    throw ConfigError(key + ": expected a finite number, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

const std::vector<std::string> kVariants{"baseline", "sgn", "cgn", "sgn+cgn", "finetune"};

void check_variant(const std::string& key, const std::string& v) {
  if (std::find(kVariants.begin(), kVariants.end(), v) == kVariants.end()) {
    throw ConfigError(key + ": unknown variant '" + v + "' (expected baseline, sgn, cgn, sgn+cgn or finetune)");
  }
}

#define SIZE_FIELD(name, help, member)                                                             \
  ConfigField {                                                                                     \
    name, help, [](RunConfig& c, const std::string& v) { c.member = parse_size(name, v); },        \
        [](const RunConfig& c) { return std::to_string(c.member); }                                 \
  }
#define DOUBLE_FIELD(name, help, member)                                                           \
  ConfigField {                                                                                     \
    name, help, [](RunConfig& c, const std::string& v) { c.member = parse_double(name, v); },      \
        [](const RunConfig& c) { return format_double(c.member); }                                  \
  }

std::vector<ConfigField> build_fields() {
  std::vector<ConfigField> f;
  f.push_back({"feature_file", "feature file to load instead of the synthetic dataset",
               [](RunConfig& c, const std::string& v) { c.feature_file = v; },
               [](const RunConfig& c) { return c.feature_file; }});
  f.push_back(DOUBLE_FIELD("holdout_fraction", "test share per class for feature files", holdout_fraction));
  f.push_back(SIZE_FIELD("num_classes", "synthetic: number of classes", synthetic.num_classes));
  f.push_back(SIZE_FIELD("input_dim", "synthetic: input dimension", synthetic.input_dim));
  f.push_back(SIZE_FIELD("samples_per_class", "synthetic: samples per class", synthetic.samples_per_class));
  f.push_back(DOUBLE_FIELD("class_separation", "synthetic: radius of the class-mean sphere", synthetic.class_separation));
  f.push_back(DOUBLE_FIELD("intra_spread", "synthetic: per-coordinate standard deviation", synthetic.intra_spread));
  f.push_back(DOUBLE_FIELD("test_fraction", "synthetic: test share per class", synthetic.test_fraction));
  f.push_back(SIZE_FIELD("num_base", "number of base classes", num_base));
  f.push_back(SIZE_FIELD("way", "classes per incremental session and meta-training episode", way));
  f.push_back(SIZE_FIELD("shot", "support samples per class", shot));
  f.push_back(SIZE_FIELD("pretrain_epochs", "pretraining epochs (0 skips pretraining)", pretrain.epochs));
  f.push_back(SIZE_FIELD("batch_size", "pretraining batch size", pretrain.batch_size));
  f.push_back(DOUBLE_FIELD("pretrain_lr", "pretraining base learning rate", pretrain.lr));
  f.push_back(DOUBLE_FIELD("pretrain_momentum", "pretraining momentum", pretrain.momentum));
  f.push_back(DOUBLE_FIELD("weight_decay", "pretraining weight decay", pretrain.weight_decay));
  f.push_back({"temperature", "cosine classifier temperature (pretraining and L2)",
               [](RunConfig& c, const std::string& v) {
                 c.pretrain.temperature = parse_double("temperature", v);
                 c.meta.temperature = c.pretrain.temperature;
               },
               [](const RunConfig& c) { return format_double(c.pretrain.temperature); }});
  f.push_back(SIZE_FIELD("hidden_dim1", "encoder: first hidden width", pretrain.hidden_dims.first));
  f.push_back(SIZE_FIELD("hidden_dim2", "encoder: second hidden width (the mixup layer)", pretrain.hidden_dims.second));
  f.push_back(SIZE_FIELD("feature_dim", "encoder: output feature width", pretrain.feature_dim));
  f.push_back(SIZE_FIELD("iterations", "meta-training iterations (0 skips meta-training)", meta.iterations));
  f.push_back(DOUBLE_FIELD("meta_lr", "meta-training base learning rate", meta.lr));
  f.push_back(DOUBLE_FIELD("meta_momentum", "meta-training momentum", meta.momentum));
  f.push_back({"query", "query samples per class in meta-training episodes (default: shot)",
               [](RunConfig& c, const std::string& v) {
                 c.meta.query = v == "default" ? kDefaultQuery : parse_size("query", v);
               },
               [](const RunConfig& c) {
                 return c.meta.query == kDefaultQuery ? std::string("default") : std::to_string(c.meta.query);
               }});
  f.push_back(DOUBLE_FIELD("beta_alpha", "mixup Beta distribution alpha", meta.beta.alpha));
  f.push_back(DOUBLE_FIELD("beta_beta", "mixup Beta distribution beta", meta.beta.beta));
  f.push_back(DOUBLE_FIELD("w1", "weight of the SGN alignment loss", meta.w1));
  f.push_back(DOUBLE_FIELD("w2", "weight of the CGN classification loss", meta.w2));
  f.push_back(SIZE_FIELD("relation_hidden", "SGN relation encoder hidden width", meta.relation_hidden));
  f.push_back(DOUBLE_FIELD("relation_score_bias", "initial shift of the relation score logit", meta.relation_score_bias));
  f.push_back(SIZE_FIELD("aggregator_hidden", "SGN/CGN aggregator hidden width", meta.aggregator_hidden));
  f.push_back(SIZE_FIELD("heads", "CGN attention heads", meta.heads));
  f.push_back(SIZE_FIELD("key_dim", "CGN key/query width (0: feature_dim)", meta.key_dim));
  f.push_back({"finetune_encoder", "also update the encoder during meta-training",
               [](RunConfig& c, const std::string& v) { c.meta.finetune_encoder = parse_bool("finetune_encoder", v); },
               [](const RunConfig& c) { return std::string(c.meta.finetune_encoder ? "true" : "false"); }});
  f.push_back(SIZE_FIELD("base_refine_rounds", "episode rounds averaged into SGN-refined base prototypes", base_refine_rounds));
  f.push_back(SIZE_FIELD("finetune_steps", "finetune reference: SGD steps per session", finetune_steps));
  f.push_back(DOUBLE_FIELD("finetune_lr", "finetune reference: learning rate", finetune_lr));
  f.push_back({"variant", "model variant: baseline, sgn, cgn, sgn+cgn or finetune",
               [](RunConfig& c, const std::string& v) {
                 check_variant("variant", v);
                 c.variant = v;
               },
               [](const RunConfig& c) { return c.variant; }});
  f.push_back({"variants", "comma-separated variants for ablation",
               [](RunConfig& c, const std::string& v) {
                 auto items = split_list(v);
                 for (const auto& item : items) check_variant("variants", item);
                 c.variants = std::move(items);
               },
               [](const RunConfig& c) { return join(c.variants); }});
  f.push_back({"seeds", "comma-separated seeds for ablation",
               [](RunConfig& c, const std::string& v) {
                 std::vector<std::uint64_t> seeds;
                 for (const auto& item : split_list(v)) seeds.push_back(parse_u64("seeds", item));
                 c.seeds = std::move(seeds);
               },
               [](const RunConfig& c) {
                 std::vector<std::string> items;
                 for (auto s : c.seeds) items.push_back(std::to_string(s));
                 return join(items);
               }});
  f.push_back({"seed", "seed for single runs",
               [](RunConfig& c, const std::string& v) { c.seed = parse_u64("seed", v); },
               [](const RunConfig& c) { return std::to_string(c.seed); }});
  f.push_back({"out", "output directory",
               [](RunConfig& c, const std::string& v) { c.out = v; },
               [](const RunConfig& c) { return c.out.string(); }});
  return f;
}

#undef SIZE_FIELD
#undef DOUBLE_FIELD

const ConfigField& field_named(const std::string& key) {
  for (const auto& f : config_fields()) {
    if (f.name == key) return f;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> fields = build_fields();
  return fields;
}

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  field_named(key).set(config, value);
}

std::string get_config_value(const RunConfig& config, const std::string& key) {
  return field_named(key).get(config);
}

void RunConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& what) { throw ConfigError(field + ": " + what); };
  if (!feature_file.empty()) {
    if (!std::filesystem::exists(feature_file)) fail("feature_file", "no such file '" + feature_file + "'");
    if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) fail("holdout_fraction", "must be in (0, 1)");
  } else {
    if (synthetic.num_classes < 2) fail("num_classes", "must be >= 2");
    if (synthetic.input_dim == 0) fail("input_dim", "must be >= 1");
    if (synthetic.samples_per_class < 2) fail("samples_per_class", "must be >= 2");
    if (!(synthetic.class_separation > 0.0)) fail("class_separation", "must be > 0");
    if (!(synthetic.intra_spread > 0.0)) fail("intra_spread", "must be > 0");
    if (!(synthetic.test_fraction > 0.0 && synthetic.test_fraction < 1.0)) fail("test_fraction", "must be in (0, 1)");
    if (num_base >= synthetic.num_classes) fail("num_base", "must be smaller than num_classes");
  }
  if (num_base == 0) fail("num_base", "must be >= 1");
  if (way == 0) fail("way", "must be >= 1");
  if (shot == 0) fail("shot", "must be >= 1");
  if (pretrain.batch_size == 0) fail("batch_size", "must be >= 1");
  if (!(pretrain.lr > 0.0)) fail("pretrain_lr", "must be > 0");
  if (!(pretrain.momentum >= 0.0 && pretrain.momentum < 1.0)) fail("pretrain_momentum", "must be in [0, 1)");
  if (!(pretrain.weight_decay >= 0.0)) fail("weight_decay", "must be >= 0");
  if (!(pretrain.temperature > 0.0)) fail("temperature", "must be > 0");
  if (pretrain.hidden_dims.first == 0) fail("hidden_dim1", "must be >= 1");
  if (pretrain.hidden_dims.second == 0) fail("hidden_dim2", "must be >= 1");
  if (pretrain.feature_dim == 0) fail("feature_dim", "must be >= 1");
  if (pretrain.epochs > 0 && num_base < 2) fail("pretrain_epochs", "pretraining needs num_base >= 2; set it to 0");
  if (meta.iterations > 0 && num_base < 2 * way) {
    fail("iterations", "meta-training needs num_base >= 2 * way; set it to 0");
  }
  if (!(meta.lr > 0.0)) fail("meta_lr", "must be > 0");
  if (!(meta.momentum >= 0.0 && meta.momentum < 1.0)) fail("meta_momentum", "must be in [0, 1)");
  if (!(meta.beta.alpha > 0.0)) fail("beta_alpha", "must be > 0");
  if (!(meta.beta.beta > 0.0)) fail("beta_beta", "must be > 0");
  if (!(meta.w1 >= 0.0)) fail("w1", "must be >= 0");
  if (!(meta.w2 >= 0.0)) fail("w2", "must be >= 0");
  if (meta.relation_hidden == 0) fail("relation_hidden", "must be >= 1");
  if (meta.aggregator_hidden == 0) fail("aggregator_hidden", "must be >= 1");
  if (meta.heads == 0) fail("heads", "must be >= 1");
  if (base_refine_rounds == 0) fail("base_refine_rounds", "must be >= 1");
  if (!(finetune_lr > 0.0)) fail("finetune_lr", "must be > 0");
  if (variants.empty()) fail("variants", "at least one variant required");
  if (seeds.empty()) fail("seeds", "at least one seed required");
  if (out.empty()) fail("out", "must not be empty");
}

RunConfig parse_config_text(const std::string& text, RunConfig base, std::vector<std::string>* keys) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected key = value", line_no);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      set_config_value(base, key, value);
      if (keys) keys->push_back(key);
    } catch (const ConfigError& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return base;
}

RunConfig load_config_file(const std::filesystem::path& path, RunConfig base, std::vector<std::string>* keys) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), std::move(base), keys);
}

std::string canonical_config_text(const RunConfig& config) {
  std::string out;
  for (const auto& f : config_fields()) {
    if (f.name == "out") continue;
    out += f.name + " = " + f.get(config) + "\n";
  }
  return out;
}

std::string config_digest(const RunConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical_config_text(config)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

LabeledDataset resolve_dataset(const RunConfig& config, std::uint64_t seed) {
  RngStream rng = RngStream(seed).derive(0xda7a);
  if (config.feature_file.empty()) return generate_synthetic_dataset(config.synthetic, rng);
  LabeledDataset data = load_feature_file(config.feature_file);
  assign_holdout(data, config.holdout_fraction, rng);
  return data;
}

}  // namespace scgn
