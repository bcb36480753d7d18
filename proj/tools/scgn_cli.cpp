// Command-line driver: pretrain -> metatrain -> evaluate, plus ablations.

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "scgn/checkpoint.hpp"
#include "scgn/config.hpp"
#include "scgn/errors.hpp"
#include "scgn/protocol.hpp"

namespace fs = std::filesystem;
using namespace scgn;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct Options {
  std::string config_path;
  std::string checkpoint;
  std::map<std::string, std::string> overrides;  // key -> value, flag order irrelevant
};

std::string flag_of(const std::string& key) {
  std::string f = "--" + key;
  for (char& c : f)
    if (c == '_') c = '-';
  return f;
}

void add_common_options(CLI::App* cmd, Options& opts, bool with_checkpoint) {
  cmd->add_option("--config", opts.config_path, "key = value config file")->check(CLI::ExistingFile);
  if (with_checkpoint) cmd->add_option("--checkpoint", opts.checkpoint, "input checkpoint");
  for (const auto& f : config_fields()) {
    cmd->add_option_function<std::string>(
        flag_of(f.name), [&opts, name = f.name](const std::string& v) { opts.overrides[name] = v; }, f.help);
  }
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw IoError("failed writing '" + path.string() + "'");
  }
  fs::rename(tmp, path);
}

// Timestamps live only here so every other output is reproducible byte for byte.
void update_manifest(const fs::path& out_dir, const std::string& command, const std::string& started,
                     const RunConfig& config, const std::vector<std::string>& files) {
  const fs::path path = out_dir / "manifest.json";
  nlohmann::ordered_json manifest = nlohmann::ordered_json::object();
  if (std::ifstream in(path); in) {
    try {
      manifest = nlohmann::ordered_json::parse(in);
    } catch (const nlohmann::json::exception&) {
      manifest = nlohmann::ordered_json::object();
    }
  }
  manifest[command] = {{"started", started},
                       {"finished", utc_now()},
                       {"config_digest", config_digest(config)},
                       {"seed", config.seed},
                       {"files", files}};
  write_text(path, manifest.dump(2) + "\n");
}

LabeledDataset dataset_for(const RunConfig& config, std::uint64_t seed) { return resolve_dataset(config, seed); }

PipelineState load_state(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("checkpoint '" + path.string() + "' does not exist");
  return pipeline_from_checkpoint(read_checkpoint(path));
}

std::string pretrain_log(const PipelineState& s) {
  std::ostringstream out;
  for (std::size_t e = 0; e < s.pretrain_losses.size(); ++e) {
    nlohmann::ordered_json j;
    j["epoch"] = e;
    j["loss"] = s.pretrain_losses[e];
    out << j.dump() << "\n";
  }
  return out.str();
}

int cmd_pretrain(const RunConfig& config) {
  const std::string started = utc_now();
  const LabeledDataset data = dataset_for(config, config.seed);
  const PipelineState state = pretrain_stage(data, config, config.seed);
  const fs::path ckpt = config.out / "checkpoints" / "pretrain.ckpt";
  fs::create_directories(ckpt.parent_path());
  write_checkpoint(pipeline_to_checkpoint(state), ckpt);
  const fs::path log = config.out / "logs" / "pretrain.jsonl";
  write_text(log, pretrain_log(state));
  write_text(config.out / "logs" / "pretrain.config", canonical_config_text(config));
  update_manifest(config.out, "pretrain", started, config, {ckpt.string(), log.string()});
  std::cout << "wrote " << ckpt.string() << "\n";
  return kExitOk;
}

int cmd_metatrain(const RunConfig& config, const std::string& checkpoint) {
  const std::string started = utc_now();
  const fs::path in = checkpoint.empty() ? config.out / "checkpoints" / "pretrain.ckpt" : fs::path(checkpoint);
  PipelineState state = load_state(in);
  const LabeledDataset data = dataset_for(config, state.seed);
  check_compatible(state, data, config);
  const Variant variant = variant_from_string(config.variant);
  if (!is_meta_variant(variant)) {
    throw ConfigError("variant: '" + config.variant + "' has nothing to meta-train; use sgn, cgn or sgn+cgn");
  }
  state = metatrain_stage(std::move(state), data, config, variant);
  const fs::path ckpt = config.out / "checkpoints" / "meta.ckpt";
  fs::create_directories(ckpt.parent_path());
  write_checkpoint(pipeline_to_checkpoint(state), ckpt);
  std::ostringstream log;
  write_train_log(state.meta_log, log);
  const fs::path log_path = config.out / "logs" / "metatrain.jsonl";
  write_text(log_path, log.str());
  write_text(config.out / "logs" / "metatrain.config", canonical_config_text(config));
  update_manifest(config.out, "metatrain", started, config, {ckpt.string(), log_path.string()});
  std::cout << "wrote " << ckpt.string() << "\n";
  return kExitOk;
}

int cmd_evaluate(const RunConfig& config, const std::string& checkpoint, bool variant_given) {
  const std::string started = utc_now();
  fs::path in = checkpoint;
  if (in.empty()) {
    in = config.out / "checkpoints" / "meta.ckpt";
    if (!fs::exists(in)) in = config.out / "checkpoints" / "pretrain.ckpt";
  }
  const PipelineState state = load_state(in);
  const LabeledDataset data = dataset_for(config, state.seed);
  check_compatible(state, data, config);

  Variant variant = variant_from_string(config.variant);
  if (state.model && !variant_given) variant = variant_from_string(state.variant);
  if (is_meta_variant(variant) && !state.model) {
    throw ConfigError("variant: '" + std::string(to_string(variant)) + "' needs a meta-trained checkpoint");
  }
  const SessionReport report = run_sessions(state, data, config, variant);

  const fs::path dir = config.out / "reports";
  std::ostringstream table, plot;
  write_session_table({report}, table);
  write_plot_data(report, plot);
  write_text(dir / "session_report.json", session_report_json(report));
  write_text(dir / "session_table.csv", table.str());
  write_text(dir / "session_plot.dat", plot.str());
  update_manifest(config.out, "evaluate", started, config,
                  {(dir / "session_report.json").string(), (dir / "session_table.csv").string(),
                   (dir / "session_plot.dat").string()});
  std::cout << table.str();
  return kExitOk;
}

int cmd_ablate(const RunConfig& config) {
  const std::string started = utc_now();
  const AblationReport report = run_ablation(config);
  const fs::path dir = config.out / "reports";
  std::ostringstream summary, runs;
  write_ablation_table(report, summary);
  write_session_table(report.runs, runs);
  write_text(dir / "ablation.json", ablation_report_json(report));
  write_text(dir / "ablation_table.csv", summary.str());
  write_text(dir / "ablation_runs.csv", runs.str());
  update_manifest(config.out, "ablate", started, config,
                  {(dir / "ablation.json").string(), (dir / "ablation_table.csv").string(),
                   (dir / "ablation_runs.csv").string()});
  std::cout << summary.str();
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-shot class-incremental learning with sample- and class-level graph networks"};
  app.require_subcommand(1);
  Options opts;
  auto* pretrain = app.add_subcommand("pretrain", "pretrain the encoder and base prototypes");
  auto* metatrain = app.add_subcommand("metatrain", "meta-train SGN/CGN on a pretrain checkpoint");
  auto* evaluate = app.add_subcommand("evaluate", "run the incremental sessions and write reports");
  auto* ablate = app.add_subcommand("ablate", "run every variant for every seed and summarize");
  add_common_options(pretrain, opts, false);
  add_common_options(metatrain, opts, true);
  add_common_options(evaluate, opts, true);
  add_common_options(ablate, opts, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  RunConfig config;
  bool variant_given = opts.overrides.count("variant") > 0;
  try {
    if (!opts.config_path.empty()) {
      std::vector<std::string> keys;
      config = load_config_file(opts.config_path, {}, &keys);
      if (std::find(keys.begin(), keys.end(), "variant") != keys.end()) variant_given = true;
    }
    // Overrides apply in field-table order so the result does not depend on flag order.
    for (const auto& f : config_fields()) {
      if (auto it = opts.overrides.find(f.name); it != opts.overrides.end()) f.set(config, it->second);
    }
    config.validate();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParseError& e) {
    std::cerr << "config error: " << opts.config_path << ": " << e.what() << "\n";
    return kExitUsage;
  } catch (const IoError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (pretrain->parsed()) return cmd_pretrain(config);
    if (metatrain->parsed()) return cmd_metatrain(config, opts.checkpoint);
    if (evaluate->parsed()) return cmd_evaluate(config, opts.checkpoint, variant_given);
    if (ablate->parsed()) return cmd_ablate(config);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
