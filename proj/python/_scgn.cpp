#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "scgn/checkpoint.hpp"
#include "scgn/config.hpp"
#include "scgn/errors.hpp"
#include "scgn/numerics.hpp"
#include "scgn/optim.hpp"
#include "scgn/protocol.hpp"
#include "scgn/rng.hpp"

namespace py = pybind11;
using namespace scgn;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor2D to_tensor(const Array& a) {
  if (a.ndim() == 1) {
    return Tensor2D(1, static_cast<std::size_t>(a.shape(0)), std::vector<double>(a.data(), a.data() + a.size()));
  }
  if (a.ndim() != 2) throw DomainError("expected a 1-D or 2-D array");
  return Tensor2D(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
                  std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor2D& t) {
  Array out({t.rows(), t.cols()});
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

RunConfig config_from(const py::dict& overrides) {
  RunConfig c;
  for (const auto& [k, v] : overrides) {
    set_config_value(c, py::str(k), py::str(v));
  }
  return c;
}

py::dict report_dict(const SessionReport& r) {
  py::dict d;
  d["variant"] = r.variant;
  d["seed"] = r.seed;
  d["config_digest"] = r.config_digest;
  d["accuracies"] = r.accuracies;
  d["ties"] = r.ties;
  d["bank_sizes"] = r.bank_sizes;
  d["pd"] = r.pd;
  return d;
}

}  // namespace

PYBIND11_MODULE(_scgn, m) {
  m.doc() = "Few-shot class-incremental learning with sample- and class-level graph networks";

  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<SamplingError>(m, "SamplingError", PyExc_RuntimeError);
  py::register_exception<TrainingError>(m, "TrainingError", PyExc_RuntimeError);
  py::register_exception<ProtocolError>(m, "ProtocolError", PyExc_RuntimeError);

  m.def("cosine_similarity", [](std::vector<double> a, std::vector<double> b) { return cosine_similarity(a, b); });
  m.def("softmax", [](std::vector<double> logits, double t) { return softmax(logits, t); }, py::arg("logits"),
        py::arg("temperature") = 1.0);
  m.def(
      "sample_beta",
      [](double alpha, double beta, std::uint64_t seed, std::size_t n) {
        RngStream rng(seed);
        std::vector<double> out(n);
        for (auto& v : out) v = sample_beta(alpha, beta, rng);
        return out;
      },
      py::arg("alpha"), py::arg("beta"), py::arg("seed"), py::arg("n") = 1);
  m.def("cosine_annealing_lr", &cosine_annealing_lr, py::arg("step"), py::arg("total_steps"), py::arg("base_lr"));
  m.def("performance_dropping", &performance_dropping, py::arg("a0"), py::arg("an"));
  m.def("make_session_splits",
        [](std::size_t num_classes, std::size_t num_base, std::size_t way, std::size_t shot, std::uint64_t seed) {
          RngStream rng(seed);
          std::vector<std::vector<std::size_t>> out;
          for (const auto& s : make_session_splits(num_classes, num_base, way, shot, rng)) out.push_back(s.class_ids);
          return out;
        });

  m.def("config_keys", [] {
    std::vector<std::string> keys;
    for (const auto& f : config_fields()) keys.push_back(f.name);
    return keys;
  });
  m.def(
      "canonical_config",
      [](const py::dict& overrides) { return canonical_config_text(config_from(overrides)); },
      py::arg("overrides") = py::dict());
  m.def(
      "config_digest", [](const py::dict& overrides) { return config_digest(config_from(overrides)); },
      py::arg("overrides") = py::dict());
  m.def(
      "validate_config", [](const py::dict& overrides) { config_from(overrides).validate(); },
      py::arg("overrides") = py::dict());

  m.def(
      "synthetic_dataset",
      [](const py::dict& overrides, std::uint64_t seed) {
        const LabeledDataset d = resolve_dataset(config_from(overrides), seed);
        std::vector<bool> test;
        for (auto p : d.partition) test.push_back(p == Partition::kTest);
        return py::make_tuple(to_array(d.features), d.labels, test);
      },
      py::arg("overrides") = py::dict(), py::arg("seed") = 0,
      "Returns (features, labels, is_test) for the configured dataset.");

  m.def(
      "run_protocol",
      [](const py::dict& overrides, const std::string& variant, std::uint64_t seed) {
        const RunConfig c = config_from(overrides);
        c.validate();
        py::gil_scoped_release release;
        const LabeledDataset data = resolve_dataset(c, seed);
        const SessionReport r = run_protocol(data, c, variant_from_string(variant), seed);
        py::gil_scoped_acquire acquire;
        return report_dict(r);
      },
      py::arg("overrides") = py::dict(), py::arg("variant") = "sgn+cgn", py::arg("seed") = 0);

  m.def(
      "run_ablation",
      [](const py::dict& overrides) {
        const RunConfig c = config_from(overrides);
        AblationReport r;
        {
          py::gil_scoped_release release;
          r = run_ablation(c);
        }
        py::dict d;
        d["config_digest"] = r.config_digest;
        py::list runs, summary;
        for (const auto& run : r.runs) runs.append(report_dict(run));
        for (const auto& row : r.summary) {
          py::dict s;
          s["variant"] = row.variant;
          s["runs"] = row.runs;
          s["final_mean"] = row.final_mean;
          s["final_std"] = row.final_std;
          s["pd_mean"] = row.pd_mean;
          s["pd_std"] = row.pd_std;
          summary.append(s);
        }
        d["runs"] = runs;
        d["summary"] = summary;
        d["json"] = ablation_report_json(r);
        return d;
      },
      py::arg("overrides") = py::dict());

  m.def(
      "evaluate_features",
      [](const Array& bank_rows, std::vector<std::size_t> class_ids, const Array& features,
         std::vector<std::size_t> labels) {
        const Tensor2D b = to_tensor(bank_rows);
        PrototypeBank bank(b.cols());
        bank.append(b, class_ids, {});
        const EvalResult r = evaluate_features(bank, to_tensor(features), labels);
        py::dict d;
        d["accuracy"] = r.accuracy;
        d["correct"] = r.correct;
        d["total"] = r.total;
        d["ties"] = r.ties;
        return d;
      },
      py::arg("bank"), py::arg("class_ids"), py::arg("features"), py::arg("labels"));

  m.def(
      "pretrain_checkpoint",
      [](const py::dict& overrides, std::uint64_t seed) {
        const RunConfig c = config_from(overrides);
        const LabeledDataset data = resolve_dataset(c, seed);
        return checkpoint_to_text(pipeline_to_checkpoint(pretrain_stage(data, c, seed)));
      },
      py::arg("overrides") = py::dict(), py::arg("seed") = 0,
      "Runs pretraining and returns the checkpoint text.");

  m.def(
      "evaluate_checkpoint",
      [](const std::string& text, const py::dict& overrides, const std::string& variant) {
        const RunConfig c = config_from(overrides);
        const PipelineState state = pipeline_from_checkpoint(checkpoint_from_text(text));
        const LabeledDataset data = resolve_dataset(c, state.seed);
        check_compatible(state, data, c);
        return report_dict(run_sessions(state, data, c, variant_from_string(variant)));
      },
      py::arg("checkpoint"), py::arg("overrides") = py::dict(), py::arg("variant") = "baseline");
}
