#include "scgn/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "scgn/errors.hpp"
#include "scgn/rng.hpp"

namespace scgn {

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DomainError("cosine_similarity: length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (!(na > 0.0) || !(nb > 0.0)) throw DomainError("cosine_similarity: zero-norm input");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

std::vector<double> softmax(std::span<const double> logits, double temperature) {
  if (!(temperature > 0.0)) throw DomainError("softmax: temperature must be positive");
  if (logits.empty()) throw DomainError("softmax: empty logits");
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp((logits[i] - m) / temperature);
    z += out[i];
  }
  for (double& v : out) v /= z;
  return out;
}

namespace {

double evaluate(const DifferentiableFn& fn, const std::vector<Tensor2D>& point) {
  std::vector<Var> inputs;
  inputs.reserve(point.size());
  for (const auto& t : point) inputs.push_back(Var::constant(t));
  return fn(inputs).item();
}

}  // namespace

GradCheckReport grad_check(const std::string& op, const DifferentiableFn& fn,
                           const std::vector<Tensor2D>& point, double epsilon, double tolerance) {
  GradCheckReport report;
  report.op = op;
  report.tolerance = tolerance;
  if (epsilon < 1e-6 || epsilon > 1e-3) {
    report.note = "epsilon outside [1e-6, 1e-3]";
    return report;
  }
  try {
    std::vector<Var> inputs;
    inputs.reserve(point.size());
    for (const auto& t : point) inputs.push_back(Var::parameter(t));
    const Var out = fn(inputs);
    if (!out.value().all_finite()) {
      report.note = "non-finite output";
      return report;
    }
    backward(out);

    std::vector<Tensor2D> probe = point;
    for (std::size_t k = 0; k < point.size(); ++k) {
      const Tensor2D& analytic = inputs[k].grad();
      for (std::size_t i = 0; i < point[k].size(); ++i) {
        const double x = point[k][i];
        probe[k][i] = x + epsilon;
        const double fp = evaluate(fn, probe);
        probe[k][i] = x - epsilon;
        const double fm = evaluate(fn, probe);
        probe[k][i] = x;
        const double numeric = (fp - fm) / (2.0 * epsilon);
        if (!std::isfinite(numeric) || !std::isfinite(analytic[i])) {
          report.note = "non-finite gradient entry";
          report.max_relative_error = std::numeric_limits<double>::infinity();
          return report;
        }
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
        const double rel = std::abs(analytic[i] - numeric) / denom;
        if (rel > report.max_relative_error || report.checked_entries == 0) {
          report.max_relative_error = rel;
          report.worst_analytic = analytic[i];
          report.worst_numeric = numeric;
        }
        ++report.checked_entries;
      }
    }
  } catch (const DomainError& e) {
    report.note = e.what();
    report.max_relative_error = std::numeric_limits<double>::infinity();
    return report;
  }
  report.pass = report.max_relative_error <= tolerance;
  return report;
}

Tensor2D random_normal(std::size_t rows, std::size_t cols, RngStream& rng, double stddev) {
  Tensor2D t(rows, cols);
  for (double& v : t.data()) v = rng.normal(0.0, stddev);
  return t;
}

}  // namespace scgn
