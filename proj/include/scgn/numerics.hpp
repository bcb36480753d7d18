#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "scgn/autodiff.hpp"
#include "scgn/rng.hpp"
#include "scgn/tensor.hpp"

namespace scgn {

/// Cosine of the angle between `a` and `b`. Throws DomainError on length
/// mismatch or a zero-norm argument.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Numerically stable softmax of logits / temperature.
std::vector<double> softmax(std::span<const double> logits, double temperature = 1.0);

struct GradCheckReport {
  std::string op;
  double max_relative_error = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  std::size_t checked_entries = 0;
  // Entry that produced max_relative_error.
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  /// Empty unless the check failed for a reason other than tolerance.
  std::string note;
};

/// Scalar-valued function of a list of tensors, expressed on the autodiff graph.
using DifferentiableFn = std::function<Var(std::span<const Var>)>;

/// Compares reverse-mode gradients of `fn` at `point` with central finite
/// differences. Relative error uses max(|analytic|, |numeric|, 1e-8) as the
/// denominator. Non-finite values and thrown DomainErrors are reported as a
/// failed check rather than propagated.
GradCheckReport grad_check(const std::string& op, const DifferentiableFn& fn,
                           const std::vector<Tensor2D>& point, double epsilon = 1e-6,
                           double tolerance = 1e-4);

/// Tensor of i.i.d. N(0, stddev^2) entries.
Tensor2D random_normal(std::size_t rows, std::size_t cols, RngStream& rng, double stddev = 1.0);

}  // namespace scgn
