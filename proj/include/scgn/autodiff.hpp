#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "scgn/tensor.hpp"

namespace scgn {

namespace detail {

struct Node {
  Tensor2D value;
  Tensor2D grad;
  bool requires_grad = false;
  std::uint64_t id = 0;
  std::vector<std::shared_ptr<Node>> parents;
  /// Accumulates this node's grad into the parents' grads.
  std::function<void(Node&)> backward;
};

}  // namespace detail

/// Handle to a value in a dynamically built computation graph.
///
/// Graphs are built eagerly by the free functions below and differentiated
/// with `backward`. Leaves created with `Var::parameter` collect gradients;
/// leaves created with `Var::constant` are treated as fixed inputs, and any
/// node whose ancestors are all constants skips gradient bookkeeping.
class Var {
 public:
  Var() = default;

  static Var constant(Tensor2D value);
  static Var parameter(Tensor2D value);
  static Var scalar(double value) { return constant(Tensor2D(1, 1, value)); }

  const Tensor2D& value() const { return node_->value; }
  /// Gradient after `backward`; zero-filled tensor of the value's shape if none flowed.
  const Tensor2D& grad() const;
  bool requires_grad() const { return node_->requires_grad; }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  double item() const;

  bool valid() const { return static_cast<bool>(node_); }

  /// Creates a node computed from `parents`. `backward` receives the node and must
  /// add into the grads of parents that require them.
  static Var make(Tensor2D value, std::vector<Var> parents,
                  std::function<void(detail::Node&)> backward);

  detail::Node& node() const { return *node_; }

 private:
  explicit Var(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  std::shared_ptr<detail::Node> node_;
  friend void backward(const Var&);
};

/// Reverse-mode sweep from a 1x1 output; gradients accumulate into every
/// reachable node that requires them.
void backward(const Var& output);

std::vector<Var> bind_parameters(std::span<const Tensor2D* const> params);
std::vector<Var> bind_constants(std::span<const Tensor2D* const> params);

// Linear algebra and shape.
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var concat_rows(const Var& top, const Var& bottom);
Var concat_cols(const Var& left, const Var& right);
Var gather_rows(const Var& a, std::vector<std::size_t> indices);
Var reshape(const Var& a, std::size_t rows, std::size_t cols);

// Elementwise arithmetic.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var add_scalar(const Var& a, double value);
/// a (RxC) + row (1xC), broadcast over rows.
Var add_row(const Var& a, const Var& row);
/// a (RxC) * row (1xC), broadcast over rows.
Var mul_row(const Var& a, const Var& row);
/// a (RxC) * col (Rx1), broadcast over columns.
Var mul_col(const Var& a, const Var& col);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }

// Elementwise nonlinearities.
Var relu(const Var& a);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var square(const Var& a);
Var power(const Var& a, double exponent);
Var exp(const Var& a);
Var log(const Var& a);

// Reductions.
Var sum_all(const Var& a);
/// Column sums, 1xC.
Var sum_rows(const Var& a);
/// Row sums, Rx1.
Var sum_cols(const Var& a);
Var mean_all(const Var& a);
/// Column means, 1xC.
Var mean_rows(const Var& a);

// Composite kernels.
Var softmax_rows(const Var& logits, double temperature = 1.0);
/// Mean cross-entropy of row-softmax(logits) against integer targets; 1x1.
Var cross_entropy(const Var& logits, std::span<const std::size_t> targets);
/// Rows divided by their Euclidean norms. Zero rows raise DomainError.
Var normalize_rows(const Var& a);
/// Cosine similarity of every row of `a` against every row of `b`.
Var row_cosine(const Var& a, const Var& b);
/// Column-wise standardization over the batch of rows followed by a learned
/// scale and shift. A single-row batch skips the standardization.
Var batch_standardize(const Var& a, const Var& gamma, const Var& beta, double eps = 1e-5);

}  // namespace scgn
