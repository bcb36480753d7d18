#pragma once

#include <span>
#include <vector>

#include "scgn/autodiff.hpp"
#include "scgn/rng.hpp"
#include "scgn/tensor.hpp"

namespace scgn {

/// Residual node-update network used by both graph levels:
///
///     out = z + relu(z W1 + b1) W2 + b2
///
/// W2 and b2 start at zero, so a freshly built aggregator is the identity map.
struct Aggregator {
  Tensor2D w1;  ///< d x hidden
  Tensor2D b1;  ///< 1 x hidden
  Tensor2D w2;  ///< hidden x d
  Tensor2D b2;  ///< 1 x d

  static Aggregator create(std::size_t dim, std::size_t hidden, RngStream& rng);
  /// All-zero parameters: exactly out = z.
  static Aggregator identity(std::size_t dim, std::size_t hidden = 1);

  std::size_t dim() const { return w1.rows(); }

  /// `params` follows `parameters()` order.
  Var forward(const Var& z, std::span<const Var> params) const;
  Tensor2D apply(const Tensor2D& z) const;

  std::vector<Tensor2D*> parameters();
  std::vector<const Tensor2D*> parameters() const;
};

}  // namespace scgn
