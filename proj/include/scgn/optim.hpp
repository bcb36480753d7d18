#pragma once

#include <span>
#include <vector>

#include "scgn/tensor.hpp"

namespace scgn {

/// lr = base_lr * (1 + cos(pi * step / total_steps)) / 2 for 0 <= step <= total_steps.
double cosine_annealing_lr(std::size_t step, std::size_t total_steps, double base_lr);

/// Heavy-ball SGD: v <- momentum * v + (g + weight_decay * p); p <- p - lr * v.
class SgdMomentum {
 public:
  explicit SgdMomentum(double momentum = 0.9, double weight_decay = 0.0)
      : momentum_(momentum), weight_decay_(weight_decay) {}

  void step(std::span<Tensor2D* const> params, std::span<const Tensor2D> grads, double lr);

 private:
  double momentum_;
  double weight_decay_;
  std::vector<Tensor2D> velocity_;
};

}  // namespace scgn
