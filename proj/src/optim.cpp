#include "scgn/optim.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "scgn/errors.hpp"

namespace scgn {

double cosine_annealing_lr(std::size_t step, std::size_t total_steps, double base_lr) {
  if (total_steps == 0 || step > total_steps) {
    throw DomainError("cosine_annealing_lr: step " + std::to_string(step) + " outside [0, " +
                      std::to_string(total_steps) + "]");
  }
  if (step == total_steps) return 0.0;
  const double t = static_cast<double>(step) / static_cast<double>(total_steps);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

void SgdMomentum::step(std::span<Tensor2D* const> params, std::span<const Tensor2D> grads, double lr) {
  if (params.size() != grads.size()) throw DomainError("SgdMomentum: params/grads count mismatch");
  if (velocity_.empty()) {
    velocity_.reserve(params.size());
    for (const Tensor2D* p : params) velocity_.emplace_back(p->rows(), p->cols());
  }
  if (velocity_.size() != params.size()) throw DomainError("SgdMomentum: parameter list changed");
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor2D& p = *params[k];
    Tensor2D& v = velocity_[k];
    const Tensor2D& g = grads[k];
    if (!p.same_shape(g) || !p.same_shape(v)) throw DomainError("SgdMomentum: shape mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[i] = momentum_ * v[i] + g[i] + weight_decay_ * p[i];
      p[i] -= lr * v[i];
    }
  }
}

}  // namespace scgn
