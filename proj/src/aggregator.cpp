#include "scgn/aggregator.hpp"

#include <cmath>

#include "scgn/errors.hpp"
#include "scgn/numerics.hpp"

namespace scgn {

Aggregator Aggregator::create(std::size_t dim, std::size_t hidden, RngStream& rng) {
  return {random_normal(dim, hidden, rng, std::sqrt(2.0 / static_cast<double>(dim))), Tensor2D(1, hidden),
          Tensor2D(hidden, dim), Tensor2D(1, dim)};
}

Aggregator Aggregator::identity(std::size_t dim, std::size_t hidden) {
  return {Tensor2D(dim, hidden), Tensor2D(1, hidden), Tensor2D(hidden, dim), Tensor2D(1, dim)};
}

Var Aggregator::forward(const Var& z, std::span<const Var> p) const {
  if (z.cols() != dim()) throw DomainError("Aggregator: input width differs from feature_dim");
  const Var hidden = relu(add_row(matmul(z, p[0]), p[1]));
  return add(z, add_row(matmul(hidden, p[2]), p[3]));
}

Tensor2D Aggregator::apply(const Tensor2D& z) const {
  const auto params = bind_constants(parameters());
  return forward(Var::constant(z), params).value();
}

std::vector<Tensor2D*> Aggregator::parameters() { return {&w1, &b1, &w2, &b2}; }
std::vector<const Tensor2D*> Aggregator::parameters() const { return {&w1, &b1, &w2, &b2}; }

}  // namespace scgn
