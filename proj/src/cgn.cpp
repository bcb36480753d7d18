#include "scgn/cgn.hpp"

#include <cmath>

#include "scgn/errors.hpp"
#include "scgn/numerics.hpp"

namespace scgn {

AttentionParams AttentionParams::create(std::size_t dim, std::size_t heads, std::size_t key_dim,
                                        RngStream& rng) {
  if (heads == 0 || key_dim == 0 || dim == 0) throw DomainError("AttentionParams: heads, key_dim and dim must be >= 1");
  AttentionParams a;
  const double s = 1.0 / std::sqrt(static_cast<double>(dim));
  for (std::size_t h = 0; h < heads; ++h) {
    a.w_k.push_back(random_normal(dim, key_dim, rng, s));
    a.w_q.push_back(random_normal(dim, key_dim, rng, s));
  }
  if (heads > 1) {
    // Starts as the average of the head messages.
    a.w_out = Tensor2D(heads * dim, dim);
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t i = 0; i < dim; ++i) a.w_out(h * dim + i, i) = 1.0 / static_cast<double>(heads);
  }
  return a;
}

std::vector<Tensor2D*> AttentionParams::parameters() {
  std::vector<Tensor2D*> out;
  for (std::size_t h = 0; h < w_k.size(); ++h) {
    out.push_back(&w_k[h]);
    out.push_back(&w_q[h]);
  }
  if (!w_out.empty()) out.push_back(&w_out);
  return out;
}

std::vector<const Tensor2D*> AttentionParams::parameters() const {
  std::vector<const Tensor2D*> out;
  for (std::size_t h = 0; h < w_k.size(); ++h) {
    out.push_back(&w_k[h]);
    out.push_back(&w_q[h]);
  }
  if (!w_out.empty()) out.push_back(&w_out);
  return out;
}

ClassGraphNet ClassGraphNet::create(std::size_t dim, std::size_t heads, std::size_t key_dim,
                                    std::size_t aggregator_hidden, RngStream& rng) {
  ClassGraphNet net;
  net.attention = AttentionParams::create(dim, heads, key_dim, rng);
  net.aggregator = Aggregator::create(dim, aggregator_hidden, rng);
  return net;
}

std::vector<Tensor2D*> ClassGraphNet::parameters() {
  auto out = attention.parameters();
  for (Tensor2D* p : aggregator.parameters()) out.push_back(p);
  return out;
}

std::vector<const Tensor2D*> ClassGraphNet::parameters() const {
  auto out = attention.parameters();
  for (const Tensor2D* p : aggregator.parameters()) out.push_back(p);
  return out;
}

namespace {

void check_shapes(const Var& new_classes, const Var& bank, const AttentionParams& attention) {
  if (new_classes.rows() == 0) throw DomainError("CGN: need at least one new class");
  if (new_classes.cols() != attention.dim()) throw DomainError("CGN: new-class width differs from feature_dim");
  if (bank.rows() > 0 && bank.cols() != attention.dim()) throw DomainError("CGN: bank width differs from feature_dim");
}

Var values_of(const Var& new_classes, const Var& bank) {
  return bank.rows() == 0 ? new_classes : concat_rows(bank, new_classes);
}

}  // namespace

std::vector<Var> attention_weights(const Var& new_classes, const Var& bank, const AttentionParams& attention,
                                   std::span<const Var> params) {
  check_shapes(new_classes, bank, attention);
  const Var values = values_of(new_classes, bank);
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(attention.key_dim()));
  std::vector<Var> alphas;
  for (std::size_t h = 0; h < attention.heads(); ++h) {
    const Var keys = matmul(new_classes, params[2 * h]);
    const Var queries = matmul(values, params[2 * h + 1]);
    alphas.push_back(softmax_rows(scale(matmul(queries, transpose(keys)), inv_sqrt_dk)));
  }
  return alphas;
}

std::vector<Tensor2D> attention_weights(const Tensor2D& new_classes, const Tensor2D& bank,
                                        const AttentionParams& attention) {
  const auto params = bind_constants(attention.parameters());
  std::vector<Tensor2D> out;
  for (const Var& a : attention_weights(Var::constant(new_classes), Var::constant(bank), attention, params)) {
    out.push_back(a.value());
  }
  return out;
}

Var attended_message(const Var& new_classes, const Var& bank, const AttentionParams& attention,
                     std::span<const Var> params) {
  const std::vector<Var> alphas = attention_weights(new_classes, bank, attention, params);
  const Var values = values_of(new_classes, bank);
  const double inv_queries = 1.0 / static_cast<double>(values.rows());
  Var message;
  for (std::size_t h = 0; h < alphas.size(); ++h) {
    const Var head = scale(matmul(transpose(alphas[h]), values), inv_queries);
    message = h == 0 ? head : concat_cols(message, head);
  }
  if (attention.heads() > 1) message = matmul(message, params[2 * attention.heads()]);
  return message;
}

Var calibrate_with_message(const Var& new_classes, const Var& message, const Aggregator& aggregator,
                           std::span<const Var> aggregator_params) {
  return aggregator.forward(add(new_classes, message), aggregator_params);
}

Var calibrate(const Var& new_classes, const Var& bank, const ClassGraphNet& net, std::span<const Var> params) {
  const std::size_t n_att = net.attention_param_count();
  const Var message = attended_message(new_classes, bank, net.attention, params.subspan(0, n_att));
  return calibrate_with_message(new_classes, message, net.aggregator, params.subspan(n_att));
}

Tensor2D calibrate(const Tensor2D& new_classes, const Tensor2D& bank, const ClassGraphNet& net) {
  const auto params = bind_constants(net.parameters());
  return calibrate(Var::constant(new_classes), Var::constant(bank), net, params).value();
}

}  // namespace scgn
