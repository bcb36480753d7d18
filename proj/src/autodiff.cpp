#include "scgn/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_set>

#include "scgn/errors.hpp"

namespace scgn {

using detail::Node;

namespace {

std::uint64_t next_id() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}

Tensor2D& grad_of(Node& n) {
  if (n.grad.empty() && !n.value.empty()) n.grad = Tensor2D(n.value.rows(), n.value.cols());
  return n.grad;
}

Node& parent(Node& n, std::size_t i) { return *n.parents[i]; }

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a.value().same_shape(b.value())) {
    throw DomainError(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                      std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                      std::to_string(b.cols()) + ")");
  }
}

template <typename F, typename D>
Var unary(const Var& a, F f, D dfdx_from_xy) {
  Tensor2D out(a.rows(), a.cols());
  const Tensor2D& x = a.value();
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return Var::make(std::move(out), {a}, [dfdx_from_xy](Node& n) {
    Node& p = parent(n, 0);
    if (!p.requires_grad) return;
    Tensor2D& g = grad_of(p);
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += n.grad[i] * dfdx_from_xy(p.value[i], n.value[i]);
    }
  });
}

}  // namespace

Var Var::constant(Tensor2D value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->id = next_id();
  return Var(std::move(node));
}

Var Var::parameter(Tensor2D value) {
  Var v = constant(std::move(value));
  v.node_->requires_grad = true;
  return v;
}

const Tensor2D& Var::grad() const { return grad_of(*node_); }

double Var::item() const {
  if (node_->value.size() != 1) throw DomainError("Var::item: value is not 1x1");
  return node_->value[0];
}

Var Var::make(Tensor2D value, std::vector<Var> parents, std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->id = next_id();
  node->requires_grad = std::any_of(parents.begin(), parents.end(),
                                    [](const Var& p) { return p.requires_grad(); });
  if (node->requires_grad) {
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node_);
    node->backward = std::move(backward);
  }
  return Var(std::move(node));
}

void backward(const Var& output) {
  if (output.value().size() != 1) throw DomainError("backward: output must be 1x1");
  if (!output.requires_grad()) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{output.node_.get()};
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    if (!seen.insert(n).second) continue;
    order.push_back(n);
    for (auto& p : n->parents) {
      if (p->requires_grad) stack.push_back(p.get());
    }
  }
  // Ids grow with creation time, so descending id is a reverse topological order.
  std::sort(order.begin(), order.end(), [](Node* a, Node* b) { return a->id > b->id; });

  grad_of(*output.node_)[0] += 1.0;
  for (Node* n : order) {
    if (n->backward) n->backward(*n);
  }
}

std::vector<Var> bind_parameters(std::span<const Tensor2D* const> params) {
  std::vector<Var> out;
  out.reserve(params.size());
  for (const Tensor2D* p : params) out.push_back(Var::parameter(*p));
  return out;
}

std::vector<Var> bind_constants(std::span<const Tensor2D* const> params) {
  std::vector<Var> out;
  out.reserve(params.size());
  for (const Tensor2D* p : params) out.push_back(Var::constant(*p));
  return out;
}

Var matmul(const Var& a, const Var& b) {
  return Var::make(scgn::matmul(a.value(), b.value()), {a, b}, [](Node& n) {
    Node& pa = parent(n, 0);
    Node& pb = parent(n, 1);
    if (pa.requires_grad) grad_of(pa).axpy(1.0, scgn::matmul(n.grad, pb.value.transposed()));
    if (pb.requires_grad) grad_of(pb).axpy(1.0, scgn::matmul(pa.value.transposed(), n.grad));
  });
}

Var transpose(const Var& a) {
  return Var::make(a.value().transposed(), {a}, [](Node& n) {
    Node& p = parent(n, 0);
    if (p.requires_grad) grad_of(p).axpy(1.0, n.grad.transposed());
  });
}

Var concat_rows(const Var& top, const Var& bottom) {
  if (top.rows() > 0 && bottom.rows() > 0 && top.cols() != bottom.cols()) {
    throw DomainError("concat_rows: column counts differ");
  }
  const std::size_t split = top.value().size();
  return Var::make(vstack(top.value(), bottom.value()), {top, bottom}, [split](Node& n) {
    Node& pt = parent(n, 0);
    Node& pb = parent(n, 1);
    if (pt.requires_grad) {
      Tensor2D& g = grad_of(pt);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
    if (pb.requires_grad) {
      Tensor2D& g = grad_of(pb);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[split + i];
    }
  });
}

Var concat_cols(const Var& left, const Var& right) {
  if (left.rows() != right.rows()) throw DomainError("concat_cols: row counts differ");
  const std::size_t lc = left.cols();
  const std::size_t rc = right.cols();
  Tensor2D out(left.rows(), lc + rc);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    std::copy_n(left.value().row(r).begin(), lc, out.row(r).begin());
    std::copy_n(right.value().row(r).begin(), rc, out.row(r).begin() + lc);
  }
  return Var::make(std::move(out), {left, right}, [lc, rc](Node& n) {
    Node& pl = parent(n, 0);
    Node& pr = parent(n, 1);
    for (std::size_t r = 0; r < n.grad.rows(); ++r) {
      if (pl.requires_grad) {
        auto g = grad_of(pl).row(r);
        for (std::size_t c = 0; c < lc; ++c) g[c] += n.grad(r, c);
      }
      if (pr.requires_grad) {
        auto g = grad_of(pr).row(r);
        for (std::size_t c = 0; c < rc; ++c) g[c] += n.grad(r, lc + c);
      }
    }
  });
}

Var gather_rows(const Var& a, std::vector<std::size_t> indices) {
  Tensor2D out = a.value().rows_subset(indices);
  return Var::make(std::move(out), {a}, [idx = std::move(indices)](Node& n) {
    Node& p = parent(n, 0);
    if (!p.requires_grad) return;
    Tensor2D& g = grad_of(p);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      auto dst = g.row(idx[i]);
      auto src = n.grad.row(i);
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
    }
  });
}

Var reshape(const Var& a, std::size_t rows, std::size_t cols) {
  if (rows * cols != a.value().size()) throw DomainError("reshape: element count changes");
  return Var::make(Tensor2D(rows, cols, a.value().data()), {a}, [](Node& n) {
    Node& p = parent(n, 0);
    if (!p.requires_grad) return;
    Tensor2D& g = grad_of(p);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor2D out = a.value();
  out.axpy(1.0, b.value());
  return Var::make(std::move(out), {a, b}, [](Node& n) {
    for (std::size_t k = 0; k < 2; ++k) {
      Node& p = parent(n, k);
      if (p.requires_grad) grad_of(p).axpy(1.0, n.grad);
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor2D out = a.value();
  out.axpy(-1.0, b.value());
  return Var::make(std::move(out), {a, b}, [](Node& n) {
    if (parent(n, 0).requires_grad) grad_of(parent(n, 0)).axpy(1.0, n.grad);
    if (parent(n, 1).requires_grad) grad_of(parent(n, 1)).axpy(-1.0, n.grad);
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor2D out(a.rows(), a.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return Var::make(std::move(out), {a, b}, [](Node& n) {
    Node& pa = parent(n, 0);
    Node& pb = parent(n, 1);
    if (pa.requires_grad) {
      Tensor2D& g = grad_of(pa);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      Tensor2D& g = grad_of(pb);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * pa.value[i];
    }
  });
}

Var scale(const Var& a, double factor) {
  return unary(a, [factor](double x) { return factor * x; },
               [factor](double, double) { return factor; });
}

Var add_scalar(const Var& a, double value) {
  return unary(a, [value](double x) { return x + value; }, [](double, double) { return 1.0; });
}

Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw DomainError("add_row: bad row shape");
  Tensor2D out = a.value();
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += row.value()[c];
  return Var::make(std::move(out), {a, row}, [](Node& n) {
    Node& pa = parent(n, 0);
    Node& pr = parent(n, 1);
    if (pa.requires_grad) grad_of(pa).axpy(1.0, n.grad);
    if (pr.requires_grad) {
      Tensor2D& g = grad_of(pr);
      for (std::size_t r = 0; r < n.grad.rows(); ++r)
        for (std::size_t c = 0; c < n.grad.cols(); ++c) g[c] += n.grad(r, c);
    }
  });
}

Var mul_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw DomainError("mul_row: bad row shape");
  Tensor2D out = a.value();
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) *= row.value()[c];
  return Var::make(std::move(out), {a, row}, [](Node& n) {
    Node& pa = parent(n, 0);
    Node& pr = parent(n, 1);
    if (pa.requires_grad) {
      Tensor2D& g = grad_of(pa);
      for (std::size_t r = 0; r < n.grad.rows(); ++r)
        for (std::size_t c = 0; c < n.grad.cols(); ++c) g(r, c) += n.grad(r, c) * pr.value[c];
    }
    if (pr.requires_grad) {
      Tensor2D& g = grad_of(pr);
      for (std::size_t r = 0; r < n.grad.rows(); ++r)
        for (std::size_t c = 0; c < n.grad.cols(); ++c) g[c] += n.grad(r, c) * pa.value(r, c);
    }
  });
}

Var mul_col(const Var& a, const Var& col) {
  if (col.cols() != 1 || col.rows() != a.rows()) throw DomainError("mul_col: bad column shape");
  Tensor2D out = a.value();
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) *= col.value()[r];
  return Var::make(std::move(out), {a, col}, [](Node& n) {
    Node& pa = parent(n, 0);
    Node& pc = parent(n, 1);
    if (pa.requires_grad) {
      Tensor2D& g = grad_of(pa);
      for (std::size_t r = 0; r < n.grad.rows(); ++r)
        for (std::size_t c = 0; c < n.grad.cols(); ++c) g(r, c) += n.grad(r, c) * pc.value[r];
    }
    if (pc.requires_grad) {
      Tensor2D& g = grad_of(pc);
      for (std::size_t r = 0; r < n.grad.rows(); ++r)
        for (std::size_t c = 0; c < n.grad.cols(); ++c) g[r] += n.grad(r, c) * pa.value(r, c);
    }
  });
}

Var relu(const Var& a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var tanh(const Var& a) {
  return unary(a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(const Var& a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var square(const Var& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var power(const Var& a, double exponent) {
  return unary(a, [exponent](double x) { return std::pow(x, exponent); },
               [exponent](double x, double) { return exponent * std::pow(x, exponent - 1.0); });
}

Var exp(const Var& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(const Var& a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var sum_all(const Var& a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return Var::make(Tensor2D(1, 1, s), {a}, [](Node& n) {
    Node& p = parent(n, 0);
    if (!p.requires_grad) return;
    Tensor2D& g = grad_of(p);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[0];
  });
}

Var sum_rows(const Var& a) {
  Tensor2D out(1, a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) out[c] += a.value()(r, c);
  return Var::make(std::move(out), {a}, [](Node& n) {
    Node& p = parent(n, 0);
    if (!p.requires_grad) return;
    Tensor2D& g = grad_of(p);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) g(r, c) += n.grad[c];
  });
}

Var sum_cols(const Var& a) {
  Tensor2D out(a.rows(), 1);
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) out[r] += a.value()(r, c);
  return Var::make(std::move(out), {a}, [](Node& n) {
    Node& p = parent(n, 0);
    if (!p.requires_grad) return;
    Tensor2D& g = grad_of(p);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) g(r, c) += n.grad[r];
  });
}

Var mean_all(const Var& a) {
  if (a.value().empty()) throw DomainError("mean_all: empty tensor");
  return scale(sum_all(a), 1.0 / static_cast<double>(a.value().size()));
}

Var mean_rows(const Var& a) {
  if (a.rows() == 0) throw DomainError("mean_rows: no rows");
  return scale(sum_rows(a), 1.0 / static_cast<double>(a.rows()));
}

Var softmax_rows(const Var& logits, double temperature) {
  if (!(temperature > 0.0)) throw DomainError("softmax_rows: temperature must be positive");
  Tensor2D out(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto x = logits.value().row(r);
    const double m = *std::max_element(x.begin(), x.end());
    double z = 0.0;
    for (std::size_t c = 0; c < x.size(); ++c) {
      out(r, c) = std::exp((x[c] - m) / temperature);
      z += out(r, c);
    }
    for (std::size_t c = 0; c < x.size(); ++c) out(r, c) /= z;
  }
  return Var::make(std::move(out), {logits}, [temperature](Node& n) {
    Node& p = parent(n, 0);
    if (!p.requires_grad) return;
    Tensor2D& g = grad_of(p);
    for (std::size_t r = 0; r < n.value.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < n.value.cols(); ++c) dot += n.grad(r, c) * n.value(r, c);
      for (std::size_t c = 0; c < n.value.cols(); ++c) {
        g(r, c) += n.value(r, c) * (n.grad(r, c) - dot) / temperature;
      }
    }
  });
}

Var cross_entropy(const Var& logits, std::span<const std::size_t> targets) {
  const std::size_t rows = logits.rows();
  if (targets.size() != rows) throw DomainError("cross_entropy: one target per row required");
  if (rows == 0) throw DomainError("cross_entropy: empty batch");
  Tensor2D probs(rows, logits.cols());
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] >= logits.cols()) throw DomainError("cross_entropy: target out of range");
    auto x = logits.value().row(r);
    const double m = *std::max_element(x.begin(), x.end());
    double z = 0.0;
    for (std::size_t c = 0; c < x.size(); ++c) {
      probs(r, c) = std::exp(x[c] - m);
      z += probs(r, c);
    }
    for (std::size_t c = 0; c < x.size(); ++c) probs(r, c) /= z;
    loss += -(x[targets[r]] - m - std::log(z));
  }
  loss /= static_cast<double>(rows);
  std::vector<std::size_t> t(targets.begin(), targets.end());
  return Var::make(Tensor2D(1, 1, loss), {logits},
                   [probs = std::move(probs), t = std::move(t)](Node& n) {
                     Node& p = parent(n, 0);
                     if (!p.requires_grad) return;
                     Tensor2D& g = grad_of(p);
                     const double s = n.grad[0] / static_cast<double>(t.size());
                     for (std::size_t r = 0; r < probs.rows(); ++r) {
                       for (std::size_t c = 0; c < probs.cols(); ++c) {
                         g(r, c) += s * (probs(r, c) - (c == t[r] ? 1.0 : 0.0));
                       }
                     }
                   });
}

Var normalize_rows(const Var& a) {
  const Var norms_sq = sum_cols(square(a));
  for (double v : norms_sq.value().data()) {
    if (!(v > 0.0)) throw DomainError("normalize_rows: zero-norm row");
  }
  return mul_col(a, power(norms_sq, -0.5));
}

Var row_cosine(const Var& a, const Var& b) {
  if (a.cols() != b.cols()) throw DomainError("row_cosine: feature dimensions differ");
  return matmul(normalize_rows(a), transpose(normalize_rows(b)));
}

Var batch_standardize(const Var& a, const Var& gamma, const Var& beta, double eps) {
  if (a.rows() == 0) throw DomainError("batch_standardize: empty batch");
  Var centered_scaled = a;
  if (a.rows() > 1) {
    const Var ones = Var::constant(Tensor2D(a.rows(), 1, 1.0));
    const Var mu = mean_rows(a);
    const Var centered = sub(a, matmul(ones, mu));
    const Var var = mean_rows(square(centered));
    const Var inv_std = power(add_scalar(var, eps), -0.5);
    centered_scaled = mul_row(centered, inv_std);
  }
  return add_row(mul_row(centered_scaled, gamma), beta);
}

}  // namespace scgn
