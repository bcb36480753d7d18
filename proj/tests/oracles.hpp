#pragma once

// Plain-loop reference implementations shared by the unit tests and the
// acceptance checks. Deliberately written without the library's matrix ops.

#include <algorithm>
#include <cmath>
#include <vector>

#include "scgn/cgn.hpp"
#include "scgn/numerics.hpp"
#include "scgn/sgn.hpp"

namespace scgn::oracle {

// Term-by-term reference implementation of the relation network and the
// relation-weighted class aggregation, written with plain loops.
inline std::vector<std::vector<double>> standardize(std::vector<std::vector<double>> x, const Tensor2D& gamma,
                                                    const Tensor2D& beta) {
  const std::size_t n = x.size(), c = x[0].size();
  for (std::size_t j = 0; j < c; ++j) {
    if (n > 1) {
      double mu = 0.0;
      for (std::size_t i = 0; i < n; ++i) mu += x[i][j];
      mu /= n;
      double var = 0.0;
      for (std::size_t i = 0; i < n; ++i) var += (x[i][j] - mu) * (x[i][j] - mu);
      var /= n;
      for (std::size_t i = 0; i < n; ++i) x[i][j] = (x[i][j] - mu) / std::sqrt(var + 1e-5);
    }
    for (std::size_t i = 0; i < n; ++i) x[i][j] = x[i][j] * gamma[j] + beta[j];
  }
  return x;
}

inline std::vector<std::vector<double>> affine(const std::vector<std::vector<double>>& x, const Tensor2D& w) {
  std::vector<std::vector<double>> y(x.size(), std::vector<double>(w.cols(), 0.0));
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t k = 0; k < w.cols(); ++k)
      for (std::size_t j = 0; j < w.rows(); ++j) y[i][k] += x[i][j] * w(j, k);
  return y;
}

inline Tensor2D relations(const Tensor2D& r, const RelationEncoder& f) {
  const std::size_t n = r.rows(), d = r.cols();
  std::vector<std::vector<double>> pairs;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      std::vector<double> diff(d);
      for (std::size_t k = 0; k < d; ++k) diff[k] = (r(i, k) - r(j, k)) * (r(i, k) - r(j, k));
      pairs.push_back(diff);
    }
  auto a = standardize(affine(pairs, f.w1), f.gamma1, f.beta1);
  for (auto& row : a)
    for (double& v : row) v = std::max(v, 0.0);
  const auto s = standardize(affine(a, f.w2), f.gamma2, f.beta2);
  Tensor2D e(n, n);
  for (std::size_t p = 0; p < n * n; ++p) e[p] = 1.0 / (1.0 + std::exp(-s[p][0]));
  return e;
}

inline std::vector<double> aggregator(const std::vector<double>& z, const Aggregator& a) {
  std::vector<double> hidden(a.w1.cols());
  for (std::size_t h = 0; h < hidden.size(); ++h) {
    double acc = a.b1[h];
    for (std::size_t j = 0; j < z.size(); ++j) acc += z[j] * a.w1(j, h);
    hidden[h] = std::max(acc, 0.0);
  }
  std::vector<double> out(z);
  for (std::size_t k = 0; k < z.size(); ++k) {
    double acc = a.b2[k];
    for (std::size_t h = 0; h < hidden.size(); ++h) acc += hidden[h] * a.w2(h, k);
    out[k] += acc;
  }
  return out;
}

inline Tensor2D class_features(const Tensor2D& r, const Tensor2D& e, const std::vector<std::size_t>& labels,
                        std::size_t classes, const Aggregator& agg) {
  const std::size_t n = r.rows(), d = r.cols();
  Tensor2D out(classes, d);
  std::vector<double> counts(classes, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> z(d);
    for (std::size_t k = 0; k < d; ++k) {
      z[k] = r(i, k);
      for (std::size_t j = 0; j < n; ++j) z[k] += e(i, j) * r(j, k);
    }
    const auto u = aggregator(z, agg);
    for (std::size_t k = 0; k < d; ++k) out(labels[i], k) += u[k];
    counts[labels[i]] += 1.0;
  }
  for (std::size_t c = 0; c < classes; ++c)
    for (std::size_t k = 0; k < d; ++k) out(c, k) /= counts[c];
  return out;
}

// Class-level attention and calibration.
inline Tensor2D calibrate(const Tensor2D& fresh, const Tensor2D& bank, const ClassGraphNet& net) {
  const std::size_t n = fresh.rows(), m = bank.rows(), d = fresh.cols();
  const Tensor2D v = vstack(bank, fresh);
  std::vector<Tensor2D> messages;
  for (std::size_t h = 0; h < net.attention.heads(); ++h) {
    const Tensor2D& wk = net.attention.w_k[h];
    const Tensor2D& wq = net.attention.w_q[h];
    const std::size_t kd = wk.cols();
    Tensor2D msg(n, d);
    for (std::size_t q = 0; q < m + n; ++q) {
      std::vector<double> logits(n, 0.0);
      for (std::size_t key = 0; key < n; ++key) {
        for (std::size_t a = 0; a < kd; ++a) {
          double kq = 0.0, qq = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            kq += fresh(key, j) * wk(j, a);
            qq += v(q, j) * wq(j, a);
          }
          logits[key] += kq * qq;
        }
        logits[key] /= std::sqrt(double(kd));
      }
      const double mx = *std::max_element(logits.begin(), logits.end());
      double z = 0.0;
      for (double& l : logits) z += (l = std::exp(l - mx));
      for (std::size_t key = 0; key < n; ++key)
        for (std::size_t j = 0; j < d; ++j) msg(key, j) += logits[key] / z * v(q, j) / double(m + n);
    }
    messages.push_back(msg);
  }
  Tensor2D message = messages[0];
  if (net.attention.heads() > 1) {
    message = Tensor2D(n, d);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < d; ++k)
        for (std::size_t h = 0; h < messages.size(); ++h)
          for (std::size_t j = 0; j < d; ++j) message(i, k) += messages[h](i, j) * net.attention.w_out(h * d + j, k);
  }
  Tensor2D z(n, d);
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = fresh[i] + message[i];
  return net.aggregator.apply(z);
}

}  // namespace scgn::oracle
