#pragma once

#include <span>
#include <vector>

#include "scgn/aggregator.hpp"
#include "scgn/autodiff.hpp"
#include "scgn/rng.hpp"
#include "scgn/tensor.hpp"

namespace scgn {

/// Query/key projections of the class-level attention.
///
/// With V = [bank; new] ((M+N) x d), each head h computes keys K = new W_k[h]
/// (N x key_dim) and queries Q = V W_q[h] ((M+N) x key_dim), and
/// alpha[h] = softmax over the N keys of Q K^T / sqrt(key_dim).
/// For more than one head, per-head messages are concatenated and mapped back
/// to d by `w_out` ((H*d) x d); a single head uses its message directly.
struct AttentionParams {
  std::vector<Tensor2D> w_k;  ///< per head, d x key_dim
  std::vector<Tensor2D> w_q;  ///< per head, d x key_dim
  Tensor2D w_out;             ///< (H*d) x d, empty when H == 1

  static AttentionParams create(std::size_t dim, std::size_t heads, std::size_t key_dim, RngStream& rng);

  std::size_t heads() const { return w_k.size(); }
  std::size_t key_dim() const { return w_k.empty() ? 0 : w_k.front().cols(); }
  std::size_t dim() const { return w_k.empty() ? 0 : w_k.front().rows(); }

  /// W_k, W_q per head (interleaved), then w_out when present.
  std::vector<Tensor2D*> parameters();
  std::vector<const Tensor2D*> parameters() const;
};

/// Class-level graph network parameters: attention plus theta_c.
struct ClassGraphNet {
  AttentionParams attention;
  Aggregator aggregator;

  static ClassGraphNet create(std::size_t dim, std::size_t heads, std::size_t key_dim,
                              std::size_t aggregator_hidden, RngStream& rng);

  std::vector<Tensor2D*> parameters();
  std::vector<const Tensor2D*> parameters() const;
  std::size_t attention_param_count() const { return attention.parameters().size(); }
};

/// One (M+N) x N weight matrix per head; every row sums to 1.
std::vector<Var> attention_weights(const Var& new_classes, const Var& bank, const AttentionParams& attention,
                                   std::span<const Var> params);
std::vector<Tensor2D> attention_weights(const Tensor2D& new_classes, const Tensor2D& bank,
                                        const AttentionParams& attention);

/// Message for new class n: mean over the M+N query rows q of alpha[q][n] * V[q].
/// N x d after multi-head projection.
Var attended_message(const Var& new_classes, const Var& bank, const AttentionParams& attention,
                     std::span<const Var> params);

/// CGN(new + message).
Var calibrate_with_message(const Var& new_classes, const Var& message, const Aggregator& aggregator,
                           std::span<const Var> aggregator_params);

/// Full calibration. `params` follows ClassGraphNet::parameters().
Var calibrate(const Var& new_classes, const Var& bank, const ClassGraphNet& net, std::span<const Var> params);
Tensor2D calibrate(const Tensor2D& new_classes, const Tensor2D& bank, const ClassGraphNet& net);

}  // namespace scgn
