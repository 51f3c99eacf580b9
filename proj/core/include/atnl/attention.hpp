#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "atnl/graph.hpp"
#include "atnl/ops.hpp"
#include "atnl/tensor.hpp"

namespace atnl {

/// Which keys each query position may attend to. Disallowed positions are
/// excluded inside the softmax (the -inf trick); a mask never leaks -inf
/// into a returned tensor.
class AttentionMask {
 public:
  enum class Kind { none, causal, padding, combined };

  /// Everything allowed.
  static AttentionMask none(std::size_t n_q, std::size_t n_k);

  /// Query i may attend keys j <= i. Square.
  static AttentionMask causal(std::size_t n);

  /// Key j is blocked for every query when key_is_pad[j] is nonzero.
  static AttentionMask key_padding(std::size_t n_q,
                                   std::span<const std::uint8_t> key_is_pad);

  /// Intersection: allowed where both masks allow. Dimensions must match.
  AttentionMask combined_with(const AttentionMask& other) const;

  Kind kind() const { return kind_; }
  std::size_t query_len() const { return n_q_; }
  std::size_t key_len() const { return n_k_; }
  bool allows(std::size_t q, std::size_t k) const {
    return allowed_[q * n_k_ + k] != 0;
  }
  const std::vector<std::uint8_t>& allowed() const { return allowed_; }

 private:
  AttentionMask(Kind kind, std::size_t n_q, std::size_t n_k,
                std::vector<std::uint8_t> allowed);

  Kind kind_;
  std::size_t n_q_, n_k_;
  std::vector<std::uint8_t> allowed_;  // row-major [n_q x n_k]
};

/// softmax over scores restricted to the mask; disallowed entries come out
/// exactly 0 and receive no gradient.
Tensor masked_softmax_rows(Graph& g, const Tensor& scores,
                           const AttentionMask& mask);

struct AttentionResult {
  Tensor output;   // [n_q x d_v]
  Tensor weights;  // [n_q x n_k], rows on the simplex
};

/// softmax(Q K^T / sqrt(d_k)) V with masking.
AttentionResult scaled_dot_product_attention(Graph& g, const Tensor& q,
                                             const Tensor& k, const Tensor& v,
                                             const AttentionMask& mask);

/// Per-head projections (no biases) plus the output projection.
struct MultiHeadParams {
  std::vector<Tensor> wq;  // h matrices [d_model x d_k]
  std::vector<Tensor> wk;  // h matrices [d_model x d_k]
  std::vector<Tensor> wv;  // h matrices [d_model x d_v]
  Tensor wo;               // [(h * d_v) x d_model]
};

struct MultiHeadResult {
  Tensor output;                     // [n_q x d_model]
  std::vector<Tensor> head_weights;  // h matrices [n_q x n_k]
};

MultiHeadResult multi_head_attention(Graph& g, const MultiHeadParams& p,
                                     const Tensor& q_in, const Tensor& k_in,
                                     const Tensor& v_in,
                                     const AttentionMask& mask);

/// Attention over trainable key/value banks instead of a feed-forward
/// sublayer. Position-wise: each input row is mapped independently.
struct AopParams {
  std::vector<Tensor> wq;      // h_p matrices [d_model x d_pk]
  std::vector<Tensor> keys;    // h_p banks [n_p x d_pk]
  std::vector<Tensor> values;  // h_p banks [n_p x d_pv]
  Tensor wo;                   // [(h_p * d_pv) x d_model]
};

/// Banks are scaled by sqrt(d_model) at use; the stored parameters stay on
/// the raw scale so optimizer statistics are comparable across tensors.
Tensor attention_over_parameters(Graph& g, const AopParams& p, const Tensor& x,
                                 std::size_t d_model);

/// Trainable-parameter total for one attention-over-parameters sublayer:
/// banks plus query and output projections, no biases.
std::uint64_t aop_parameter_count(std::uint64_t h_p, std::uint64_t d_pk,
                                  std::uint64_t d_pv, std::uint64_t n_p,
                                  std::uint64_t d_model);

struct DotProductStats {
  double raw_mean = 0.0;
  double raw_variance = 0.0;
  double scaled_mean = 0.0;
  double scaled_variance = 0.0;
};

/// Empirical mean/variance of q.k (and of q.k / sqrt(d_k)) over iid
/// standard-normal vectors. samples must be at least 1000.
DotProductStats dot_product_variance_experiment(std::size_t d_k,
                                                std::size_t samples,
                                                std::uint64_t seed);

}  // namespace atnl
