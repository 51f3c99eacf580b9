#include "atnl/attention.hpp"

#include <cmath>

#include "atnl/errors.hpp"
#include "atnl/rng.hpp"

namespace atnl {

AttentionMask::AttentionMask(Kind kind, std::size_t n_q, std::size_t n_k,
                             std::vector<std::uint8_t> allowed)
    : kind_(kind), n_q_(n_q), n_k_(n_k), allowed_(std::move(allowed)) {}

AttentionMask AttentionMask::none(std::size_t n_q, std::size_t n_k) {
  return AttentionMask(Kind::none, n_q, n_k,
                       std::vector<std::uint8_t>(n_q * n_k, 1));
}

AttentionMask AttentionMask::causal(std::size_t n) {
  std::vector<std::uint8_t> a(n * n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) a[i * n + j] = 1;
  return AttentionMask(Kind::causal, n, n, std::move(a));
}

AttentionMask AttentionMask::key_padding(
    std::size_t n_q, std::span<const std::uint8_t> key_is_pad) {
  const std::size_t n_k = key_is_pad.size();
  std::vector<std::uint8_t> a(n_q * n_k);
  for (std::size_t i = 0; i < n_q; ++i)
    for (std::size_t j = 0; j < n_k; ++j) a[i * n_k + j] = !key_is_pad[j];
  return AttentionMask(Kind::padding, n_q, n_k, std::move(a));
}

AttentionMask AttentionMask::combined_with(const AttentionMask& other) const {
  if (n_q_ != other.n_q_ || n_k_ != other.n_k_)
    throw ShapeError("AttentionMask: cannot combine " + std::to_string(n_q_) +
                     "x" + std::to_string(n_k_) + " with " +
                     std::to_string(other.n_q_) + "x" +
                     std::to_string(other.n_k_));
  std::vector<std::uint8_t> a(allowed_.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    a[i] = allowed_[i] && other.allowed_[i];
  return AttentionMask(Kind::combined, n_q_, n_k_, std::move(a));
}

Tensor masked_softmax_rows(Graph& g, const Tensor& scores,
                           const AttentionMask& mask) {
  if (scores.rank() != 2 || scores.rows() != mask.query_len() ||
      scores.cols() != mask.key_len())
    throw ShapeError("masked_softmax_rows: scores " + scores.shape_str() +
                     " vs mask " + std::to_string(mask.query_len()) + "x" +
                     std::to_string(mask.key_len()));
  return softmax_rows_allowed(g, scores, mask.allowed());
}

AttentionResult scaled_dot_product_attention(Graph& g, const Tensor& q,
                                             const Tensor& k, const Tensor& v,
                                             const AttentionMask& mask) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2)
    throw ShapeError("attention: expected rank-2 Q, K, V");
  if (q.cols() != k.cols())
    throw ShapeError("attention: Q " + q.shape_str() + " and K " +
                     k.shape_str() + " disagree on key width");
  if (k.rows() != v.rows())
    throw ShapeError("attention: K " + k.shape_str() + " and V " +
                     v.shape_str() + " disagree on key count");
  if (mask.query_len() != q.rows() || mask.key_len() != k.rows())
    throw ShapeError("attention: mask " + std::to_string(mask.query_len()) +
                     "x" + std::to_string(mask.key_len()) +
                     " does not cover Q " + q.shape_str() + ", K " +
                     k.shape_str());

  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Tensor scores = scale(g, matmul(g, q, transpose(g, k)), inv_sqrt_dk);
  Tensor weights = masked_softmax_rows(g, scores, mask);
  return {matmul(g, weights, v), weights};
}

MultiHeadResult multi_head_attention(Graph& g, const MultiHeadParams& p,
                                     const Tensor& q_in, const Tensor& k_in,
                                     const Tensor& v_in,
                                     const AttentionMask& mask) {
  const std::size_t h = p.wq.size();
  if (h == 0 || p.wk.size() != h || p.wv.size() != h)
    throw ShapeError("multi_head_attention: need matching non-empty "
                     "projection lists");
  std::vector<Tensor> heads;
  std::vector<Tensor> weights;
  heads.reserve(h);
  weights.reserve(h);
  for (std::size_t i = 0; i < h; ++i) {
    AttentionResult r = scaled_dot_product_attention(
        g, matmul(g, q_in, p.wq[i]), matmul(g, k_in, p.wk[i]),
        matmul(g, v_in, p.wv[i]), mask);
    heads.push_back(r.output);
    weights.push_back(r.weights);
  }
  Tensor out = matmul(g, concat_cols(g, heads), p.wo);
  return {out, std::move(weights)};
}

Tensor attention_over_parameters(Graph& g, const AopParams& p, const Tensor& x,
                                 std::size_t d_model) {
  const std::size_t h = p.wq.size();
  if (h == 0 || p.keys.size() != h || p.values.size() != h)
    throw ShapeError("attention_over_parameters: need matching non-empty "
                     "head lists");
  if (x.rank() != 2 || x.cols() != d_model)
    throw ShapeError("attention_over_parameters: input " + x.shape_str() +
                     " does not match d_model " + std::to_string(d_model));
  const double bank_scale = std::sqrt(static_cast<double>(d_model));
  std::vector<Tensor> heads;
  heads.reserve(h);
  for (std::size_t i = 0; i < h; ++i) {
    if (p.keys[i].rows() != p.values[i].rows())
      throw ShapeError("attention_over_parameters: key bank " +
                       p.keys[i].shape_str() + " vs value bank " +
                       p.values[i].shape_str());
    AttentionResult r = scaled_dot_product_attention(
        g, matmul(g, x, p.wq[i]), scale(g, p.keys[i], bank_scale),
        scale(g, p.values[i], bank_scale),
        AttentionMask::none(x.rows(), p.keys[i].rows()));
    heads.push_back(r.output);
  }
  return matmul(g, concat_cols(g, heads), p.wo);
}

std::uint64_t aop_parameter_count(std::uint64_t h_p, std::uint64_t d_pk,
                                  std::uint64_t d_pv, std::uint64_t n_p,
                                  std::uint64_t d_model) {
  return h_p * n_p * (d_pk + d_pv) + d_model * h_p * d_pk +
         h_p * d_pv * d_model;
}

DotProductStats dot_product_variance_experiment(std::size_t d_k,
                                                std::size_t samples,
                                                std::uint64_t seed) {
  if (samples < 1000)
    throw ContractError(
        "dot_product_variance_experiment: need at least 1000 samples, got " +
        std::to_string(samples));
  Rng rng(seed);
  double sum = 0.0, sumsq = 0.0;
  std::vector<double> qv(d_k);
  for (std::size_t s = 0; s < samples; ++s) {
    for (std::size_t j = 0; j < d_k; ++j) qv[j] = rng.next_gaussian();
    double dot = 0.0;
    for (std::size_t j = 0; j < d_k; ++j) dot += qv[j] * rng.next_gaussian();
    sum += dot;
    sumsq += dot * dot;
  }
  const double n = static_cast<double>(samples);
  DotProductStats st;
  st.raw_mean = sum / n;
  st.raw_variance = (sumsq - n * st.raw_mean * st.raw_mean) / (n - 1.0);
  const double inv = 1.0 / std::sqrt(static_cast<double>(d_k));
  st.scaled_mean = st.raw_mean * inv;
  st.scaled_variance = st.raw_variance * inv * inv;
  return st;
}

}  // namespace atnl
