#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "atnl/attention.hpp"
#include "atnl/graph.hpp"
#include "atnl/ops.hpp"
#include "atnl/rng.hpp"
#include "atnl/tensor.hpp"

namespace atnl {

enum class PeKind { sinusoidal, learned };
enum class FfnKind { relu_ffn, aop };

struct AopConfig {
  std::size_t h_p = 8;
  std::size_t d_pk = 64;
  std::size_t d_pv = 64;
  std::size_t n_p = 1536;
};

struct ModelConfig {
  std::size_t n_layers = 6;
  std::size_t d_model = 512;
  std::size_t d_ff = 2048;
  std::size_t heads = 8;
  std::size_t d_k = 64;
  std::size_t d_v = 64;
  double p_drop = 0.1;
  double eps_ls = 0.1;
  std::size_t vocab_size = 0;  // must be set before use
  std::size_t max_len = 512;
  PeKind pe_kind = PeKind::sinusoidal;
  FfnKind ffn_kind = FfnKind::relu_ffn;
  AopConfig aop;
  bool tie_weights = true;

  static ModelConfig base(std::size_t vocab_size);
  static ModelConfig big(std::size_t vocab_size);

  /// Throws ConfigError on unusable settings (zero vocab, odd d_model with
  /// sinusoidal encodings, probabilities outside [0, 1), zero extents).
  void validate() const;
};

struct LayerNormParams {
  Tensor gain;
  Tensor bias;
};

struct FfnParams {
  Tensor w1;  // [d_model x d_ff]
  Tensor b1;  // [d_ff]
  Tensor w2;  // [d_ff x d_model]
  Tensor b2;  // [d_model]
};

struct EncoderLayerParams {
  MultiHeadParams self_attn;
  FfnParams ffn;    // when ffn_kind == relu_ffn
  AopParams aop;    // when ffn_kind == aop
  LayerNormParams norm1, norm2;
};

struct DecoderLayerParams {
  MultiHeadParams self_attn;
  MultiHeadParams cross_attn;
  FfnParams ffn;
  AopParams aop;
  LayerNormParams norm1, norm2, norm3;
};

/// Attention weights captured during a forward pass, indexed
/// [layer][head], each tensor [n_q x n_k].
struct ForwardTrace {
  std::vector<std::vector<Tensor>> enc_self;
  std::vector<std::vector<Tensor>> dec_self;
  std::vector<std::vector<Tensor>> cross;
};

/// All trainable tensors of one Transformer, reachable both through the
/// layer structs and through a stable dotted-name registry
/// (e.g. "dec.2.cross.wq.0", "enc.0.norm1.gain").
class TransformerParams {
 public:
  /// Random initialization: Glorot-uniform projections, zero biases, unit
  /// gains, N(0, 1/sqrt(d_model)) embeddings and banks.
  TransformerParams(const ModelConfig& cfg, std::uint64_t init_seed);

  /// All-zero parameters, for loading a checkpoint into.
  static TransformerParams zeroed(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }

  const std::vector<std::pair<std::string, Tensor>>& named_parameters() const {
    return registry_;
  }
  /// Lookup by dotted name. Throws ContractError on unknown names.
  Tensor parameter(const std::string& name) const;

  Tensor embedding() const { return embedding_; }
  /// The pre-softmax projection, stored embedding-oriented
  /// [vocab x d_model]; the same storage as embedding() when tied.
  Tensor output_projection() const {
    return cfg_.tie_weights ? embedding_ : out_proj_;
  }

  const std::vector<EncoderLayerParams>& encoder() const { return enc_; }
  const std::vector<DecoderLayerParams>& decoder() const { return dec_; }

  /// Positional encoding rows 0..n-1. Sinusoidal tables are recomputed on
  /// demand past max_len; a learned table cannot extrapolate and throws.
  Tensor positional_rows(Graph& g, std::size_t n) const;

 private:
  friend std::uint64_t parameter_count(const ModelConfig& cfg);

  enum class Init { glorot, zero, one, gauss };
  using MakeFn =
      std::function<Tensor(std::string, std::vector<std::size_t>, Init)>;

  TransformerParams() = default;

  /// Walks every parameter in registry order, delegating creation to make;
  /// the single enumeration that the constructors and the counter share.
  void build_structure(const MakeFn& make);

  ModelConfig cfg_;
  Tensor embedding_;
  Tensor out_proj_;   // untied only
  Tensor learned_pe_; // pe_kind == learned only
  Tensor sin_table_;  // pe_kind == sinusoidal: fixed, not a parameter
  std::vector<EncoderLayerParams> enc_;
  std::vector<DecoderLayerParams> dec_;
  std::vector<std::pair<std::string, Tensor>> registry_;
};

/// Fixed sinusoidal position table: column 2i holds
/// sin(pos / 10000^(2i/d_model)), column 2i+1 the matching cosine.
Tensor sinusoidal_pe(std::size_t max_len, std::size_t d_model);

/// Token rows scaled by sqrt(d_model), plus positional encoding, plus
/// dropout (train mode only).
Tensor embed(Graph& g, const TransformerParams& p, std::span<const int> tokens,
             Mode mode, Rng& rng);

/// relu(x W1 + b1) W2 + b2, applied row by row.
Tensor position_wise_ffn(Graph& g, const Tensor& x, const FfnParams& p);

/// LayerNorm(x + dropout(sublayer(x))): the residual wrapper around every
/// attention and feed-forward block.
Tensor sublayer_apply(Graph& g, const Tensor& x,
                      const std::function<Tensor(Graph&, const Tensor&)>& sublayer,
                      const LayerNormParams& norm, double p_drop, Mode mode,
                      Rng& rng);

/// Encoder stack; returns the memory [n_src x d_model].
Tensor encode(Graph& g, const TransformerParams& p, std::span<const int> src,
              std::span<const std::uint8_t> src_is_pad, Mode mode, Rng& rng,
              ForwardTrace* trace = nullptr);

/// Decoder stack over a (BOS-shifted) target prefix against encoder memory;
/// returns logits [n_tgt x vocab]. Pass an empty tgt_is_pad when the prefix
/// has no padding.
Tensor decode_step(Graph& g, const TransformerParams& p, const Tensor& memory,
                   std::span<const int> tgt_in,
                   std::span<const std::uint8_t> src_is_pad,
                   std::span<const std::uint8_t> tgt_is_pad, Mode mode,
                   Rng& rng, ForwardTrace* trace = nullptr);

/// Exact trainable-parameter total for a config, without materializing it.
std::uint64_t parameter_count(const ModelConfig& cfg);

/// ModelConfig <-> "key = value" text block (one key per line), used inside
/// checkpoints.
std::string model_config_to_text(const ModelConfig& cfg);
ModelConfig model_config_from_text(const std::string& text);

}  // namespace atnl
