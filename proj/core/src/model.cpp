#include "atnl/model.hpp"

#include <cmath>

#include "atnl/errors.hpp"
#include "atnl/kv.hpp"

namespace atnl {

ModelConfig ModelConfig::base(std::size_t vocab_size) {
  ModelConfig c;
  c.vocab_size = vocab_size;
  return c;
}

ModelConfig ModelConfig::big(std::size_t vocab_size) {
  ModelConfig c;
  c.d_model = 1024;
  c.d_ff = 4096;
  c.heads = 16;
  c.d_k = 64;
  c.d_v = 64;
  c.p_drop = 0.3;
  c.vocab_size = vocab_size;
  return c;
}

void ModelConfig::validate() const {
  if (vocab_size == 0)
    throw ConfigError("model: vocab_size must be positive");
  if (d_model == 0 || d_ff == 0 || heads == 0 || d_k == 0 || d_v == 0 ||
      max_len == 0)
    throw ConfigError("model: all extents must be positive");
  if (p_drop < 0.0 || p_drop >= 1.0)
    throw ConfigError("model: p_drop must be in [0, 1), got " +
                      format_double(p_drop));
  if (eps_ls < 0.0 || eps_ls >= 1.0)
    throw ConfigError("model: eps_ls must be in [0, 1), got " +
                      format_double(eps_ls));
  if (pe_kind == PeKind::sinusoidal && d_model % 2 != 0)
    throw ConfigError("model: sinusoidal encodings need an even d_model, got " +
                      std::to_string(d_model));
  if (ffn_kind == FfnKind::aop &&
      (aop.h_p == 0 || aop.d_pk == 0 || aop.d_pv == 0 || aop.n_p == 0))
    throw ConfigError("model: attention-over-parameters extents must be "
                      "positive");
}

void TransformerParams::build_structure(const MakeFn& make) {
  const ModelConfig& c = cfg_;

  embedding_ = make("embedding", {c.vocab_size, c.d_model}, Init::gauss);
  if (!c.tie_weights)
    out_proj_ = make("out_proj", {c.vocab_size, c.d_model}, Init::gauss);
  if (c.pe_kind == PeKind::learned)
    learned_pe_ = make("pe", {c.max_len, c.d_model}, Init::gauss);

  auto mha = [&](const std::string& prefix) {
    MultiHeadParams p;
    for (std::size_t i = 0; i < c.heads; ++i)
      p.wq.push_back(make(prefix + ".wq." + std::to_string(i),
                          {c.d_model, c.d_k}, Init::glorot));
    for (std::size_t i = 0; i < c.heads; ++i)
      p.wk.push_back(make(prefix + ".wk." + std::to_string(i),
                          {c.d_model, c.d_k}, Init::glorot));
    for (std::size_t i = 0; i < c.heads; ++i)
      p.wv.push_back(make(prefix + ".wv." + std::to_string(i),
                          {c.d_model, c.d_v}, Init::glorot));
    p.wo = make(prefix + ".wo", {c.heads * c.d_v, c.d_model}, Init::glorot);
    return p;
  };
  auto ffn = [&](const std::string& prefix) {
    FfnParams p;
    p.w1 = make(prefix + ".w1", {c.d_model, c.d_ff}, Init::glorot);
    p.b1 = make(prefix + ".b1", {c.d_ff}, Init::zero);
    p.w2 = make(prefix + ".w2", {c.d_ff, c.d_model}, Init::glorot);
    p.b2 = make(prefix + ".b2", {c.d_model}, Init::zero);
    return p;
  };
  auto aop = [&](const std::string& prefix) {
    AopParams p;
    for (std::size_t i = 0; i < c.aop.h_p; ++i)
      p.wq.push_back(make(prefix + ".wq." + std::to_string(i),
                          {c.d_model, c.aop.d_pk}, Init::glorot));
    for (std::size_t i = 0; i < c.aop.h_p; ++i)
      p.keys.push_back(make(prefix + ".keys." + std::to_string(i),
                            {c.aop.n_p, c.aop.d_pk}, Init::gauss));
    for (std::size_t i = 0; i < c.aop.h_p; ++i)
      p.values.push_back(make(prefix + ".values." + std::to_string(i),
                              {c.aop.n_p, c.aop.d_pv}, Init::gauss));
    p.wo = make(prefix + ".wo", {c.aop.h_p * c.aop.d_pv, c.d_model},
                Init::glorot);
    return p;
  };
  auto norm = [&](const std::string& prefix) {
    LayerNormParams p;
    p.gain = make(prefix + ".gain", {c.d_model}, Init::one);
    p.bias = make(prefix + ".bias", {c.d_model}, Init::zero);
    return p;
  };

  for (std::size_t l = 0; l < c.n_layers; ++l) {
    const std::string base = "enc." + std::to_string(l);
    EncoderLayerParams layer;
    layer.self_attn = mha(base + ".self");
    if (c.ffn_kind == FfnKind::relu_ffn)
      layer.ffn = ffn(base + ".ffn");
    else
      layer.aop = aop(base + ".aop");
    layer.norm1 = norm(base + ".norm1");
    layer.norm2 = norm(base + ".norm2");
    enc_.push_back(std::move(layer));
  }
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    const std::string base = "dec." + std::to_string(l);
    DecoderLayerParams layer;
    layer.self_attn = mha(base + ".self");
    layer.cross_attn = mha(base + ".cross");
    if (c.ffn_kind == FfnKind::relu_ffn)
      layer.ffn = ffn(base + ".ffn");
    else
      layer.aop = aop(base + ".aop");
    layer.norm1 = norm(base + ".norm1");
    layer.norm2 = norm(base + ".norm2");
    layer.norm3 = norm(base + ".norm3");
    dec_.push_back(std::move(layer));
  }
}

TransformerParams::TransformerParams(const ModelConfig& cfg,
                                     std::uint64_t init_seed) {
  cfg.validate();
  cfg_ = cfg;
  Rng rng(init_seed);
  const double emb_stddev = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));
  build_structure([&](std::string name, std::vector<std::size_t> shape,
                      Init kind) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    std::vector<double> v(n, 0.0);
    switch (kind) {
      case Init::zero:
        break;
      case Init::one:
        v.assign(n, 1.0);
        break;
      case Init::glorot: {
        const double a =
            std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
        for (double& x : v) x = (2.0 * rng.next_double() - 1.0) * a;
        break;
      }
      case Init::gauss:
        for (double& x : v) x = rng.next_gaussian() * emb_stddev;
        break;
    }
    Tensor t(std::move(shape), std::move(v), /*requires_grad=*/true);
    registry_.emplace_back(std::move(name), t);
    return t;
  });
  if (cfg_.pe_kind == PeKind::sinusoidal)
    sin_table_ = sinusoidal_pe(cfg_.max_len, cfg_.d_model);
}

TransformerParams TransformerParams::zeroed(const ModelConfig& cfg) {
  cfg.validate();
  TransformerParams p;
  p.cfg_ = cfg;
  p.build_structure([&p](std::string name, std::vector<std::size_t> shape,
                         Init) {
    Tensor t = Tensor::zeros(std::move(shape), /*requires_grad=*/true);
    p.registry_.emplace_back(std::move(name), t);
    return t;
  });
  if (cfg.pe_kind == PeKind::sinusoidal)
    p.sin_table_ = sinusoidal_pe(cfg.max_len, cfg.d_model);
  return p;
}

Tensor TransformerParams::parameter(const std::string& name) const {
  for (const auto& [n, t] : registry_)
    if (n == name) return t;
  throw ContractError("TransformerParams: no parameter named \"" + name +
                      "\"");
}

Tensor TransformerParams::positional_rows(Graph& g, std::size_t n) const {
  if (n == 0) throw ContractError("positional_rows: need at least one row");
  if (cfg_.pe_kind == PeKind::learned) {
    if (n > cfg_.max_len)
      throw ConfigError("positional_rows: sequence length " +
                        std::to_string(n) +
                        " exceeds the learned table's max_len " +
                        std::to_string(cfg_.max_len));
    std::vector<int> ids(n);
    for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<int>(i);
    return gather_rows(g, learned_pe_, ids);
  }
  if (n <= cfg_.max_len) {
    const std::size_t d = cfg_.d_model;
    std::vector<double> v(sin_table_.values().begin(),
                          sin_table_.values().begin() + n * d);
    return Tensor({n, d}, std::move(v));
  }
  return sinusoidal_pe(n, cfg_.d_model);
}

Tensor sinusoidal_pe(std::size_t max_len, std::size_t d_model) {
  if (d_model % 2 != 0)
    throw ConfigError("sinusoidal_pe: d_model must be even, got " +
                      std::to_string(d_model));
  if (max_len == 0 || d_model == 0)
    throw ConfigError("sinusoidal_pe: extents must be positive");
  std::vector<double> v(max_len * d_model);
  for (std::size_t pos = 0; pos < max_len; ++pos) {
    for (std::size_t i = 0; 2 * i < d_model; ++i) {
      const double freq =
          std::pow(10000.0, -(2.0 * static_cast<double>(i)) /
                                static_cast<double>(d_model));
      const double angle = static_cast<double>(pos) * freq;
      v[pos * d_model + 2 * i] = std::sin(angle);
      v[pos * d_model + 2 * i + 1] = std::cos(angle);
    }
  }
  return Tensor({max_len, d_model}, std::move(v));
}

Tensor embed(Graph& g, const TransformerParams& p, std::span<const int> tokens,
             Mode mode, Rng& rng) {
  const ModelConfig& c = p.config();
  Tensor e = gather_rows(g, p.embedding(), tokens);
  e = scale(g, e, std::sqrt(static_cast<double>(c.d_model)));
  e = add(g, e, p.positional_rows(g, tokens.size()));
  return dropout(g, e, c.p_drop, mode, rng);
}

Tensor position_wise_ffn(Graph& g, const Tensor& x, const FfnParams& p) {
  Tensor h = relu(g, add_row_bias(g, matmul(g, x, p.w1), p.b1));
  return add_row_bias(g, matmul(g, h, p.w2), p.b2);
}

Tensor sublayer_apply(Graph& g, const Tensor& x,
                      const std::function<Tensor(Graph&, const Tensor&)>& sublayer,
                      const LayerNormParams& norm, double p_drop, Mode mode,
                      Rng& rng) {
  Tensor y = dropout(g, sublayer(g, x), p_drop, mode, rng);
  return layer_norm(g, add(g, x, y), norm.gain, norm.bias);
}

namespace {

AttentionMask memory_mask(std::size_t n_q,
                          std::span<const std::uint8_t> key_is_pad,
                          std::size_t n_k) {
  if (key_is_pad.empty()) return AttentionMask::none(n_q, n_k);
  if (key_is_pad.size() != n_k)
    throw ShapeError("padding flags cover " +
                     std::to_string(key_is_pad.size()) + " keys, expected " +
                     std::to_string(n_k));
  return AttentionMask::key_padding(n_q, key_is_pad);
}

Tensor feed_forward_sublayer(Graph& g, const TransformerParams& p,
                             const Tensor& x, const FfnParams& ffn,
                             const AopParams& aop) {
  if (p.config().ffn_kind == FfnKind::relu_ffn)
    return position_wise_ffn(g, x, ffn);
  return attention_over_parameters(g, aop, x, p.config().d_model);
}

}  // namespace

Tensor encode(Graph& g, const TransformerParams& p, std::span<const int> src,
              std::span<const std::uint8_t> src_is_pad, Mode mode, Rng& rng,
              ForwardTrace* trace) {
  const ModelConfig& c = p.config();
  const std::size_t n = src.size();
  AttentionMask mask = memory_mask(n, src_is_pad, n);

  Tensor x = embed(g, p, src, mode, rng);
  for (const EncoderLayerParams& layer : p.encoder()) {
    x = sublayer_apply(
        g, x,
        [&](Graph& gg, const Tensor& in) {
          MultiHeadResult r =
              multi_head_attention(gg, layer.self_attn, in, in, in, mask);
          if (trace) trace->enc_self.push_back(std::move(r.head_weights));
          return r.output;
        },
        layer.norm1, c.p_drop, mode, rng);
    x = sublayer_apply(
        g, x,
        [&](Graph& gg, const Tensor& in) {
          return feed_forward_sublayer(gg, p, in, layer.ffn, layer.aop);
        },
        layer.norm2, c.p_drop, mode, rng);
  }
  return x;
}

Tensor decode_step(Graph& g, const TransformerParams& p, const Tensor& memory,
                   std::span<const int> tgt_in,
                   std::span<const std::uint8_t> src_is_pad,
                   std::span<const std::uint8_t> tgt_is_pad, Mode mode,
                   Rng& rng, ForwardTrace* trace) {
  const ModelConfig& c = p.config();
  const std::size_t n = tgt_in.size();
  if (memory.rank() != 2 || memory.cols() != c.d_model)
    throw ShapeError("decode_step: memory " + memory.shape_str() +
                     " does not match d_model " + std::to_string(c.d_model));

  AttentionMask self_mask = AttentionMask::causal(n);
  if (!tgt_is_pad.empty()) {
    if (tgt_is_pad.size() != n)
      throw ShapeError("decode_step: target padding flags cover " +
                       std::to_string(tgt_is_pad.size()) +
                       " positions, expected " + std::to_string(n));
    self_mask =
        self_mask.combined_with(AttentionMask::key_padding(n, tgt_is_pad));
  }
  AttentionMask cross_mask = memory_mask(n, src_is_pad, memory.rows());

  Tensor x = embed(g, p, tgt_in, mode, rng);
  for (const DecoderLayerParams& layer : p.decoder()) {
    x = sublayer_apply(
        g, x,
        [&](Graph& gg, const Tensor& in) {
          MultiHeadResult r = multi_head_attention(gg, layer.self_attn, in,
                                                   in, in, self_mask);
          if (trace) trace->dec_self.push_back(std::move(r.head_weights));
          return r.output;
        },
        layer.norm1, c.p_drop, mode, rng);
    x = sublayer_apply(
        g, x,
        [&](Graph& gg, const Tensor& in) {
          MultiHeadResult r = multi_head_attention(
              gg, layer.cross_attn, in, memory, memory, cross_mask);
          if (trace) trace->cross.push_back(std::move(r.head_weights));
          return r.output;
        },
        layer.norm2, c.p_drop, mode, rng);
    x = sublayer_apply(
        g, x,
        [&](Graph& gg, const Tensor& in) {
          return feed_forward_sublayer(gg, p, in, layer.ffn, layer.aop);
        },
        layer.norm3, c.p_drop, mode, rng);
  }
  return matmul(g, x, transpose(g, p.output_projection()));
}

std::uint64_t parameter_count(const ModelConfig& cfg) {
  cfg.validate();
  TransformerParams probe;
  probe.cfg_ = cfg;
  std::uint64_t count = 0;
  probe.build_structure([&count](std::string, std::vector<std::size_t> shape,
                                 TransformerParams::Init) {
    std::uint64_t n = 1;
    for (std::size_t e : shape) n *= e;
    count += n;
    return Tensor();
  });
  return count;
}

std::string model_config_to_text(const ModelConfig& cfg) {
  std::string out;
  auto line = [&out](const std::string& k, const std::string& v) {
    out += k + " = " + v + "\n";
  };
  line("n_layers", std::to_string(cfg.n_layers));
  line("d_model", std::to_string(cfg.d_model));
  line("d_ff", std::to_string(cfg.d_ff));
  line("heads", std::to_string(cfg.heads));
  line("d_k", std::to_string(cfg.d_k));
  line("d_v", std::to_string(cfg.d_v));
  line("p_drop", format_double(cfg.p_drop));
  line("eps_ls", format_double(cfg.eps_ls));
  line("vocab_size", std::to_string(cfg.vocab_size));
  line("max_len", std::to_string(cfg.max_len));
  line("pe", cfg.pe_kind == PeKind::sinusoidal ? "sinusoidal" : "learned");
  line("ffn", cfg.ffn_kind == FfnKind::relu_ffn ? "relu_ffn" : "aop");
  if (cfg.ffn_kind == FfnKind::aop) {
    line("aop_heads", std::to_string(cfg.aop.h_p));
    line("aop_d_pk", std::to_string(cfg.aop.d_pk));
    line("aop_d_pv", std::to_string(cfg.aop.d_pv));
    line("aop_n_p", std::to_string(cfg.aop.n_p));
  }
  line("tie_weights", cfg.tie_weights ? "true" : "false");
  return out;
}

ModelConfig model_config_from_text(const std::string& text) {
  ModelConfig cfg;
  for (const KeyValue& kv : parse_key_values(text)) {
    const std::string& k = kv.key;
    const std::string& v = kv.value;
    if (k == "n_layers") cfg.n_layers = parse_uint(k, v);
    else if (k == "d_model") cfg.d_model = parse_uint(k, v);
    else if (k == "d_ff") cfg.d_ff = parse_uint(k, v);
    else if (k == "heads") cfg.heads = parse_uint(k, v);
    else if (k == "d_k") cfg.d_k = parse_uint(k, v);
    else if (k == "d_v") cfg.d_v = parse_uint(k, v);
    else if (k == "p_drop") cfg.p_drop = parse_double(k, v);
    else if (k == "eps_ls") cfg.eps_ls = parse_double(k, v);
    else if (k == "vocab_size") cfg.vocab_size = parse_uint(k, v);
    else if (k == "max_len") cfg.max_len = parse_uint(k, v);
    else if (k == "pe") {
      if (v == "sinusoidal") cfg.pe_kind = PeKind::sinusoidal;
      else if (v == "learned") cfg.pe_kind = PeKind::learned;
      else throw ConfigError("pe: expected sinusoidal or learned, got \"" +
                             v + "\"");
    } else if (k == "ffn") {
      if (v == "relu_ffn") cfg.ffn_kind = FfnKind::relu_ffn;
      else if (v == "aop") cfg.ffn_kind = FfnKind::aop;
      else throw ConfigError("ffn: expected relu_ffn or aop, got \"" + v +
                             "\"");
    } else if (k == "aop_heads") cfg.aop.h_p = parse_uint(k, v);
    else if (k == "aop_d_pk") cfg.aop.d_pk = parse_uint(k, v);
    else if (k == "aop_d_pv") cfg.aop.d_pv = parse_uint(k, v);
    else if (k == "aop_n_p") cfg.aop.n_p = parse_uint(k, v);
    else if (k == "tie_weights") cfg.tie_weights = parse_bool(k, v);
    // other keys may share the block (task metadata etc.); not ours to judge
  }
  return cfg;
}

}  // namespace atnl
