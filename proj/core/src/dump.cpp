#include "atnl/dump.hpp"

#include <cstdio>

#include "atnl/errors.hpp"
#include "atnl/graph.hpp"
#include "atnl/rng.hpp"

namespace atnl {

namespace {

std::string short_float(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

void write_token_line(std::ostream& out, const char* label,
                      const std::vector<std::string>& tokens) {
  out << label;
  for (const std::string& t : tokens) out << ' ' << t;
  out << '\n';
}

void write_kind(std::ostream& out, const char* kind,
                const std::vector<std::vector<Tensor>>& layers,
                const std::vector<std::string>& q_tokens,
                const std::vector<std::string>& k_tokens) {
  for (std::size_t layer = 0; layer < layers.size(); ++layer) {
    for (std::size_t head = 0; head < layers[layer].size(); ++head) {
      const Tensor& w = layers[layer][head];
      if (w.rows() != q_tokens.size() || w.cols() != k_tokens.size()) {
        throw ContractError(std::string("attention dump: ") + kind +
                            " weights are " + shape_to_string(w.shape()) +
                            " but " + std::to_string(q_tokens.size()) + "x" +
                            std::to_string(k_tokens.size()) +
                            " tokens were given");
      }
      out << "layer=" << layer << " head=" << head << " kind=" << kind
          << '\n';
      write_token_line(out, "tokens_q:", q_tokens);
      write_token_line(out, "tokens_k:", k_tokens);
      for (std::size_t i = 0; i < w.rows(); ++i) {
        for (std::size_t j = 0; j < w.cols(); ++j) {
          if (j > 0) out << ' ';
          out << short_float(w(i, j));
        }
        out << '\n';
      }
      out << '\n';
    }
  }
}

}  // namespace

void write_attention_dump(std::ostream& out, const ForwardTrace& trace,
                          const std::vector<std::string>& enc_tokens,
                          const std::vector<std::string>& dec_tokens) {
  write_kind(out, "enc_self", trace.enc_self, enc_tokens, enc_tokens);
  write_kind(out, "dec_self", trace.dec_self, dec_tokens, dec_tokens);
  write_kind(out, "cross", trace.cross, dec_tokens, enc_tokens);
}

void dump_attention(std::ostream& out, const TransformerParams& params,
                    std::span<const int> src, const Vocabulary& vocab) {
  if (src.empty()) throw ContractError("cannot dump attention for an empty input");
  const std::size_t max_len = params.config().max_len;
  if (src.size() > max_len) {
    throw ConfigError("input length " + std::to_string(src.size()) +
                      " exceeds max_len " + std::to_string(max_len));
  }

  std::vector<int> dec_in;
  dec_in.reserve(src.size());
  dec_in.push_back(kBosId);
  dec_in.insert(dec_in.end(), src.begin(), src.end() - 1);

  Graph graph(false);
  Rng rng(0);
  ForwardTrace trace;
  Tensor memory = encode(graph, params, src, {}, Mode::eval, rng, &trace);
  decode_step(graph, params, memory, dec_in, {}, {}, Mode::eval, rng, &trace);

  std::vector<std::string> enc_tokens;
  for (int id : src) enc_tokens.push_back(vocab.symbol_of(id));
  std::vector<std::string> dec_tokens;
  for (int id : dec_in) dec_tokens.push_back(vocab.symbol_of(id));

  write_attention_dump(out, trace, enc_tokens, dec_tokens);
}

}  // namespace atnl
