#pragma once

// Attention-weight export: runs the model over one input and writes every
// head's weight matrix as diff-friendly text. Each block is
//
//   layer=0 head=1 kind=enc_self
//   tokens_q: a b c
//   tokens_k: a b c
//   <one row of 6-significant-digit floats per query position>
//
// separated by blank lines, ordered enc_self, dec_self, cross.

#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "atnl/data.hpp"
#include "atnl/model.hpp"

namespace atnl {

/// Formats an already-captured trace. The token vectors label query and
/// key positions: encoder rows carry enc_tokens, decoder rows dec_tokens.
/// Throws ContractError when matrix extents disagree with the labels.
void write_attention_dump(std::ostream& out, const ForwardTrace& trace,
                          const std::vector<std::string>& enc_tokens,
                          const std::vector<std::string>& dec_tokens);

/// Encodes src and teacher-forces the decoder on the shifted source (BOS
/// plus all but the last symbol), dropout off, then writes the full dump.
/// Throws ConfigError when src is longer than the model's max_len and
/// ContractError when src is empty.
void dump_attention(std::ostream& out, const TransformerParams& params,
                    std::span<const int> src, const Vocabulary& vocab);

}  // namespace atnl
