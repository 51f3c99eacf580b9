#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "atnl/graph.hpp"
#include "atnl/model.hpp"

namespace atnl {

/// Next-token interface the searches run against. The prefix always begins
/// with BOS; implementations return one natural-log probability per
/// vocabulary id for the next position.
class SequenceScorer {
 public:
  virtual ~SequenceScorer() = default;
  virtual std::size_t vocab_size() const = 0;
  virtual std::vector<double> next_log_probs(std::span<const int> prefix) = 0;
};

/// Scorer backed by a Transformer: the source is encoded once, then the
/// decoder is re-run per prefix with dropout off and no tape.
class TransformerScorer : public SequenceScorer {
 public:
  TransformerScorer(const TransformerParams& params, std::span<const int> src);

  std::size_t vocab_size() const override;
  std::vector<double> next_log_probs(std::span<const int> prefix) override;

 private:
  const TransformerParams& params_;
  Graph graph_;
  Rng rng_;
  Tensor memory_;
};

/// ((5 + length) / 6)^alpha. Hypothesis length counts emitted tokens after
/// BOS, including the terminating EOS, so it is always at least 1.
double length_penalty(std::size_t length, double alpha);

struct DecodeResult {
  std::vector<int> tokens;  // BOS and EOS stripped
  double score = 0.0;       // cumulative logprob / length_penalty
  bool finished = false;    // EOS was emitted within the length cap
};

/// Argmax decoding until EOS or src_len + max_extra emitted tokens; ties
/// resolve to the lowest token id.
DecodeResult greedy_decode(SequenceScorer& scorer, std::size_t src_len,
                           std::size_t max_extra);

/// Beam search over penalized cumulative log probability. Each step ranks
/// the top 2*beam_size extensions of every live hypothesis; EOS extensions
/// retire to the finished pool and give up their beam slot, which makes
/// beam_size == 1 coincide with greedy_decode exactly. With early_stop on,
/// the search ends as soon as no live hypothesis can still beat the best
/// finished score. Ties break toward the lexicographically smaller token
/// sequence, which also prefers the shorter of two nested hypotheses.
DecodeResult beam_search(SequenceScorer& scorer, std::size_t src_len,
                         std::size_t beam_size, double alpha,
                         std::size_t max_extra, bool early_stop = true);

/// Transformer front ends; the source must be non-empty.
DecodeResult greedy_decode(const TransformerParams& params,
                           std::span<const int> src, std::size_t max_extra);
DecodeResult beam_search(const TransformerParams& params,
                         std::span<const int> src, std::size_t beam_size,
                         double alpha, std::size_t max_extra);

}  // namespace atnl
