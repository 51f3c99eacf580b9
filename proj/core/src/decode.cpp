#include "atnl/decode.hpp"

#include <algorithm>
#include <cmath>

#include "atnl/data.hpp"
#include "atnl/errors.hpp"

namespace atnl {

TransformerScorer::TransformerScorer(const TransformerParams& params,
                                     std::span<const int> src)
    : params_(params), graph_(false), rng_(0) {
  if (src.empty()) throw ContractError("cannot decode an empty source");
  memory_ = encode(graph_, params_, src, {}, Mode::eval, rng_);
}

std::size_t TransformerScorer::vocab_size() const {
  return params_.config().vocab_size;
}

std::vector<double> TransformerScorer::next_log_probs(std::span<const int> prefix) {
  if (prefix.empty()) throw ContractError("scorer prefix must begin with BOS");
  Tensor logits = decode_step(graph_, params_, memory_, prefix, {}, {},
                              Mode::eval, rng_);
  const std::size_t last = logits.rows() - 1;
  const std::size_t vocab = logits.cols();
  double mx = logits(last, 0);
  for (std::size_t c = 1; c < vocab; ++c) mx = std::max(mx, logits(last, c));
  double se = 0.0;
  for (std::size_t c = 0; c < vocab; ++c) se += std::exp(logits(last, c) - mx);
  const double lse = mx + std::log(se);
  std::vector<double> out(vocab);
  for (std::size_t c = 0; c < vocab; ++c) out[c] = logits(last, c) - lse;
  return out;
}

double length_penalty(std::size_t length, double alpha) {
  if (length < 1) throw ContractError("length_penalty needs length >= 1");
  return std::pow((5.0 + static_cast<double>(length)) / 6.0, alpha);
}

namespace {

struct Hypothesis {
  std::vector<int> tokens;  // starts with BOS
  double logprob = 0.0;
};

// true when a beats b: higher score first, then the lexicographically
// smaller sequence (which also puts a prefix before its extensions)
bool better(double score_a, const std::vector<int>& a, double score_b,
            const std::vector<int>& b) {
  if (score_a != score_b) return score_a > score_b;
  return a < b;
}

std::vector<int> strip_delimiters(const std::vector<int>& tokens, bool finished) {
  std::vector<int> out(tokens.begin() + 1, tokens.end());
  if (finished && !out.empty()) out.pop_back();
  return out;
}

std::vector<double> checked_log_probs(SequenceScorer& scorer,
                                      const std::vector<int>& prefix) {
  std::vector<double> lp = scorer.next_log_probs(prefix);
  if (lp.size() != scorer.vocab_size()) {
    throw ContractError("scorer returned " + std::to_string(lp.size()) +
                        " log-probs for a vocabulary of " +
                        std::to_string(scorer.vocab_size()));
  }
  return lp;
}

}  // namespace

DecodeResult greedy_decode(SequenceScorer& scorer, std::size_t src_len,
                           std::size_t max_extra) {
  if (src_len == 0) throw ContractError("cannot decode an empty source");
  const std::size_t cap = src_len + max_extra;

  Hypothesis hyp;
  hyp.tokens.push_back(kBosId);
  bool finished = false;
  while (hyp.tokens.size() - 1 < cap) {
    const std::vector<double> lp = checked_log_probs(scorer, hyp.tokens);
    std::size_t best = 0;
    for (std::size_t c = 1; c < lp.size(); ++c) {
      if (lp[c] > lp[best]) best = c;
    }
    hyp.logprob += lp[best];
    hyp.tokens.push_back(static_cast<int>(best));
    if (static_cast<int>(best) == kEosId) {
      finished = true;
      break;
    }
  }

  DecodeResult result;
  result.finished = finished;
  result.score = hyp.logprob / length_penalty(hyp.tokens.size() - 1, 0.0);
  result.tokens = strip_delimiters(hyp.tokens, finished);
  return result;
}

DecodeResult beam_search(SequenceScorer& scorer, std::size_t src_len,
                         std::size_t beam_size, double alpha,
                         std::size_t max_extra, bool early_stop) {
  if (src_len == 0) throw ContractError("cannot decode an empty source");
  if (beam_size < 1) throw ContractError("beam_size must be >= 1");
  const std::size_t cap = src_len + max_extra;
  const std::size_t vocab = scorer.vocab_size();

  std::vector<Hypothesis> live;
  live.push_back({{kBosId}, 0.0});

  bool have_finished = false;
  Hypothesis best_finished;
  double best_finished_score = 0.0;

  auto offer_finished = [&](Hypothesis h, double score) {
    if (!have_finished ||
        better(score, h.tokens, best_finished_score, best_finished.tokens)) {
      best_finished = std::move(h);
      best_finished_score = score;
      have_finished = true;
    }
  };

  for (std::size_t step = 0; step < cap && !live.empty(); ++step) {
    // per-step budget: each of this step's beam_size best candidates claims a
    // slot, and EOS-extended ones spend theirs on retiring to the pool
    std::size_t width = beam_size;
    struct Candidate {
      std::size_t parent;
      int token;
      double logprob;
    };
    std::vector<Candidate> candidates;
    candidates.reserve(live.size() * std::min<std::size_t>(2 * beam_size, vocab));

    for (std::size_t h = 0; h < live.size(); ++h) {
      const std::vector<double> lp = checked_log_probs(scorer, live[h].tokens);
      std::vector<std::size_t> ids(vocab);
      for (std::size_t c = 0; c < vocab; ++c) ids[c] = c;
      const std::size_t take = std::min<std::size_t>(2 * beam_size, vocab);
      std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(take),
                        ids.end(), [&](std::size_t a, std::size_t b) {
                          if (lp[a] != lp[b]) return lp[a] > lp[b];
                          return a < b;
                        });
      for (std::size_t k = 0; k < take; ++k) {
        candidates.push_back({h, static_cast<int>(ids[k]),
                              live[h].logprob + lp[ids[k]]});
      }
    }

    std::sort(candidates.begin(), candidates.end(),
              [&](const Candidate& a, const Candidate& b) {
                if (a.logprob != b.logprob) return a.logprob > b.logprob;
                if (a.token != b.token) return a.token < b.token;
                return live[a.parent].tokens < live[b.parent].tokens;
              });

    std::vector<Hypothesis> next;
    for (const Candidate& c : candidates) {
      if (next.size() >= width) break;
      Hypothesis h;
      h.tokens = live[c.parent].tokens;
      h.tokens.push_back(c.token);
      h.logprob = c.logprob;
      if (c.token == kEosId) {
        const double score =
            c.logprob / length_penalty(h.tokens.size() - 1, alpha);
        offer_finished(std::move(h), score);
        --width;
      } else {
        next.push_back(std::move(h));
      }
    }
    live = std::move(next);

    if (early_stop && have_finished && !live.empty() &&
        live.front().tokens.size() - 1 < cap) {
      // logprob only falls with extension, so the most optimistic reachable
      // score divides the best live logprob by an extreme of the penalty
      double best_lp = live.front().logprob;
      for (const Hypothesis& h : live) best_lp = std::max(best_lp, h.logprob);
      const std::size_t shortest = live.front().tokens.size();  // +EOS next step
      const double bound =
          std::max(best_lp / length_penalty(shortest, alpha),
                   best_lp / length_penalty(cap, alpha));
      if (bound < best_finished_score) break;
    }
  }

  DecodeResult result;
  if (have_finished) {
    result.finished = true;
    result.score = best_finished_score;
    result.tokens = strip_delimiters(best_finished.tokens, true);
    return result;
  }

  // length cap hit with an empty finished pool: surface the best survivor
  const Hypothesis* best = nullptr;
  double best_score = 0.0;
  for (const Hypothesis& h : live) {
    const double score = h.logprob / length_penalty(h.tokens.size() - 1, alpha);
    if (best == nullptr || better(score, h.tokens, best_score, best->tokens)) {
      best = &h;
      best_score = score;
    }
  }
  if (best == nullptr) throw ContractError("beam search lost every hypothesis");
  result.finished = false;
  result.score = best_score;
  result.tokens = strip_delimiters(best->tokens, false);
  return result;
}

DecodeResult greedy_decode(const TransformerParams& params,
                           std::span<const int> src, std::size_t max_extra) {
  TransformerScorer scorer(params, src);
  return greedy_decode(scorer, src.size(), max_extra);
}

DecodeResult beam_search(const TransformerParams& params,
                         std::span<const int> src, std::size_t beam_size,
                         double alpha, std::size_t max_extra) {
  TransformerScorer scorer(params, src);
  return beam_search(scorer, src.size(), beam_size, alpha, max_extra);
}

}  // namespace atnl
