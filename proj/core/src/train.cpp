#include "atnl/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

#include "atnl/checkpoint.hpp"
#include "atnl/errors.hpp"
#include "atnl/ops.hpp"

namespace atnl {

void TrainConfig::validate() const {
  if (warmup_steps < 1) throw ConfigError("warmup_steps must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
  if (token_budget < 1) throw ConfigError("token_budget must be >= 1");
}

double learning_rate(std::size_t step, std::size_t d_model,
                     std::size_t warmup_steps) {
  if (step == 0) throw ContractError("learning_rate schedule is 1-indexed");
  if (d_model == 0 || warmup_steps == 0) {
    throw ConfigError("learning_rate needs positive d_model and warmup_steps");
  }
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(warmup_steps);
  // the warmup branch is written as (s/w)/sqrt(w) so that at s == w it
  // collapses to exactly 1/sqrt(w), the decay branch's value
  const double warmup_branch = (s / w) * (1.0 / std::sqrt(w));
  const double decay_branch = 1.0 / std::sqrt(s);
  return (1.0 / std::sqrt(static_cast<double>(d_model))) *
         std::min(decay_branch, warmup_branch);
}

AdamState::AdamState(const TransformerParams& params) {
  for (const auto& [name, t] : params.named_parameters()) {
    m_.emplace_back(name, std::vector<double>(t.numel(), 0.0));
    v_.emplace_back(name, std::vector<double>(t.numel(), 0.0));
  }
}

const std::vector<double>& AdamState::first_moment(const std::string& name) const {
  for (const auto& [n, buf] : m_) {
    if (n == name) return buf;
  }
  throw ContractError("no optimizer state for parameter '" + name + "'");
}

const std::vector<double>& AdamState::second_moment(const std::string& name) const {
  for (const auto& [n, buf] : v_) {
    if (n == name) return buf;
  }
  throw ContractError("no optimizer state for parameter '" + name + "'");
}

void adam_step(TransformerParams& params, AdamState& state, double lr,
               const TrainConfig& cfg) {
  const auto& registry = params.named_parameters();
  if (registry.size() != state.m_.size()) {
    throw ShapeError("optimizer state does not match the parameter registry");
  }
  state.step_ += 1;
  const double t = static_cast<double>(state.step_);
  const double bias1 = 1.0 - std::pow(cfg.beta1, t);
  const double bias2 = 1.0 - std::pow(cfg.beta2, t);

  for (std::size_t p = 0; p < registry.size(); ++p) {
    const std::string& name = registry[p].first;
    Tensor theta = registry[p].second;
    if (state.m_[p].first != name || state.m_[p].second.size() != theta.numel()) {
      throw ShapeError("optimizer state misaligned at parameter '" + name + "'");
    }
    std::vector<double>& m = state.m_[p].second;
    std::vector<double>& v = state.v_[p].second;
    const bool has = theta.has_grad();
    const std::vector<double>* gbuf = has ? &theta.grad() : nullptr;
    std::vector<double>& values = theta.values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = has ? (*gbuf)[i] : 0.0;
      if (!std::isfinite(g)) {
        throw DegenerateInputError("non-finite gradient in parameter '" + name + "'");
      }
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      values[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
    }
  }
}

void zero_gradients(TransformerParams& params) {
  for (const auto& [name, t] : params.named_parameters()) {
    Tensor handle = t;
    if (handle.has_grad()) handle.zero_grad();
  }
}

Tensor label_smoothed_loss(Graph& g, const Tensor& logits,
                           std::span<const int> targets, double eps_ls,
                           int pad_id) {
  if (!logits.defined() || logits.rank() != 2) {
    throw ShapeError("label_smoothed_loss expects rank-2 logits");
  }
  const std::size_t n = logits.rows();
  const std::size_t vocab = logits.cols();
  if (targets.size() != n) {
    throw ShapeError("label_smoothed_loss got " + std::to_string(targets.size()) +
                     " targets for " + std::to_string(n) + " rows");
  }
  if (!(eps_ls >= 0.0 && eps_ls < 1.0)) {
    throw ConfigError("eps_ls must lie in [0, 1)");
  }
  if (eps_ls > 0.0 && vocab < 3) {
    throw ConfigError("label smoothing needs at least 3 classes");
  }
  if (pad_id < 0 || static_cast<std::size_t>(pad_id) >= vocab) {
    throw ConfigError("pad id " + std::to_string(pad_id) +
                      " outside vocabulary of " + std::to_string(vocab));
  }
  for (int t : targets) {
    if (t < 0 || static_cast<std::size_t>(t) >= vocab) {
      throw VocabError("target id " + std::to_string(t) +
                       " outside vocabulary of " + std::to_string(vocab));
    }
  }

  std::size_t n_used = 0;
  for (int t : targets) n_used += t == pad_id ? 0 : 1;
  if (n_used == 0) throw DegenerateInputError("all targets are padding");

  const std::vector<double>& x = logits.values();
  const double off_mass = eps_ls > 0.0
                              ? eps_ls / static_cast<double>(vocab - 2)
                              : 0.0;

  std::vector<double> lse(n, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (targets[i] == pad_id) continue;
    const double* row = x.data() + i * vocab;
    double mx = row[0];
    for (std::size_t c = 1; c < vocab; ++c) mx = std::max(mx, row[c]);
    double se = 0.0;
    for (std::size_t c = 0; c < vocab; ++c) se += std::exp(row[c] - mx);
    lse[i] = mx + std::log(se);

    double rest = 0.0;
    if (off_mass > 0.0) {
      for (std::size_t c = 0; c < vocab; ++c) {
        if (static_cast<int>(c) != targets[i] && static_cast<int>(c) != pad_id) {
          rest += row[c];
        }
      }
    }
    // cross-entropy of the smoothed target row against log-softmax;
    // all q mass multiplies lse, so it contributes exactly one lse term
    total += lse[i] - (1.0 - eps_ls) * row[targets[i]] - off_mass * rest;
  }

  Tensor out = Tensor::scalar(total / static_cast<double>(n_used),
                              logits.requires_grad());
  if (g.recording() && out.requires_grad()) {
    std::vector<int> tgt(targets.begin(), targets.end());
    Tensor in = logits;
    g.record({in}, out, [in, out, tgt, lse = std::move(lse), n_used, vocab,
                         eps_ls, off_mass, pad_id](AdjointStore& ctx) {
      std::span<const double> gout = ctx.of(out);
      if (gout.empty()) return;
      const double scale = gout[0] / static_cast<double>(n_used);
      std::vector<double>& gx = ctx.accum(in);
      const std::vector<double>& xv = in.values();
      const std::size_t rows = tgt.size();
      for (std::size_t i = 0; i < rows; ++i) {
        if (tgt[i] == pad_id) continue;
        const double* row = xv.data() + i * vocab;
        double* grow = gx.data() + i * vocab;
        for (std::size_t c = 0; c < vocab; ++c) {
          const double p = std::exp(row[c] - lse[i]);
          double q = 0.0;
          if (static_cast<int>(c) == tgt[i]) {
            q = 1.0 - eps_ls;
          } else if (static_cast<int>(c) != pad_id) {
            q = off_mass;
          }
          grow[c] += scale * (p - q);
        }
      }
    });
  }
  return out;
}

namespace {

struct SequenceView {
  std::vector<int> src;
  std::vector<int> tgt_in;
  std::vector<int> tgt_out;
};

// strip batch padding back off; per-sequence forwards need no masks
SequenceView strip_row(const Batch& batch, std::size_t row) {
  SequenceView s;
  for (std::size_t j = 0; j < batch.src_len(); ++j) {
    if (batch.src_pad[row][j] == 0) s.src.push_back(batch.src[row][j]);
  }
  for (std::size_t j = 0; j < batch.tgt_len(); ++j) {
    if (batch.tgt_pad[row][j] == 0) {
      s.tgt_in.push_back(batch.tgt_in[row][j]);
      s.tgt_out.push_back(batch.tgt_out[row][j]);
    }
  }
  return s;
}

std::string checkpoint_path(const std::string& out_dir, std::size_t step) {
  char name[40];
  std::snprintf(name, sizeof name, "checkpoint-%06zu.atnl", step);
  return out_dir.empty() ? std::string(name) : out_dir + "/" + name;
}

}  // namespace

TrainResult train_loop(TransformerParams& params, BatchStream& stream,
                       const TrainConfig& cfg, const std::string& out_dir,
                       std::ostream& metrics,
                       const std::vector<KeyValue>& checkpoint_extra,
                       const StopFn& should_stop) {
  cfg.validate();
  const ModelConfig& mc = params.config();
  TrainResult result;

  std::size_t last_saved = 0;
  auto save = [&](std::size_t step) {
    const std::string path = checkpoint_path(out_dir, step);
    save_checkpoint(path, params, checkpoint_extra);
    result.checkpoints.push_back(path);
    last_saved = step;
  };
  save(0);

  AdamState adam(params);
  Rng base(cfg.seed);

  for (std::size_t step = 1; step <= cfg.total_steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    const Batch& batch = stream.next();
    Graph graph;
    Rng rng = base.split(step);

    std::size_t total_targets = 0;
    std::size_t tokens = 0;
    std::vector<SequenceView> rows;
    rows.reserve(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b) {
      rows.push_back(strip_row(batch, b));
      total_targets += rows.back().tgt_out.size();
      tokens += rows.back().src.size() + rows.back().tgt_out.size();
    }

    Tensor total;
    for (const SequenceView& s : rows) {
      Tensor memory = encode(graph, params, s.src, {}, Mode::train, rng);
      Tensor logits = decode_step(graph, params, memory, s.tgt_in, {}, {},
                                  Mode::train, rng);
      Tensor loss = label_smoothed_loss(graph, logits, s.tgt_out, mc.eps_ls);
      const double weight = static_cast<double>(s.tgt_out.size()) /
                            static_cast<double>(total_targets);
      Tensor weighted = scale(graph, loss, weight);
      total = total.defined() ? add(graph, total, weighted) : weighted;
    }

    const double loss_value = total.item();
    if (!std::isfinite(loss_value)) {
      throw DegenerateInputError("non-finite loss at step " + std::to_string(step));
    }
    graph.backward(total);

    const double lr = learning_rate(step, mc.d_model, cfg.warmup_steps);
    adam_step(params, adam, lr, cfg);
    zero_gradients(params);

    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    const double tps = static_cast<double>(tokens) / std::max(elapsed, 1e-9);
    char line[128];
    std::snprintf(line, sizeof line, "%zu\t%.17g\t%.17g\t%.6g\n", step,
                  loss_value, lr, tps);
    metrics << line;
    metrics.flush();

    result.losses.push_back(loss_value);
    result.steps = step;

    if (cfg.checkpoint_interval > 0 && step % cfg.checkpoint_interval == 0) {
      save(step);
    }
    if (should_stop && should_stop(step, loss_value)) break;
  }

  if (result.steps > last_saved) save(result.steps);
  return result;
}

double token_accuracy(const TransformerParams& params,
                      std::span<const Pair> pairs) {
  if (pairs.empty()) throw ContractError("token_accuracy needs at least one pair");
  Graph graph(false);
  Rng rng(0);
  std::size_t correct = 0;
  std::size_t total = 0;
  for (const Pair& p : pairs) {
    std::vector<int> tgt_in;
    tgt_in.reserve(p.tgt.size() + 1);
    tgt_in.push_back(kBosId);
    tgt_in.insert(tgt_in.end(), p.tgt.begin(), p.tgt.end());
    std::vector<int> tgt_out = p.tgt;
    tgt_out.push_back(kEosId);

    Tensor memory = encode(graph, params, p.src, {}, Mode::eval, rng);
    Tensor logits = decode_step(graph, params, memory, tgt_in, {}, {},
                                Mode::eval, rng);
    for (std::size_t i = 0; i < tgt_out.size(); ++i) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < logits.cols(); ++c) {
        if (logits(i, c) > logits(i, best)) best = c;
      }
      correct += static_cast<int>(best) == tgt_out[i] ? 1 : 0;
      ++total;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace atnl
