#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "atnl/data.hpp"
#include "atnl/graph.hpp"
#include "atnl/kv.hpp"
#include "atnl/model.hpp"

namespace atnl {

struct TrainConfig {
  std::size_t warmup_steps = 4000;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double adam_eps = 1e-9;
  std::size_t token_budget = 512;
  std::size_t total_steps = 0;
  std::size_t checkpoint_interval = 200;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Inverse-square-root schedule with linear warmup, 1-indexed:
/// d_model^{-1/2} * min(step^{-1/2}, step * warmup^{-3/2}).
/// Rises until step == warmup_steps, then decays; the two branches agree
/// exactly at the changeover.
double learning_rate(std::size_t step, std::size_t d_model,
                     std::size_t warmup_steps);

/// Adam moments, allocated per parameter in registry order.
class AdamState {
 public:
  explicit AdamState(const TransformerParams& params);

  std::size_t step() const { return step_; }
  const std::vector<double>& first_moment(const std::string& name) const;
  const std::vector<double>& second_moment(const std::string& name) const;

 private:
  friend void adam_step(TransformerParams& params, AdamState& state, double lr,
                        const TrainConfig& cfg);

  std::size_t step_ = 0;
  std::vector<std::pair<std::string, std::vector<double>>> m_;
  std::vector<std::pair<std::string, std::vector<double>>> v_;
};

/// One bias-corrected Adam update from the gradients currently deposited in
/// the parameters' grad slots (absent slots count as zero gradients).
/// Advances moments and the step counter even when lr == 0; a non-finite
/// gradient entry aborts and names the offending parameter.
void adam_step(TransformerParams& params, AdamState& state, double lr,
               const TrainConfig& cfg);

void zero_gradients(TransformerParams& params);

/// Mean cross-entropy against the label-smoothed target distribution:
/// q[target] = 1 - eps_ls and q spreads eps_ls evenly over the remaining
/// non-pad classes. Rows whose target is pad_id are excluded from the mean.
Tensor label_smoothed_loss(Graph& g, const Tensor& logits,
                           std::span<const int> targets, double eps_ls,
                           int pad_id = kPadId);

struct TrainResult {
  std::size_t steps = 0;
  std::vector<double> losses;           // one entry per completed step
  std::vector<std::string> checkpoints;  // in write order, initial first
};

/// Optional stop probe, called after each step with (step, loss).
using StopFn = std::function<bool(std::size_t, double)>;

/// One optimizer step per batch: forward each sequence, average the smoothed
/// losses weighted by target length, backprop, Adam with the warmup schedule.
/// Writes checkpoint-000000.atnl before the first step, then one checkpoint
/// every checkpoint_interval steps plus one at the end. Metrics stream gets
/// one tab-separated line per step: step, loss, lr, tokens_per_sec. All
/// fields except tokens_per_sec are deterministic per seed.
TrainResult train_loop(TransformerParams& params, BatchStream& stream,
                       const TrainConfig& cfg, const std::string& out_dir,
                       std::ostream& metrics,
                       const std::vector<KeyValue>& checkpoint_extra = {},
                       const StopFn& should_stop = {});

/// Teacher-forced per-token argmax accuracy over non-pad target positions.
double token_accuracy(const TransformerParams& params,
                      std::span<const Pair> pairs);

}  // namespace atnl
