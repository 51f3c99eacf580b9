// Microbenchmarks for the hot paths: dense matmul, attention forward passes,
// a full optimizer step, and greedy decoding. Shapes follow the small model
// used by the synthetic tasks so the numbers track what training actually
// spends its time on.
#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "atnl/attention.hpp"
#include "atnl/decode.hpp"
#include "atnl/graph.hpp"
#include "atnl/model.hpp"
#include "atnl/ops.hpp"
#include "atnl/rng.hpp"
#include "atnl/tensor.hpp"
#include "atnl/train.hpp"

namespace {

using namespace atnl;

Tensor random_matrix(std::size_t rows, std::size_t cols, Rng& rng,
                     bool requires_grad = false) {
  std::vector<double> values(rows * cols);
  for (double& v : values) v = rng.next_gaussian();
  return Tensor::matrix(rows, cols, std::move(values), requires_grad);
}

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.n_layers = 2;
  cfg.d_model = 64;
  cfg.d_ff = 128;
  cfg.heads = 4;
  cfg.d_k = 16;
  cfg.d_v = 16;
  cfg.vocab_size = 16;
  cfg.max_len = 64;
  return cfg;
}

std::vector<int> sample_tokens(std::size_t n) {
  std::vector<int> tokens(n);
  for (std::size_t i = 0; i < n; ++i)
    tokens[i] = 3 + static_cast<int>(i % 13);
  return tokens;
}

void bm_matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  Tensor a = random_matrix(n, n, rng);
  Tensor b = random_matrix(n, n, rng);
  Graph g(false);
  for (auto _ : state) {
    Tensor c = matmul(g, a, b);
    benchmark::DoNotOptimize(c.values().data());
  }
  state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(bm_matmul)->Arg(32)->Arg(64)->Arg(128)->Arg(256);

void bm_scaled_attention(benchmark::State& state) {
  const auto len = static_cast<std::size_t>(state.range(0));
  const std::size_t d_k = 64;
  Rng rng(2);
  Tensor q = random_matrix(len, d_k, rng);
  Tensor k = random_matrix(len, d_k, rng);
  Tensor v = random_matrix(len, d_k, rng);
  AttentionMask mask = AttentionMask::causal(len);
  Graph g(false);
  for (auto _ : state) {
    AttentionResult r = scaled_dot_product_attention(g, q, k, v, mask);
    benchmark::DoNotOptimize(r.output.values().data());
  }
}
BENCHMARK(bm_scaled_attention)->Arg(16)->Arg(64)->Arg(128);

void bm_multi_head_attention(benchmark::State& state) {
  const auto len = static_cast<std::size_t>(state.range(0));
  const std::size_t d_model = 64, heads = 4, d_k = 16;
  Rng rng(3);
  MultiHeadParams p;
  for (std::size_t h = 0; h < heads; ++h) {
    p.wq.push_back(random_matrix(d_model, d_k, rng));
    p.wk.push_back(random_matrix(d_model, d_k, rng));
    p.wv.push_back(random_matrix(d_model, d_k, rng));
  }
  p.wo = random_matrix(heads * d_k, d_model, rng);
  Tensor x = random_matrix(len, d_model, rng);
  AttentionMask mask = AttentionMask::none(len, len);
  Graph g(false);
  for (auto _ : state) {
    MultiHeadResult r = multi_head_attention(g, p, x, x, x, mask);
    benchmark::DoNotOptimize(r.output.values().data());
  }
}
BENCHMARK(bm_multi_head_attention)->Arg(8)->Arg(32)->Arg(64);

void bm_encoder_forward(benchmark::State& state) {
  const auto len = static_cast<std::size_t>(state.range(0));
  TransformerParams params(small_config(), 4);
  std::vector<int> src = sample_tokens(len);
  std::vector<std::uint8_t> no_pad(len, 0);
  Rng rng(0);
  for (auto _ : state) {
    Graph g(false);
    Tensor memory = encode(g, params, src, no_pad, Mode::eval, rng);
    benchmark::DoNotOptimize(memory.values().data());
  }
}
BENCHMARK(bm_encoder_forward)->Arg(8)->Arg(32)->Arg(64);

// Forward, loss, backward, and one Adam update on a single pair, the whole
// inner loop of training minus batching.
void bm_train_step(benchmark::State& state) {
  const auto len = static_cast<std::size_t>(state.range(0));
  TransformerParams params(small_config(), 5);
  AdamState adam(params);
  TrainConfig cfg;
  cfg.warmup_steps = 400;

  std::vector<int> src = sample_tokens(len);
  std::vector<int> tgt_in(src.size());
  std::vector<int> tgt_out(src.size());
  tgt_in[0] = 1;
  for (std::size_t i = 0; i + 1 < src.size(); ++i) tgt_in[i + 1] = src[i];
  for (std::size_t i = 0; i + 1 < src.size(); ++i) tgt_out[i] = src[i + 1];
  tgt_out[src.size() - 1] = 2;
  std::vector<std::uint8_t> no_pad(len, 0);

  std::size_t step = 0;
  for (auto _ : state) {
    Graph g;
    Rng rng(step++);
    Tensor memory = encode(g, params, src, no_pad, Mode::train, rng);
    Tensor logits =
        decode_step(g, params, memory, tgt_in, no_pad, {}, Mode::train, rng);
    Tensor loss = label_smoothed_loss(g, logits, tgt_out, 0.1);
    zero_gradients(params);
    g.backward(loss);
    adam_step(params, adam, learning_rate(step, 64, cfg.warmup_steps), cfg);
    benchmark::DoNotOptimize(loss.item());
  }
}
BENCHMARK(bm_train_step)->Arg(8)->Arg(16);

void bm_greedy_decode(benchmark::State& state) {
  const auto len = static_cast<std::size_t>(state.range(0));
  TransformerParams params(small_config(), 6);
  std::vector<int> src = sample_tokens(len);
  for (auto _ : state) {
    DecodeResult r = greedy_decode(params, src, 10);
    benchmark::DoNotOptimize(r.tokens.data());
  }
}
BENCHMARK(bm_greedy_decode)->Arg(4)->Arg(8);

}  // namespace

BENCHMARK_MAIN();
