#include <algorithm>
#include <cmath>
#include <limits>
#include <filesystem>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <doctest.h>

#include "atnl/data.hpp"
#include "atnl/errors.hpp"
#include "atnl/graph.hpp"
#include "atnl/ops.hpp"
#include "atnl/train.hpp"

using namespace atnl;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.n_layers = 1;
  cfg.d_model = 8;
  cfg.d_ff = 16;
  cfg.heads = 2;
  cfg.d_k = 4;
  cfg.d_v = 4;
  cfg.p_drop = 0.0;
  cfg.vocab_size = 11;
  cfg.max_len = 16;
  return cfg;
}

double rel_diff(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

std::string fresh_dir(const std::string& tag) {
  auto dir = std::filesystem::temp_directory_path() / ("atnl_train_" + tag);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace

TEST_SUITE("train") {

TEST_CASE("learning rate matches direct evaluation of the schedule") {
  auto oracle = [](std::size_t step, std::size_t d, std::size_t w) {
    const long double s = static_cast<long double>(step);
    const long double wl = static_cast<long double>(w);
    const long double lo = std::min(std::pow(s, -0.5L), s * std::pow(wl, -1.5L));
    return static_cast<double>(std::pow(static_cast<long double>(d), -0.5L) * lo);
  };
  for (std::size_t step : {std::size_t{1}, std::size_t{2000}, std::size_t{4000},
                           std::size_t{8000}, std::size_t{100000}}) {
    CHECK(rel_diff(learning_rate(step, 512, 4000), oracle(step, 512, 4000)) < 1e-12);
  }
  CHECK(learning_rate(4000, 512, 4000) == doctest::Approx(6.988e-4).epsilon(1e-3));
  CHECK(learning_rate(1, 512, 4000) == doctest::Approx(1.7469e-7).epsilon(1e-3));
}

TEST_CASE("learning rate peaks exactly at warmup and is strictly unimodal") {
  const std::size_t w = 50;
  const std::size_t d = 64;
  for (std::size_t s = 1; s < w; ++s) {
    CHECK(learning_rate(s, d, w) < learning_rate(s + 1, d, w));
  }
  for (std::size_t s = w; s < 3 * w; ++s) {
    CHECK(learning_rate(s, d, w) > learning_rate(s + 1, d, w));
  }
  // both schedule branches collapse to the same expression at step == warmup
  const double at_peak = learning_rate(w, d, w);
  const double decay_form = (1.0 / std::sqrt(64.0)) * (1.0 / std::sqrt(50.0));
  const double warmup_form =
      (1.0 / std::sqrt(64.0)) * ((50.0 / 50.0) * (1.0 / std::sqrt(50.0)));
  CHECK(at_peak == decay_form);
  CHECK(at_peak == warmup_form);
}

TEST_CASE("learning rate rejects step zero and empty dimensions") {
  CHECK_THROWS_AS(learning_rate(0, 512, 4000), ContractError);
  CHECK_THROWS_AS(learning_rate(1, 0, 4000), ConfigError);
  CHECK_THROWS_AS(learning_rate(1, 512, 0), ConfigError);
}

TEST_CASE("adam leaves parameters alone when every gradient is zero") {
  TransformerParams params = TransformerParams::zeroed(tiny_config());
  TrainConfig tc;
  AdamState state(params);
  adam_step(params, state, 0.5, tc);
  CHECK(state.step() == 1);
  for (const auto& [name, t] : params.named_parameters()) {
    for (double v : t.values()) CHECK(v == 0.0);
  }
}

TEST_CASE("adam reproduces the hand-evaluated single-step update") {
  TransformerParams params = TransformerParams::zeroed(tiny_config());
  TrainConfig tc;
  AdamState state(params);

  Tensor emb = params.parameter("embedding");
  emb.grad()[0] = 1.0;
  adam_step(params, state, 1.0, tc);

  // m_hat = v_hat = 1 after bias correction, so theta = -1/(1 + eps)
  CHECK(std::abs(emb.values()[0] + 1.0) < 1e-8);
  CHECK(emb.values()[1] == 0.0);
  CHECK(state.first_moment("embedding")[0] == (1.0 - tc.beta1) * 1.0);
  CHECK(state.second_moment("embedding")[0] == (1.0 - tc.beta2) * 1.0);
  CHECK(state.second_moment("embedding")[0] >= 0.0);
  CHECK_THROWS_AS(state.first_moment("no.such.param"), ContractError);
}

TEST_CASE("adam with zero learning rate advances state but not parameters") {
  TransformerParams params = TransformerParams::zeroed(tiny_config());
  TrainConfig tc;
  AdamState state(params);

  Tensor emb = params.parameter("embedding");
  emb.grad()[3] = -2.5;
  adam_step(params, state, 0.0, tc);

  for (double v : emb.values()) CHECK(v == 0.0);
  CHECK(state.step() == 1);
  CHECK(state.first_moment("embedding")[3] == (1.0 - tc.beta1) * -2.5);
  CHECK(state.second_moment("embedding")[3] == (1.0 - tc.beta2) * 6.25);
}

TEST_CASE("constant gradients drive the update magnitude to the learning rate") {
  TransformerParams params = TransformerParams::zeroed(tiny_config());
  TrainConfig tc;
  AdamState state(params);
  Tensor emb = params.parameter("embedding");

  const double lr = 0.01;
  double prev = 0.0;
  double last_delta = 0.0;
  for (int k = 0; k < 100; ++k) {
    zero_gradients(params);
    emb.grad()[0] = 1.0;
    adam_step(params, state, lr, tc);
    last_delta = prev - emb.values()[0];
    prev = emb.values()[0];
  }
  CHECK(std::abs(last_delta - lr) < 1e-6 * lr);
  CHECK(std::abs(emb.values()[0] + 100.0 * lr) < 1e-7);
}

TEST_CASE("adam aborts on non-finite gradients naming the parameter") {
  TransformerParams params = TransformerParams::zeroed(tiny_config());
  TrainConfig tc;
  AdamState state(params);
  Tensor w1 = params.parameter("enc.0.ffn.w1");
  w1.grad()[5] = std::numeric_limits<double>::infinity();
  try {
    adam_step(params, state, 0.1, tc);
    FAIL("expected DegenerateInputError");
  } catch (const DegenerateInputError& e) {
    CHECK(std::string(e.what()).find("enc.0.ffn.w1") != std::string::npos);
  }
}

TEST_CASE("train config validation") {
  TrainConfig tc;
  tc.validate();
  tc.warmup_steps = 0;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
  tc = TrainConfig{};
  tc.beta2 = 1.0;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
  tc = TrainConfig{};
  tc.adam_eps = 0.0;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
}

TEST_CASE("zero smoothing reduces to negative log likelihood") {
  Graph g;
  Tensor logits = Tensor::matrix(2, 3, {1.0, 2.0, 3.0, 0.5, 0.0, -1.0});
  std::vector<int> targets = {2, 1};
  Tensor loss = label_smoothed_loss(g, logits, targets, 0.0);

  long double want = 0.0L;
  for (std::size_t i = 0; i < 2; ++i) {
    long double se = 0.0L;
    for (std::size_t c = 0; c < 3; ++c) {
      se += std::exp(static_cast<long double>(logits(i, c)));
    }
    want += std::log(se) - static_cast<long double>(logits(i, targets[i]));
  }
  want /= 2.0L;
  CHECK(rel_diff(loss.item(), static_cast<double>(want)) < 1e-12);
}

TEST_CASE("uniform logits cost exactly log vocab") {
  Graph g;
  Tensor logits = Tensor::matrix(3, 7, std::vector<double>(21, 0.4));
  std::vector<int> targets = {3, 4, 5};
  Tensor loss = label_smoothed_loss(g, logits, targets, 0.0);
  CHECK(rel_diff(loss.item(), std::log(7.0)) < 1e-12);
}

TEST_CASE("smoothed loss matches the explicit distribution oracle") {
  Graph g;
  Tensor logits = Tensor::matrix(3, 5,
                                 {0.3, -1.2, 2.0, 0.7, -0.4,
                                  1.1, 0.0, -2.0, 0.5, 0.9,
                                  -0.6, 1.4, 0.2, -1.0, 2.2});
  std::vector<int> targets = {4, 0, 2};  // middle row is padding
  const double eps = 0.1;
  Tensor loss = label_smoothed_loss(g, logits, targets, eps);

  long double want = 0.0L;
  int used = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    if (targets[i] == kPadId) continue;
    ++used;
    long double se = 0.0L;
    for (std::size_t c = 0; c < 5; ++c) {
      se += std::exp(static_cast<long double>(logits(i, c)));
    }
    const long double lse = std::log(se);
    long double q_total = 0.0L;
    for (std::size_t c = 0; c < 5; ++c) {
      long double q = 0.0L;
      if (static_cast<int>(c) == targets[i]) {
        q = 1.0L - static_cast<long double>(eps);
      } else if (c != static_cast<std::size_t>(kPadId)) {
        q = static_cast<long double>(eps) / 3.0L;
      }
      q_total += q;
      want += q * (lse - static_cast<long double>(logits(i, c)));
    }
    CHECK(std::abs(static_cast<double>(q_total - 1.0L)) < 1e-12);
  }
  want /= used;
  CHECK(rel_diff(loss.item(), static_cast<double>(want)) < 1e-10);
}

TEST_CASE("smoothed loss ignores constant shifts per row") {
  Graph g;
  std::vector<double> base = {0.3, -1.2, 2.0, 0.7, -0.4,
                              1.1, 0.0, -2.0, 0.5, 0.9};
  std::vector<double> shifted = base;
  for (std::size_t c = 0; c < 5; ++c) shifted[c] += 37.25;
  for (std::size_t c = 5; c < 10; ++c) shifted[c] -= 11.5;

  std::vector<int> targets = {2, 4};
  Tensor a = Tensor::matrix(2, 5, base);
  Tensor b = Tensor::matrix(2, 5, shifted);
  const double la = label_smoothed_loss(g, a, targets, 0.1).item();
  const double lb = label_smoothed_loss(g, b, targets, 0.1).item();
  CHECK(rel_diff(la, lb) < 1e-9);
}

TEST_CASE("smoothed loss input validation") {
  Graph g;
  Tensor logits = Tensor::matrix(2, 5, std::vector<double>(10, 0.0));
  std::vector<int> all_pad = {kPadId, kPadId};
  CHECK_THROWS_AS(label_smoothed_loss(g, logits, all_pad, 0.1), DegenerateInputError);

  std::vector<int> targets = {3, 4};
  CHECK_THROWS_AS(label_smoothed_loss(g, logits, targets, 1.0), ConfigError);
  CHECK_THROWS_AS(label_smoothed_loss(g, logits, targets, -0.1), ConfigError);

  Tensor two_class = Tensor::matrix(2, 2, {0.0, 1.0, 1.0, 0.0});
  std::vector<int> binary = {1, 1};
  CHECK_THROWS_AS(label_smoothed_loss(g, two_class, binary, 0.1), ConfigError);
  CHECK_NOTHROW(label_smoothed_loss(g, two_class, binary, 0.0));

  std::vector<int> out_of_range = {3, 7};
  CHECK_THROWS_AS(label_smoothed_loss(g, logits, out_of_range, 0.1), VocabError);
  std::vector<int> too_few = {3};
  CHECK_THROWS_AS(label_smoothed_loss(g, logits, too_few, 0.1), ShapeError);

  Tensor vec({4}, {0.0, 1.0, 2.0, 3.0});
  std::vector<int> one = {1};
  CHECK_THROWS_AS(label_smoothed_loss(g, vec, one, 0.1), ShapeError);
}

TEST_CASE("smoothed loss gradient agrees with finite differences") {
  Rng rng(31);
  std::vector<double> vals(4 * 6);
  for (double& v : vals) v = rng.next_gaussian();
  Tensor logits = Tensor::matrix(4, 6, vals, true);
  std::vector<int> targets = {3, kPadId, 5, 2};

  Graph g;
  Tensor loss = label_smoothed_loss(g, logits, targets, 0.1);
  g.backward(loss);
  REQUIRE(logits.has_grad());

  Tensor fd = finite_diff_grad(
      [&](Tensor& probe) {
        Graph g2;
        return label_smoothed_loss(g2, probe, targets, 0.1).item();
      },
      logits, 1e-6);

  const std::vector<double>& got = logits.grad();
  for (std::size_t i = 0; i < got.size(); ++i) {
    CHECK(std::abs(got[i] - fd.values()[i]) <
          1e-7 + 1e-5 * std::abs(fd.values()[i]));
  }

  // pad rows receive no gradient; live rows sum to zero because q is a
  // distribution and softmax rows are too
  for (std::size_t c = 0; c < 6; ++c) CHECK(got[1 * 6 + c] == 0.0);
  for (std::size_t r : {std::size_t{0}, std::size_t{2}, std::size_t{3}}) {
    double s = 0.0;
    for (std::size_t c = 0; c < 6; ++c) s += got[r * 6 + c];
    CHECK(std::abs(s) < 1e-12);
  }
}

namespace {

struct LoopRun {
  TransformerParams params;
  TrainResult result;
  std::string metrics;
};

ModelConfig loop_config() {
  ModelConfig cfg;
  cfg.n_layers = 1;
  cfg.d_model = 32;
  cfg.d_ff = 64;
  cfg.heads = 2;
  cfg.d_k = 16;
  cfg.d_v = 16;
  cfg.p_drop = 0.1;
  cfg.eps_ls = 0.1;
  cfg.vocab_size = 16;
  cfg.max_len = 32;
  return cfg;
}

LoopRun run_copy_training(std::size_t steps, const std::string& tag) {
  TransformerParams params(loop_config(), 1);
  std::vector<Pair> pairs = synth_task(TaskKind::copy, 16, 1, 8, 64, 5);
  BatchStream stream(pairs, 96, 17);
  TrainConfig tc;
  tc.warmup_steps = 100;
  tc.token_budget = 96;
  tc.total_steps = steps;
  tc.checkpoint_interval = 100;
  tc.seed = 9;
  std::ostringstream metrics;
  TrainResult result = train_loop(params, stream, tc, fresh_dir(tag), metrics);
  return LoopRun{std::move(params), std::move(result), metrics.str()};
}

// step, loss and lr columns; tokens_per_sec is timing and excluded
std::vector<std::string> deterministic_columns(const std::string& metrics) {
  std::vector<std::string> out;
  std::istringstream in(metrics);
  std::string line;
  while (std::getline(in, line)) {
    out.push_back(line.substr(0, line.rfind('\t')));
  }
  return out;
}

}  // namespace

TEST_CASE("zero total steps writes the initial checkpoint and nothing else") {
  TransformerParams params(tiny_config(), 2);
  std::vector<Pair> pairs = synth_task(TaskKind::copy, 11, 1, 4, 8, 0);
  BatchStream stream(pairs, 32, 0);
  TrainConfig tc;
  tc.total_steps = 0;
  std::ostringstream metrics;
  const std::string dir = fresh_dir("zero_steps");
  TrainResult r = train_loop(params, stream, tc, dir, metrics);

  CHECK(r.steps == 0);
  REQUIRE(r.checkpoints.size() == 1);
  CHECK(r.checkpoints[0] == dir + "/checkpoint-000000.atnl");
  CHECK(std::filesystem::exists(r.checkpoints[0]));
  CHECK(metrics.str().empty());
}

TEST_CASE("loss falls over two hundred copy-task steps") {
  LoopRun run = run_copy_training(200, "smoke");
  REQUIRE(run.result.losses.size() == 200);

  const double early =
      std::accumulate(run.result.losses.begin(), run.result.losses.begin() + 20, 0.0) / 20.0;
  const double late =
      std::accumulate(run.result.losses.end() - 20, run.result.losses.end(), 0.0) / 20.0;
  CHECK(late < early);

  // initial, step 100, step 200
  CHECK(run.result.checkpoints.size() == 3);
  CHECK(run.params.embedding().same_storage(run.params.output_projection()));

  // metrics: one line per step, four tab-separated fields
  std::vector<std::string> lines = deterministic_columns(run.metrics);
  REQUIRE(lines.size() == 200);
  CHECK(lines[0].substr(0, 2) == "1\t");
  CHECK(std::count(run.metrics.begin(), run.metrics.end(), '\n') == 200);
  std::istringstream first_line(run.metrics.substr(0, run.metrics.find('\n')));
  std::string f1, f2, f3, f4, extra;
  std::getline(first_line, f1, '\t');
  std::getline(first_line, f2, '\t');
  std::getline(first_line, f3, '\t');
  std::getline(first_line, f4, '\t');
  CHECK(!std::getline(first_line, extra, '\t'));
  CHECK(f1 == "1");
  CHECK(std::stod(f2) > 0.0);
  CHECK(std::stod(f3) == learning_rate(1, 32, 100));
}

TEST_CASE("identical seeds produce identical losses and schedules") {
  LoopRun a = run_copy_training(40, "det_a");
  LoopRun b = run_copy_training(40, "det_b");
  REQUIRE(a.result.losses.size() == b.result.losses.size());
  for (std::size_t i = 0; i < a.result.losses.size(); ++i) {
    CHECK(a.result.losses[i] == b.result.losses[i]);
  }
  CHECK(deterministic_columns(a.metrics) == deterministic_columns(b.metrics));
}

TEST_CASE("non-finite loss aborts the loop") {
  TransformerParams params = TransformerParams::zeroed(tiny_config());
  Tensor emb = params.parameter("embedding");
  std::fill(emb.values().begin(), emb.values().end(), 1e308);

  std::vector<Pair> pairs = synth_task(TaskKind::copy, 11, 2, 4, 8, 0);
  BatchStream stream(pairs, 32, 0);
  TrainConfig tc;
  tc.total_steps = 5;
  std::ostringstream metrics;
  CHECK_THROWS_AS(
      train_loop(params, stream, tc, fresh_dir("abort"), metrics),
      DegenerateInputError);
}

TEST_CASE("stop probe ends training early with a final checkpoint") {
  TransformerParams params(loop_config(), 1);
  std::vector<Pair> pairs = synth_task(TaskKind::copy, 16, 1, 6, 32, 5);
  BatchStream stream(pairs, 64, 17);
  TrainConfig tc;
  tc.warmup_steps = 100;
  tc.total_steps = 500;
  tc.checkpoint_interval = 200;
  std::ostringstream metrics;
  TrainResult r = train_loop(params, stream, tc, fresh_dir("stop"), metrics, {},
                             [](std::size_t step, double) { return step == 7; });
  CHECK(r.steps == 7);
  REQUIRE(r.checkpoints.size() == 2);
  CHECK(r.checkpoints.back().find("checkpoint-000007") != std::string::npos);
}

TEST_CASE("token accuracy is exact on a uniform-logit model") {
  TransformerParams params = TransformerParams::zeroed(tiny_config());
  std::vector<Pair> pairs = synth_task(TaskKind::copy, 11, 1, 5, 12, 3);
  // all logits tie, argmax resolves to pad, never a real target or EOS
  CHECK(token_accuracy(params, pairs) == 0.0);
  CHECK_THROWS_AS(token_accuracy(params, {}), ContractError);
}

}  // TEST_SUITE
