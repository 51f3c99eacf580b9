#include "checks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <vector>

#include "atnl/attention.hpp"
#include "atnl/errors.hpp"
#include "atnl/graph.hpp"
#include "atnl/model.hpp"
#include "atnl/ops.hpp"
#include "atnl/rng.hpp"
#include "atnl/train.hpp"

namespace atnl::cli {

namespace {

std::string num(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.n_layers = 1;
  cfg.d_model = 8;
  cfg.d_ff = 16;
  cfg.heads = 2;
  cfg.d_k = 4;
  cfg.d_v = 4;
  cfg.vocab_size = 11;
  cfg.max_len = 8;
  return cfg;
}

}  // namespace

std::vector<CheckResult> check_grad() {
  const ModelConfig cfg = tiny_config();
  TransformerParams params(cfg, 11);
  const std::vector<int> src = {3, 4, 5, 6, 7};
  const std::vector<int> tgt_in = {1, 3, 4, 5, 6};
  const std::vector<int> tgt_out = {3, 4, 5, 6, 2};

  auto loss_of = [&](Graph& g) {
    Rng rng(0);
    Tensor memory = encode(g, params, src, {}, Mode::eval, rng);
    Tensor logits =
        decode_step(g, params, memory, tgt_in, {}, {}, Mode::eval, rng);
    return label_smoothed_loss(g, logits, tgt_out, cfg.eps_ls);
  };

  Graph graph;
  Tensor loss = loss_of(graph);
  zero_gradients(params);
  graph.backward(loss);

  double max_rel = 0.0;
  std::size_t checked = 0;
  for (const auto& [name, tensor] : params.named_parameters()) {
    Tensor probe = tensor;
    Tensor fd = finite_diff_grad(
        [&](Tensor&) {
          Graph quiet(false);
          return loss_of(quiet).item();
        },
        probe, 1e-5);
    const std::vector<double>& analytic = probe.grad();
    for (std::size_t i = 0; i < fd.values().size(); ++i) {
      const double a = analytic[i];
      const double f = fd.values()[i];
      const double denom = std::max({std::abs(a), std::abs(f), 1e-3});
      max_rel = std::max(max_rel, std::abs(a - f) / denom);
      ++checked;
    }
  }

  CheckResult r;
  r.name = "grad.max_rel_err";
  r.pass = max_rel < 1e-4;
  r.detail = "max relative error " + num(max_rel) + " over " +
             std::to_string(checked) + " parameters (bound 1e-4)";
  return {r};
}

std::vector<CheckResult> check_variance(std::size_t d_k, std::size_t samples) {
  const DotProductStats stats =
      dot_product_variance_experiment(d_k, samples, 1234);
  const double dk = static_cast<double>(d_k);
  const double n = static_cast<double>(samples);
  const double raw_se = std::sqrt(stats.raw_variance / n);
  const double scaled_se = std::sqrt(stats.scaled_variance / n);

  std::vector<CheckResult> out;
  out.push_back({"variance.raw",
                 stats.raw_variance >= 0.9 * dk && stats.raw_variance <= 1.1 * dk,
                 "raw dot-product variance " + num(stats.raw_variance) +
                     ", want within [" + num(0.9 * dk) + ", " + num(1.1 * dk) +
                     "]"});
  out.push_back({"variance.scaled",
                 stats.scaled_variance >= 0.9 && stats.scaled_variance <= 1.1,
                 "scaled variance " + num(stats.scaled_variance) +
                     ", want within [0.9, 1.1]"});
  out.push_back({"variance.raw_mean",
                 std::abs(stats.raw_mean) <= 5.0 * raw_se,
                 "raw mean " + num(stats.raw_mean) + ", want within 5 standard"
                     " errors (" + num(5.0 * raw_se) + ") of 0"});
  out.push_back({"variance.scaled_mean",
                 std::abs(stats.scaled_mean) <= 5.0 * scaled_se,
                 "scaled mean " + num(stats.scaled_mean) +
                     ", want within 5 standard errors (" + num(5.0 * scaled_se) +
                     ") of 0"});
  return out;
}

std::vector<CheckResult> check_pe() {
  ModelConfig cfg = tiny_config();
  cfg.d_model = 16;
  cfg.max_len = 64;
  TransformerParams params(cfg, 1);
  Graph graph(false);
  const Tensor pe = params.positional_rows(graph, 64);
  const std::size_t half = cfg.d_model / 2;

  // position 0 must alternate sin(0)=0, cos(0)=1 exactly
  bool zero_ok = true;
  for (std::size_t i = 0; i < half; ++i) {
    if (pe(0, 2 * i) != 0.0 || pe(0, 2 * i + 1) != 1.0) zero_ok = false;
  }

  // a fixed offset acts as a rotation of each sin/cos pair, with the
  // rotation coefficients readable off the offset's own encoding row
  double rot_residual = 0.0;
  for (std::size_t k = 1; k <= 16; ++k) {
    for (std::size_t p = 0; p + k < 64; ++p) {
      for (std::size_t i = 0; i < half; ++i) {
        const double s_p = pe(p, 2 * i), c_p = pe(p, 2 * i + 1);
        const double s_k = pe(k, 2 * i), c_k = pe(k, 2 * i + 1);
        rot_residual = std::max(
            rot_residual, std::abs(pe(p + k, 2 * i) - (s_p * c_k + c_p * s_k)));
        rot_residual = std::max(
            rot_residual,
            std::abs(pe(p + k, 2 * i + 1) - (c_p * c_k - s_p * s_k)));
      }
    }
  }

  // angular frequencies form a geometric progression; recover each from
  // the encoding of position 1 and compare consecutive ratios
  std::vector<double> freq(half);
  for (std::size_t i = 0; i < half; ++i) {
    freq[i] = std::atan2(pe(1, 2 * i), pe(1, 2 * i + 1));
  }
  double ratio_residual = 0.0;
  const double want_ratio = freq[1] / freq[0];
  for (std::size_t i = 0; i + 1 < half; ++i) {
    ratio_residual =
        std::max(ratio_residual, std::abs(freq[i + 1] / freq[i] - want_ratio));
  }

  std::vector<CheckResult> out;
  out.push_back({"pe.zero_row", zero_ok,
                 zero_ok ? "position 0 is exactly alternating {0, 1}"
                         : "position 0 deviates from alternating {0, 1}"});
  out.push_back({"pe.rotation", rot_residual < 1e-9,
                 "max rotation residual " + num(rot_residual) +
                     " over offsets k <= 16 (bound 1e-9)"});
  out.push_back({"pe.wavelengths", ratio_residual < 1e-9,
                 "frequency ratio spread " + num(ratio_residual) +
                     " around " + num(want_ratio) + " (bound 1e-9)"});
  return out;
}

std::vector<CheckResult> check_mask() {
  std::vector<CheckResult> out;

  // causal masking: rewriting a future target token must not move any
  // earlier logit by even one bit
  {
    const ModelConfig cfg = tiny_config();
    TransformerParams params(cfg, 5);
    const std::vector<int> src = {3, 7, 4};
    std::vector<int> tgt = {1, 5, 6, 8, 9};

    Graph graph(false);
    Rng rng(0);
    const Tensor memory = encode(graph, params, src, {}, Mode::eval, rng);
    const Tensor base =
        decode_step(graph, params, memory, tgt, {}, {}, Mode::eval, rng);

    bool identical = true;
    std::size_t compared = 0;
    for (std::size_t future = 1; future < tgt.size(); ++future) {
      std::vector<int> poked = tgt;
      poked[future] = poked[future] == 5 ? 10 : 5;
      const Tensor out_poked =
          decode_step(graph, params, memory, poked, {}, {}, Mode::eval, rng);
      for (std::size_t i = 0; i < future; ++i) {
        for (std::size_t c = 0; c < cfg.vocab_size; ++c) {
          if (base(i, c) != out_poked(i, c)) identical = false;
          ++compared;
        }
      }
    }
    out.push_back({"mask.causal", identical,
                   identical ? "earlier logits bit-identical across " +
                                   std::to_string(compared) +
                                   " future-token perturbations"
                             : "a future token leaked into earlier logits"});
  }

  // key padding: blocked keys get exactly zero weight, live rows stay on
  // the simplex
  {
    Graph graph;
    Rng rng(9);
    std::vector<double> scores(3 * 4);
    for (double& v : scores) v = rng.next_gaussian();
    const Tensor s({3, 4}, scores);
    const std::vector<std::uint8_t> pad = {0, 0, 1, 1};
    const AttentionMask mask = AttentionMask::key_padding(3, pad);
    const Tensor w = masked_softmax_rows(graph, s, mask);

    double pad_mass = 0.0;
    double sum_err = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < 4; ++j) {
        if (pad[j]) pad_mass = std::max(pad_mass, std::abs(w(i, j)));
        sum += w(i, j);
      }
      sum_err = std::max(sum_err, std::abs(sum - 1.0));
    }
    out.push_back({"mask.padding", pad_mass == 0.0 && sum_err < 1e-12,
                   "blocked-key weight " + num(pad_mass) +
                       " (want exactly 0), row-sum error " + num(sum_err)});
  }

  // a fully blocked row has no distribution to return
  {
    Graph graph;
    const Tensor s = Tensor::zeros({2, 2});
    const std::vector<std::uint8_t> pad = {1, 1};
    bool threw = false;
    try {
      masked_softmax_rows(graph, s, AttentionMask::key_padding(2, pad));
    } catch (const DegenerateInputError&) {
      threw = true;
    }
    out.push_back({"mask.all_blocked", threw,
                   threw ? "fully blocked row raised DegenerateInputError"
                         : "fully blocked row produced a distribution"});
  }

  return out;
}

bool run_check_suite(const std::string& suite, std::size_t d_k,
                     std::size_t samples, std::ostream& out) {
  std::vector<CheckResult> results;
  auto collect = [&](std::vector<CheckResult> more) {
    for (CheckResult& r : more) results.push_back(std::move(r));
  };
  if (suite == "grad" || suite == "all") collect(check_grad());
  if (suite == "variance" || suite == "all") collect(check_variance(d_k, samples));
  if (suite == "pe" || suite == "all") collect(check_pe());
  if (suite == "mask" || suite == "all") collect(check_mask());
  if (results.empty()) throw ConfigError("unknown check suite '" + suite + "'");

  bool all_pass = true;
  for (const CheckResult& r : results) {
    out << r.name << ": " << (r.pass ? "PASS" : "FAIL") << " (" << r.detail
        << ")\n";
    all_pass = all_pass && r.pass;
  }
  return all_pass;
}

}  // namespace atnl::cli
