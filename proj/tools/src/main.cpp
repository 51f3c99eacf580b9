#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "atnl/checkpoint.hpp"
#include "atnl/config.hpp"
#include "atnl/data.hpp"
#include "atnl/decode.hpp"
#include "atnl/dump.hpp"
#include "atnl/errors.hpp"
#include "atnl/kv.hpp"
#include "atnl/train.hpp"
#include "checks.hpp"
#include "log.hpp"

namespace fs = std::filesystem;

namespace atnl::cli {

namespace {

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read input file '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

/// train/eval split: synthetic corpora draw train_count + eval_count pairs
/// and split them; file corpora hold out their last eval_count pairs.
struct Corpus {
  std::vector<Pair> train;
  std::vector<Pair> eval;
};

Corpus build_corpus(const RunConfig& cfg, const Vocabulary& vocab) {
  Corpus corpus;
  if (!cfg.task.data_file.empty()) {
    std::vector<Pair> pairs = read_pairs(cfg.task.data_file, vocab);
    if (pairs.size() <= cfg.task.eval_count) {
      throw DataError("data file '" + cfg.task.data_file + "' has only " +
                      std::to_string(pairs.size()) +
                      " pairs, need more than eval_count = " +
                      std::to_string(cfg.task.eval_count));
    }
    const std::size_t split = pairs.size() - cfg.task.eval_count;
    corpus.train.assign(pairs.begin(), pairs.begin() + split);
    corpus.eval.assign(pairs.begin() + split, pairs.end());
    return corpus;
  }
  std::vector<Pair> pool = synth_task(
      cfg.task.kind, cfg.model.vocab_size, cfg.task.len_min, cfg.task.len_max,
      cfg.task.train_count + cfg.task.eval_count, cfg.train.seed,
      cfg.model.max_len);
  corpus.train.assign(pool.begin(), pool.begin() + cfg.task.train_count);
  corpus.eval.assign(pool.begin() + cfg.task.train_count, pool.end());
  return corpus;
}

int cmd_train(const std::string& config_path,
              const std::vector<std::string>& sets, const std::string& out_dir,
              const Logger& log) {
  const RunConfig cfg = load_run_config(config_path, sets);
  fs::create_directories(out_dir);

  const std::string echo = run_config_to_text(cfg);
  {
    std::ofstream run_log(out_dir + "/run.log", std::ios::binary);
    if (!run_log) throw ConfigError("cannot write to '" + out_dir + "'");
    run_log << echo;
  }
  log.debug("effective configuration:\n" + echo);

  const Vocabulary vocab = Vocabulary::synthetic(cfg.model.vocab_size);
  Corpus corpus = build_corpus(cfg, vocab);
  log.info("training " + task_kind_to_text(cfg.task.kind) + " for " +
           std::to_string(cfg.train.total_steps) + " steps on " +
           std::to_string(corpus.train.size()) + " pairs (" +
           std::to_string(corpus.eval.size()) + " held out)");

  BatchStream stream(corpus.train, cfg.train.token_budget, cfg.train.seed);
  TransformerParams params(cfg.model, cfg.train.seed);

  std::ofstream metrics(out_dir + "/metrics.tsv", std::ios::binary);
  if (!metrics) throw ConfigError("cannot write to '" + out_dir + "'");
  const std::vector<KeyValue> extra = {
      {"task", task_kind_to_text(cfg.task.kind)}};
  const TrainResult result =
      train_loop(params, stream, cfg.train, out_dir, metrics, extra);

  const double accuracy = token_accuracy(params, corpus.eval);
  log.info("finished " + std::to_string(result.steps) + " steps, " +
           std::to_string(result.checkpoints.size()) +
           " checkpoints, held-out token accuracy " + format_double(accuracy));
  return 0;
}

int cmd_decode(const std::vector<std::string>& checkpoints,
               const std::string& input_path, const std::string& out_path,
               std::size_t beam, double alpha, std::size_t max_extra,
               const Logger& log) {
  LoadedCheckpoint loaded = [&] {
    if (checkpoints.size() == 1) return load_checkpoint(checkpoints[0]);
    const fs::path tmp =
        fs::temp_directory_path() /
        ("atnl-avg-" + std::to_string(static_cast<unsigned>(::getpid())) +
         ".atnl");
    average_checkpoints(checkpoints, tmp.string());
    LoadedCheckpoint result = load_checkpoint(tmp.string());
    fs::remove(tmp);
    return result;
  }();
  log.debug("loaded " + std::to_string(checkpoints.size()) + " checkpoint(s)");

  const Vocabulary vocab =
      Vocabulary::synthetic(loaded.params.config().vocab_size);
  const std::vector<std::string> lines = read_lines(input_path);

  std::ofstream file;
  if (!out_path.empty()) {
    file.open(out_path, std::ios::binary);
    if (!file) throw ConfigError("cannot write output file '" + out_path + "'");
  }
  std::ostream& out = out_path.empty() ? std::cout : file;

  for (const std::string& line : lines) {
    if (line.find_first_not_of(" \t") == std::string::npos) {
      out << '\n';  // keep blank lines aligned with the input
      continue;
    }
    const std::vector<int> src = vocab.encode(line);
    const DecodeResult result =
        beam_search(loaded.params, src, beam, alpha, max_extra);
    out << vocab.decode(result.tokens) << '\n';
    log.debug("decoded " + std::to_string(src.size()) + " -> " +
              std::to_string(result.tokens.size()) + " tokens, score " +
              format_double(result.score));
  }
  return 0;
}

int cmd_dump_attention(const std::string& checkpoint, const std::string& line,
                       const std::string& out_path, const Logger& log) {
  const LoadedCheckpoint loaded = load_checkpoint(checkpoint);
  const Vocabulary vocab =
      Vocabulary::synthetic(loaded.params.config().vocab_size);
  const std::vector<int> src = vocab.encode(line);

  std::ostringstream dump;
  dump_attention(dump, loaded.params, src, vocab);
  log.debug("dumped attention for " + std::to_string(src.size()) + " tokens");

  if (out_path.empty()) {
    std::cout << dump.str();
  } else {
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw ConfigError("cannot write output file '" + out_path + "'");
    out << dump.str();
  }
  return 0;
}

int run(int argc, char** argv, const Logger& log) {
  CLI::App app{"desk-scale transformer laboratory"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  std::string out_path;
  std::vector<std::string> checkpoints;
  std::string input_path;
  std::size_t beam = 4;
  double alpha = 0.6;
  std::size_t max_extra = 50;
  std::string suite = "all";
  std::size_t dk = 64;
  std::size_t samples = 10000;
  std::string line;

  CLI::App* train = app.add_subcommand("train", "train a model on a task");
  train->add_option("--config", config_path, "config file of key = value lines");
  train->add_option("--set", sets, "override one key=value")
      ->type_size(1)
      ->allow_extra_args(false);
  train->add_option("--seed", seed, "override the run seed");
  train->add_option("--out", out_dir, "output directory");

  CLI::App* decode =
      app.add_subcommand("decode", "translate a file of symbol lines");
  decode->add_option("checkpoints", checkpoints,
                     "checkpoint files (several are averaged first)")
      ->required();
  decode->add_option("--input", input_path, "file of input lines")->required();
  decode->add_option("--out", out_path, "output file (default stdout)");
  decode->add_option("--beam", beam, "beam width")->check(CLI::PositiveNumber);
  decode->add_option("--alpha", alpha, "length penalty strength");
  decode->add_option("--max-extra", max_extra,
                     "emitted-length headroom over the source length");

  CLI::App* check = app.add_subcommand("check", "run invariant self-tests");
  check->add_option("suite", suite, "grad, variance, pe, mask, or all")
      ->check(CLI::IsMember({"grad", "variance", "pe", "mask", "all"}));
  check->add_option("--dk", dk, "key width for the variance suite")
      ->check(CLI::PositiveNumber);
  check->add_option("--samples", samples, "sample count for the variance suite")
      ->check(CLI::PositiveNumber);

  CLI::App* dump =
      app.add_subcommand("dump-attention", "export attention weights as text");
  dump->add_option("checkpoint", checkpoints, "checkpoint file")
      ->required()
      ->expected(1);
  dump->add_option("--line", line, "input line of symbols")->required();
  dump->add_option("--out", out_path, "output file (default stdout)");

  CLI::App* avg =
      app.add_subcommand("avg", "average checkpoints into a new file");
  avg->add_option("inputs", checkpoints, "checkpoint files")->required();
  avg->add_option("--out", out_path, "averaged checkpoint path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  if (train->parsed()) {
    std::vector<std::string> merged = sets;
    if (seed) merged.push_back("seed=" + std::to_string(*seed));
    return cmd_train(config_path, merged, out_dir, log);
  }
  if (decode->parsed()) {
    return cmd_decode(checkpoints, input_path, out_path, beam, alpha,
                      max_extra, log);
  }
  if (check->parsed()) {
    return run_check_suite(suite, dk, samples, std::cout) ? 0 : 3;
  }
  if (dump->parsed()) {
    return cmd_dump_attention(checkpoints.at(0), line, out_path, log);
  }
  average_checkpoints(checkpoints, out_path);
  log.info("averaged " + std::to_string(checkpoints.size()) +
           " checkpoints into " + out_path);
  return 0;
}

}  // namespace

}  // namespace atnl::cli

int main(int argc, char** argv) {
  using namespace atnl::cli;
  std::optional<Logger> log;
  try {
    log.emplace(log_level_from_env());
  } catch (const atnl::ConfigError& e) {
    std::cerr << "[error] " << e.what() << '\n';
    return 1;
  }
  try {
    return run(argc, argv, *log);
  } catch (const atnl::ConfigError& e) {
    log->error(e.what());
    return 1;
  } catch (const atnl::DataError& e) {
    log->error(e.what());
    return 1;
  } catch (const atnl::VocabError& e) {
    log->error(e.what());
    return 1;
  } catch (const atnl::Error& e) {
    log->error(e.what());
    return 2;
  } catch (const std::exception& e) {
    log->error(e.what());
    return 2;
  }
}
