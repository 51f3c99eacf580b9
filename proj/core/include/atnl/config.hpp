#pragma once

// Run configuration: the merged model, optimizer, and task settings a
// command works from. Parsing is fail-closed: unknown or duplicate keys
// are errors, and the effective configuration can be echoed back as
// key=value text so a run log states exactly what was used.

#include <string>
#include <vector>

#include "atnl/data.hpp"
#include "atnl/kv.hpp"
#include "atnl/model.hpp"
#include "atnl/train.hpp"

namespace atnl {

/// What the model trains and evaluates on. Either a synthetic task drawn
/// from (kind, lengths, counts, seed) or, when data_file is set, pairs
/// read from disk.
struct TaskConfig {
  TaskKind kind = TaskKind::copy;
  std::string data_file;  // empty: synthesize the corpus instead
  std::size_t train_count = 2048;
  std::size_t eval_count = 256;
  std::size_t len_min = 3;
  std::size_t len_max = 10;

  void validate() const;
};

/// Defaults describe a desk-scale model (2 layers, d_model 64, vocab 16)
/// rather than the published shapes; `preset = base|big` switches to those.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  TaskConfig task;

  RunConfig();

  /// Field-level validation plus cross checks (task lengths must fit the
  /// model's positional range). Throws ConfigError.
  void validate() const;
};

/// Builds a RunConfig from key=value entries. A `preset = base|big` entry
/// is applied before everything else so explicit keys override it.
/// Unknown keys and duplicate keys throw ConfigError. The result is
/// validated.
RunConfig run_config_from_entries(const std::vector<KeyValue>& entries);

/// Reads a config file (skipped when path is empty) and applies
/// `key=value` override strings in order. Overrides may repeat file keys;
/// the last assignment wins.
RunConfig load_run_config(const std::string& path,
                          const std::vector<std::string>& overrides);

/// The effective configuration, one `key = value` line per field, fixed
/// order. Feeding the text back through run_config_from_entries
/// reconstructs the same configuration.
std::string run_config_to_text(const RunConfig& cfg);

}  // namespace atnl
