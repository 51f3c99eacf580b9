#include "atnl/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "atnl/errors.hpp"

namespace atnl {

void TaskConfig::validate() const {
  if (len_min < 1) throw ConfigError("len_min must be at least 1");
  if (len_min > len_max) throw ConfigError("len_min must not exceed len_max");
  if (train_count < 1) throw ConfigError("train_count must be positive");
  if (eval_count < 1) throw ConfigError("eval_count must be positive");
}

RunConfig::RunConfig() {
  model.n_layers = 2;
  model.d_model = 64;
  model.d_ff = 128;
  model.heads = 4;
  model.d_k = 16;
  model.d_v = 16;
  model.vocab_size = 16;
  model.max_len = 64;
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  task.validate();
  // a target row carries BOS plus the symbols, so len_max + 1 positions
  if (task.len_max + 1 > model.max_len) {
    throw ConfigError("len_max " + std::to_string(task.len_max) +
                      " does not fit max_len " +
                      std::to_string(model.max_len));
  }
}

namespace {

PeKind pe_kind_from_text(const std::string& text) {
  if (text == "sinusoidal") return PeKind::sinusoidal;
  if (text == "learned") return PeKind::learned;
  throw ConfigError("unknown pe '" + text + "' (sinusoidal, learned)");
}

FfnKind ffn_kind_from_text(const std::string& text) {
  if (text == "relu_ffn") return FfnKind::relu_ffn;
  if (text == "aop") return FfnKind::aop;
  throw ConfigError("unknown ffn '" + text + "' (relu_ffn, aop)");
}

void apply_entry(RunConfig& cfg, const KeyValue& kv) {
  const std::string& k = kv.key;
  const std::string& v = kv.value;
  if (k == "n_layers") cfg.model.n_layers = parse_uint(k, v);
  else if (k == "d_model") cfg.model.d_model = parse_uint(k, v);
  else if (k == "d_ff") cfg.model.d_ff = parse_uint(k, v);
  else if (k == "heads") cfg.model.heads = parse_uint(k, v);
  else if (k == "d_k") cfg.model.d_k = parse_uint(k, v);
  else if (k == "d_v") cfg.model.d_v = parse_uint(k, v);
  else if (k == "p_drop") cfg.model.p_drop = parse_double(k, v);
  else if (k == "eps_ls") cfg.model.eps_ls = parse_double(k, v);
  else if (k == "vocab_size") cfg.model.vocab_size = parse_uint(k, v);
  else if (k == "max_len") cfg.model.max_len = parse_uint(k, v);
  else if (k == "pe") cfg.model.pe_kind = pe_kind_from_text(v);
  else if (k == "ffn") cfg.model.ffn_kind = ffn_kind_from_text(v);
  else if (k == "aop_heads") cfg.model.aop.h_p = parse_uint(k, v);
  else if (k == "aop_d_pk") cfg.model.aop.d_pk = parse_uint(k, v);
  else if (k == "aop_d_pv") cfg.model.aop.d_pv = parse_uint(k, v);
  else if (k == "aop_n_p") cfg.model.aop.n_p = parse_uint(k, v);
  else if (k == "tie_weights") cfg.model.tie_weights = parse_bool(k, v);
  else if (k == "warmup_steps") cfg.train.warmup_steps = parse_uint(k, v);
  else if (k == "beta1") cfg.train.beta1 = parse_double(k, v);
  else if (k == "beta2") cfg.train.beta2 = parse_double(k, v);
  else if (k == "adam_eps") cfg.train.adam_eps = parse_double(k, v);
  else if (k == "token_budget") cfg.train.token_budget = parse_uint(k, v);
  else if (k == "total_steps") cfg.train.total_steps = parse_uint(k, v);
  else if (k == "checkpoint_interval")
    cfg.train.checkpoint_interval = parse_uint(k, v);
  else if (k == "seed") cfg.train.seed = parse_uint(k, v);
  else if (k == "task") cfg.task.kind = task_kind_from_text(v);
  else if (k == "data_file") cfg.task.data_file = v;
  else if (k == "train_count") cfg.task.train_count = parse_uint(k, v);
  else if (k == "eval_count") cfg.task.eval_count = parse_uint(k, v);
  else if (k == "len_min") cfg.task.len_min = parse_uint(k, v);
  else if (k == "len_max") cfg.task.len_max = parse_uint(k, v);
  else throw ConfigError("unknown config key '" + k + "'");
}

void apply_preset(RunConfig& cfg, const std::string& name) {
  const std::size_t vocab = cfg.model.vocab_size;
  if (name == "base") cfg.model = ModelConfig::base(vocab);
  else if (name == "big") cfg.model = ModelConfig::big(vocab);
  else throw ConfigError("unknown preset '" + name + "' (base, big)");
}

}  // namespace

RunConfig run_config_from_entries(const std::vector<KeyValue>& entries) {
  RunConfig cfg;
  std::set<std::string> seen;
  for (const KeyValue& kv : entries) {
    if (!seen.insert(kv.key).second) {
      throw ConfigError("duplicate config key '" + kv.key + "'");
    }
  }
  for (const KeyValue& kv : entries) {
    if (kv.key == "preset") apply_preset(cfg, kv.value);
  }
  for (const KeyValue& kv : entries) {
    if (kv.key == "preset") continue;
    apply_entry(cfg, kv);
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path,
                          const std::vector<std::string>& overrides) {
  std::vector<KeyValue> merged;
  if (!path.empty()) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    std::ostringstream text;
    text << in.rdbuf();
    merged = parse_key_values(text.str());
    std::set<std::string> seen;
    for (const KeyValue& kv : merged) {
      if (!seen.insert(kv.key).second) {
        throw ConfigError("duplicate config key '" + kv.key + "' in " + path);
      }
    }
  }
  for (const std::string& text : overrides) {
    const std::vector<KeyValue> parsed = parse_key_values(text);
    if (parsed.size() != 1) {
      throw ConfigError("override '" + text + "' is not a single key=value");
    }
    bool replaced = false;
    for (KeyValue& kv : merged) {
      if (kv.key == parsed[0].key) {
        kv.value = parsed[0].value;
        replaced = true;
        break;
      }
    }
    if (!replaced) merged.push_back(parsed[0]);
  }
  return run_config_from_entries(merged);
}

std::string run_config_to_text(const RunConfig& cfg) {
  std::ostringstream out;
  auto put = [&](const char* key, const std::string& value) {
    out << key << " = " << value << "\n";
  };
  put("n_layers", std::to_string(cfg.model.n_layers));
  put("d_model", std::to_string(cfg.model.d_model));
  put("d_ff", std::to_string(cfg.model.d_ff));
  put("heads", std::to_string(cfg.model.heads));
  put("d_k", std::to_string(cfg.model.d_k));
  put("d_v", std::to_string(cfg.model.d_v));
  put("p_drop", format_double(cfg.model.p_drop));
  put("eps_ls", format_double(cfg.model.eps_ls));
  put("vocab_size", std::to_string(cfg.model.vocab_size));
  put("max_len", std::to_string(cfg.model.max_len));
  put("pe", cfg.model.pe_kind == PeKind::sinusoidal ? "sinusoidal" : "learned");
  put("ffn", cfg.model.ffn_kind == FfnKind::relu_ffn ? "relu_ffn" : "aop");
  put("aop_heads", std::to_string(cfg.model.aop.h_p));
  put("aop_d_pk", std::to_string(cfg.model.aop.d_pk));
  put("aop_d_pv", std::to_string(cfg.model.aop.d_pv));
  put("aop_n_p", std::to_string(cfg.model.aop.n_p));
  put("tie_weights", cfg.model.tie_weights ? "true" : "false");
  put("warmup_steps", std::to_string(cfg.train.warmup_steps));
  put("beta1", format_double(cfg.train.beta1));
  put("beta2", format_double(cfg.train.beta2));
  put("adam_eps", format_double(cfg.train.adam_eps));
  put("token_budget", std::to_string(cfg.train.token_budget));
  put("total_steps", std::to_string(cfg.train.total_steps));
  put("checkpoint_interval", std::to_string(cfg.train.checkpoint_interval));
  put("seed", std::to_string(cfg.train.seed));
  put("task", task_kind_to_text(cfg.task.kind));
  if (!cfg.task.data_file.empty()) put("data_file", cfg.task.data_file);
  put("train_count", std::to_string(cfg.task.train_count));
  put("eval_count", std::to_string(cfg.task.eval_count));
  put("len_min", std::to_string(cfg.task.len_min));
  put("len_max", std::to_string(cfg.task.len_max));
  return out.str();
}

}  // namespace atnl
