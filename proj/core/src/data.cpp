#include "atnl/data.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <utility>

#include "atnl/errors.hpp"

namespace atnl {

Vocabulary::Vocabulary() {
  for (const char* s : {"<pad>", "<bos>", "<eos>"}) {
    index_.emplace(s, static_cast<int>(symbols_.size()));
    symbols_.emplace_back(s);
  }
}

Vocabulary Vocabulary::synthetic(std::size_t vocab_size) {
  if (vocab_size <= static_cast<std::size_t>(kFirstSymbolId)) {
    throw ConfigError("synthetic vocabulary needs vocab_size > 3, got " +
                      std::to_string(vocab_size));
  }
  Vocabulary v;
  for (std::size_t id = kFirstSymbolId; id < vocab_size; ++id) {
    const std::size_t ordinal = id - kFirstSymbolId;
    if (ordinal < 26) {
      v.add_symbol(std::string(1, static_cast<char>('a' + ordinal)));
    } else {
      v.add_symbol("s" + std::to_string(id));
    }
  }
  return v;
}

int Vocabulary::add_symbol(const std::string& symbol) {
  if (symbol.empty() || symbol.find_first_of(" \t\n\r") != std::string::npos) {
    throw VocabError("symbol must be non-empty without whitespace: '" + symbol + "'");
  }
  if (index_.count(symbol) != 0) {
    throw VocabError("duplicate symbol '" + symbol + "'");
  }
  const int id = static_cast<int>(symbols_.size());
  index_.emplace(symbol, id);
  symbols_.push_back(symbol);
  return id;
}

int Vocabulary::id_of(const std::string& symbol) const {
  auto it = index_.find(symbol);
  if (it == index_.end()) throw VocabError("unknown symbol '" + symbol + "'");
  return it->second;
}

const std::string& Vocabulary::symbol_of(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= symbols_.size()) {
    throw VocabError("id " + std::to_string(id) + " outside vocabulary of " +
                     std::to_string(symbols_.size()));
  }
  return symbols_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(const std::string& line) const {
  std::vector<int> ids;
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) ids.push_back(id_of(tok));
  return ids;
}

std::string Vocabulary::decode(std::span<const int> ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i > 0) out += ' ';
    out += symbol_of(ids[i]);
  }
  return out;
}

TaskKind task_kind_from_text(const std::string& text) {
  if (text == "copy") return TaskKind::copy;
  if (text == "reverse") return TaskKind::reverse;
  if (text == "sort") return TaskKind::sort;
  throw ConfigError("unknown task '" + text + "' (copy, reverse, sort)");
}

std::string task_kind_to_text(TaskKind kind) {
  switch (kind) {
    case TaskKind::copy: return "copy";
    case TaskKind::reverse: return "reverse";
    case TaskKind::sort: return "sort";
  }
  throw ContractError("invalid task kind");
}

std::vector<Pair> synth_task(TaskKind kind, std::size_t vocab_size,
                             std::size_t len_min, std::size_t len_max,
                             std::size_t count, std::uint64_t seed,
                             std::size_t max_len) {
  if (vocab_size <= static_cast<std::size_t>(kFirstSymbolId)) {
    throw ConfigError("synth_task needs vocab_size > 3");
  }
  if (len_min < 1 || len_min > len_max || len_max > max_len) {
    throw ConfigError("invalid length range [" + std::to_string(len_min) +
                      ", " + std::to_string(len_max) + "] for max_len " +
                      std::to_string(max_len));
  }
  const std::uint64_t n_symbols = vocab_size - kFirstSymbolId;
  Rng rng(seed);
  std::vector<Pair> pairs;
  pairs.reserve(count);
  for (std::size_t c = 0; c < count; ++c) {
    const std::size_t len = len_min + rng.next_below(len_max - len_min + 1);
    Pair p;
    p.src.reserve(len);
    for (std::size_t i = 0; i < len; ++i) {
      p.src.push_back(kFirstSymbolId + static_cast<int>(rng.next_below(n_symbols)));
    }
    p.tgt = p.src;
    switch (kind) {
      case TaskKind::copy: break;
      case TaskKind::reverse: std::reverse(p.tgt.begin(), p.tgt.end()); break;
      case TaskKind::sort: std::sort(p.tgt.begin(), p.tgt.end()); break;
    }
    pairs.push_back(std::move(p));
  }
  return pairs;
}

Batch make_batch(std::span<const Pair> pairs) {
  if (pairs.empty()) throw ContractError("make_batch needs at least one pair");
  std::size_t ls = 0;
  std::size_t lt = 0;
  for (const Pair& p : pairs) {
    ls = std::max(ls, p.src.size());
    lt = std::max(lt, p.tgt.size() + 1);  // room for the BOS/EOS offset
  }
  Batch b;
  for (const Pair& p : pairs) {
    std::vector<int> src(ls, kPadId);
    std::vector<std::uint8_t> spad(ls, 1);
    std::copy(p.src.begin(), p.src.end(), src.begin());
    std::fill(spad.begin(), spad.begin() + static_cast<std::ptrdiff_t>(p.src.size()), 0);

    std::vector<int> tin(lt, kPadId);
    std::vector<int> tout(lt, kPadId);
    std::vector<std::uint8_t> tpad(lt, 1);
    tin[0] = kBosId;
    std::copy(p.tgt.begin(), p.tgt.end(), tin.begin() + 1);
    std::copy(p.tgt.begin(), p.tgt.end(), tout.begin());
    tout[p.tgt.size()] = kEosId;
    std::fill(tpad.begin(), tpad.begin() + static_cast<std::ptrdiff_t>(p.tgt.size() + 1), 0);

    b.src.push_back(std::move(src));
    b.src_pad.push_back(std::move(spad));
    b.tgt_in.push_back(std::move(tin));
    b.tgt_out.push_back(std::move(tout));
    b.tgt_pad.push_back(std::move(tpad));
  }
  return b;
}

std::vector<Batch> batch_by_length(std::span<const Pair> pairs,
                                   std::size_t token_budget,
                                   std::uint64_t seed) {
  // bucket indices by source length, corpus order within a bucket
  std::map<std::size_t, std::vector<std::size_t>> buckets;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const Pair& p = pairs[i];
    if (p.src.size() > token_budget || p.tgt.size() + 1 > token_budget) {
      throw DataError("pair " + std::to_string(i) + " alone exceeds token budget " +
                      std::to_string(token_budget));
    }
    buckets[p.src.size()].push_back(i);
  }

  struct Group {
    std::size_t bucket_len;
    std::vector<std::vector<std::size_t>> batches;
  };
  std::vector<Group> groups;
  for (const auto& [ls, idx] : buckets) {
    Group group{ls, {}};
    std::vector<std::size_t> cur;
    std::size_t cur_lt = 0;
    for (std::size_t i : idx) {
      const std::size_t lt = pairs[i].tgt.size() + 1;
      const std::size_t rows = cur.size() + 1;
      const std::size_t new_lt = std::max(cur_lt, lt);
      if (!cur.empty() && (rows * ls > token_budget || rows * new_lt > token_budget)) {
        group.batches.push_back(std::move(cur));
        cur.clear();
        cur_lt = 0;
      }
      cur.push_back(i);
      cur_lt = std::max(cur_lt, lt);
    }
    if (!cur.empty()) group.batches.push_back(std::move(cur));
    groups.push_back(std::move(group));
  }

  // shuffle bucket order only; lengths stay homogeneous inside each batch
  Rng rng(seed);
  for (std::size_t i = groups.size(); i > 1; --i) {
    const std::size_t j = rng.next_below(i);
    std::swap(groups[i - 1], groups[j]);
  }

  std::vector<Batch> out;
  for (const Group& group : groups) {
    for (const std::vector<std::size_t>& batch_idx : group.batches) {
      std::vector<Pair> members;
      members.reserve(batch_idx.size());
      for (std::size_t i : batch_idx) members.push_back(pairs[i]);
      out.push_back(make_batch(members));
    }
  }
  return out;
}

BatchStream::BatchStream(std::vector<Pair> pairs, std::size_t token_budget,
                         std::uint64_t seed)
    : pairs_(std::move(pairs)), token_budget_(token_budget), seed_(seed) {
  if (pairs_.empty()) throw ContractError("batch stream needs a non-empty corpus");
  reshuffle();
}

void BatchStream::reshuffle() {
  const std::uint64_t epoch_seed = Rng(seed_).split(epoch_).next_u64();
  batches_ = batch_by_length(pairs_, token_budget_, epoch_seed);
  cursor_ = 0;
}

const Batch& BatchStream::next() {
  if (cursor_ == batches_.size()) {
    ++epoch_;
    reshuffle();
  }
  return batches_[cursor_++];
}

std::vector<Pair> parse_pairs(const std::string& text, const Vocabulary& vocab) {
  std::vector<Pair> pairs;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw DataError("line " + std::to_string(line_no) +
                      ": expected 'src<TAB>tgt'");
    }
    Pair p;
    p.src = vocab.encode(line.substr(0, tab));
    p.tgt = vocab.encode(line.substr(tab + 1));
    if (p.src.empty() || p.tgt.empty()) {
      throw DataError("line " + std::to_string(line_no) +
                      ": empty source or target");
    }
    pairs.push_back(std::move(p));
  }
  return pairs;
}

std::vector<Pair> read_pairs(const std::string& path, const Vocabulary& vocab) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_pairs(buf.str(), vocab);
}

}  // namespace atnl
