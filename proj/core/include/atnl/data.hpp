#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "atnl/rng.hpp"

namespace atnl {

inline constexpr int kPadId = 0;
inline constexpr int kBosId = 1;
inline constexpr int kEosId = 2;
inline constexpr int kFirstSymbolId = 3;

/// Bijection between token ids and printable symbols. Ids 0..2 are reserved
/// for padding and the sequence delimiters and never name task symbols.
class Vocabulary {
 public:
  Vocabulary();

  /// Reserved ids plus (vocab_size - 3) generated symbols: single letters
  /// while the alphabet lasts, then "s<id>".
  static Vocabulary synthetic(std::size_t vocab_size);

  int add_symbol(const std::string& symbol);
  std::size_t size() const { return symbols_.size(); }

  int id_of(const std::string& symbol) const;
  const std::string& symbol_of(int id) const;

  /// Space-separated symbols <-> id sequence. Unknown symbols and ids throw.
  std::vector<int> encode(const std::string& line) const;
  std::string decode(std::span<const int> ids) const;

 private:
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, int> index_;
};

enum class TaskKind { copy, reverse, sort };

TaskKind task_kind_from_text(const std::string& text);
std::string task_kind_to_text(TaskKind kind);

struct Pair {
  std::vector<int> src;
  std::vector<int> tgt;
};

/// Deterministic synthetic corpus: sources drawn uniformly over non-reserved
/// ids with lengths uniform in [len_min, len_max], targets derived per task.
std::vector<Pair> synth_task(TaskKind kind, std::size_t vocab_size,
                             std::size_t len_min, std::size_t len_max,
                             std::size_t count, std::uint64_t seed,
                             std::size_t max_len = 512);

/// One training batch. Rows are padded to the batch-local maxima; target
/// inputs are offset one position behind target outputs.
struct Batch {
  std::vector<std::vector<int>> src;      // B x L_s, PAD after each source
  std::vector<std::vector<int>> tgt_in;   // B x L_t, BOS-prefixed
  std::vector<std::vector<int>> tgt_out;  // B x L_t, EOS-suffixed
  std::vector<std::vector<std::uint8_t>> src_pad;  // 1 where src is PAD
  std::vector<std::vector<std::uint8_t>> tgt_pad;  // 1 where tgt_in is PAD

  std::size_t size() const { return src.size(); }
  std::size_t src_len() const { return src.empty() ? 0 : src[0].size(); }
  std::size_t tgt_len() const { return tgt_in.empty() ? 0 : tgt_in[0].size(); }
};

Batch make_batch(std::span<const Pair> pairs);

/// Bucket pairs by source length and emit batches whose padded footprint
/// (rows x padded length) stays within token_budget for source and target
/// sides independently. Bucket order is shuffled by seed; pairs inside a
/// bucket keep corpus order. Every pair appears exactly once.
std::vector<Batch> batch_by_length(std::span<const Pair> pairs,
                                   std::size_t token_budget,
                                   std::uint64_t seed);

/// Endless batch source: replays the corpus epoch after epoch, reshuffling
/// bucket order with a per-epoch stream split off the base seed.
class BatchStream {
 public:
  BatchStream(std::vector<Pair> pairs, std::size_t token_budget,
              std::uint64_t seed);

  const Batch& next();
  std::size_t epoch() const { return epoch_; }
  std::size_t batches_per_epoch() const { return batches_.size(); }

 private:
  void reshuffle();

  std::vector<Pair> pairs_;
  std::size_t token_budget_;
  std::uint64_t seed_;
  std::size_t epoch_ = 0;
  std::size_t cursor_ = 0;
  std::vector<Batch> batches_;
};

/// Dataset file: UTF-8 lines of "src TAB tgt", symbols space-separated.
std::vector<Pair> parse_pairs(const std::string& text, const Vocabulary& vocab);
std::vector<Pair> read_pairs(const std::string& path, const Vocabulary& vocab);

}  // namespace atnl
