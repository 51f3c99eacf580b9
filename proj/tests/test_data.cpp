#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <doctest.h>

#include "atnl/data.hpp"
#include "atnl/errors.hpp"

using namespace atnl;

namespace {

// strip padding back off a batch row pair so corpora can be compared as sets
Pair recover_pair(const Batch& b, std::size_t row) {
  Pair p;
  for (std::size_t j = 0; j < b.src_len(); ++j) {
    if (b.src_pad[row][j] == 0) p.src.push_back(b.src[row][j]);
  }
  std::size_t real = 0;
  for (std::size_t j = 0; j < b.tgt_len(); ++j) {
    if (b.tgt_pad[row][j] == 0) ++real;
  }
  for (std::size_t j = 0; j + 1 < real; ++j) p.tgt.push_back(b.tgt_out[row][j]);
  return p;
}

bool same_corpus(std::vector<Pair> a, std::vector<Pair> b) {
  auto key = [](const Pair& p) { return std::make_pair(p.src, p.tgt); };
  auto lt = [&](const Pair& x, const Pair& y) { return key(x) < key(y); };
  std::sort(a.begin(), a.end(), lt);
  std::sort(b.begin(), b.end(), lt);
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].src != b[i].src || a[i].tgt != b[i].tgt) return false;
  }
  return true;
}

std::vector<Pair> flatten(const std::vector<Batch>& batches) {
  std::vector<Pair> out;
  for (const Batch& b : batches) {
    for (std::size_t r = 0; r < b.size(); ++r) out.push_back(recover_pair(b, r));
  }
  return out;
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("synthetic vocabulary is a bijection with reserved prefix") {
  Vocabulary v = Vocabulary::synthetic(16);
  CHECK(v.size() == 16);
  CHECK(v.symbol_of(kPadId) == "<pad>");
  CHECK(v.symbol_of(kBosId) == "<bos>");
  CHECK(v.symbol_of(kEosId) == "<eos>");
  CHECK(v.symbol_of(3) == "a");
  CHECK(v.symbol_of(15) == "m");
  CHECK(v.id_of("a") == 3);
  CHECK(v.id_of("m") == 15);

  std::vector<int> ids = {5, 3, 4, 5};
  CHECK(v.decode(ids) == "c a b c");
  CHECK(v.encode("c a b c") == ids);
  CHECK(v.encode("  c   a  ") == std::vector<int>{5, 3});
  CHECK(v.encode("").empty());

  CHECK_THROWS_AS(v.id_of("zz"), VocabError);
  CHECK_THROWS_AS(v.symbol_of(16), VocabError);
  CHECK_THROWS_AS(v.symbol_of(-1), VocabError);
  CHECK_THROWS_AS(Vocabulary::synthetic(3), ConfigError);

  Vocabulary wide = Vocabulary::synthetic(32);
  CHECK(wide.symbol_of(28) == "z");
  CHECK(wide.symbol_of(29) == "s29");
  CHECK(wide.id_of("s31") == 31);
}

TEST_CASE("vocabulary rejects malformed and duplicate symbols") {
  Vocabulary v;
  v.add_symbol("hello");
  CHECK(v.id_of("hello") == 3);
  CHECK_THROWS_AS(v.add_symbol("hello"), VocabError);
  CHECK_THROWS_AS(v.add_symbol(""), VocabError);
  CHECK_THROWS_AS(v.add_symbol("two words"), VocabError);
  CHECK_THROWS_AS(v.add_symbol("tab\there"), VocabError);
}

TEST_CASE("synthetic tasks derive targets from sources") {
  auto check_kind = [](TaskKind kind) {
    std::vector<Pair> pairs = synth_task(kind, 16, 3, 10, 50, 123);
    REQUIRE(pairs.size() == 50);
    for (const Pair& p : pairs) {
      CHECK(p.src.size() >= 3);
      CHECK(p.src.size() <= 10);
      CHECK(p.tgt.size() == p.src.size());
      for (int t : p.src) {
        CHECK(t >= kFirstSymbolId);
        CHECK(t < 16);
      }
      std::vector<int> want = p.src;
      if (kind == TaskKind::reverse) std::reverse(want.begin(), want.end());
      if (kind == TaskKind::sort) std::sort(want.begin(), want.end());
      CHECK(p.tgt == want);
    }
  };
  check_kind(TaskKind::copy);
  check_kind(TaskKind::reverse);
  check_kind(TaskKind::sort);
}

TEST_CASE("synthetic corpora are seed-deterministic") {
  std::vector<Pair> a = synth_task(TaskKind::copy, 16, 1, 8, 40, 7);
  std::vector<Pair> b = synth_task(TaskKind::copy, 16, 1, 8, 40, 7);
  std::vector<Pair> c = synth_task(TaskKind::copy, 16, 1, 8, 40, 8);
  REQUIRE(a.size() == b.size());
  bool all_equal = true;
  for (std::size_t i = 0; i < a.size(); ++i) {
    all_equal = all_equal && a[i].src == b[i].src && a[i].tgt == b[i].tgt;
  }
  CHECK(all_equal);
  bool any_diff = false;
  for (std::size_t i = 0; i < std::min(a.size(), c.size()); ++i) {
    any_diff = any_diff || a[i].src != c[i].src;
  }
  CHECK(any_diff);
}

TEST_CASE("synthetic task validates its ranges") {
  CHECK_THROWS_AS(synth_task(TaskKind::copy, 3, 1, 5, 10, 0), ConfigError);
  CHECK_THROWS_AS(synth_task(TaskKind::copy, 16, 0, 5, 10, 0), ConfigError);
  CHECK_THROWS_AS(synth_task(TaskKind::copy, 16, 6, 5, 10, 0), ConfigError);
  CHECK_THROWS_AS(synth_task(TaskKind::copy, 16, 1, 600, 10, 0), ConfigError);
  CHECK_THROWS_AS(task_kind_from_text("shuffle"), ConfigError);
  CHECK(task_kind_from_text("reverse") == TaskKind::reverse);
  CHECK(task_kind_to_text(TaskKind::sort) == "sort");
}

TEST_CASE("batches pad, offset and mask correctly") {
  std::vector<Pair> pairs = {{{5, 7, 9}, {9, 7, 5}}, {{4, 3}, {3, 4}}};
  Batch b = make_batch(pairs);
  REQUIRE(b.size() == 2);
  CHECK(b.src_len() == 3);
  CHECK(b.tgt_len() == 4);

  CHECK(b.src[0] == std::vector<int>{5, 7, 9});
  CHECK(b.src[1] == std::vector<int>{4, 3, kPadId});
  CHECK(b.src_pad[0] == std::vector<std::uint8_t>{0, 0, 0});
  CHECK(b.src_pad[1] == std::vector<std::uint8_t>{0, 0, 1});

  CHECK(b.tgt_in[0] == std::vector<int>{kBosId, 9, 7, 5});
  CHECK(b.tgt_out[0] == std::vector<int>{9, 7, 5, kEosId});
  CHECK(b.tgt_in[1] == std::vector<int>{kBosId, 3, 4, kPadId});
  CHECK(b.tgt_out[1] == std::vector<int>{3, 4, kEosId, kPadId});
  CHECK(b.tgt_pad[1] == std::vector<std::uint8_t>{0, 0, 0, 1});

  for (std::size_t r = 0; r < b.size(); ++r) {
    CHECK(b.tgt_in[r][0] == kBosId);
    int last_non_pad = -1;
    for (std::size_t j = 0; j < b.tgt_len(); ++j) {
      if (b.tgt_pad[r][j] == 0) last_non_pad = b.tgt_out[r][j];
      if (j + 1 < b.tgt_len() && b.tgt_pad[r][j + 1] == 0) {
        CHECK(b.tgt_in[r][j + 1] == b.tgt_out[r][j]);
      }
    }
    CHECK(last_non_pad == kEosId);
  }

  CHECK_THROWS_AS(make_batch({}), ContractError);
}

TEST_CASE("budget of one footprint yields singleton batches") {
  std::vector<Pair> pairs = synth_task(TaskKind::copy, 16, 4, 4, 6, 1);
  // src footprint 4, tgt footprint 5; a budget of 5 fits exactly one pair
  std::vector<Batch> batches = batch_by_length(pairs, 5, 0);
  CHECK(batches.size() == 6);
  for (const Batch& b : batches) CHECK(b.size() == 1);
}

TEST_CASE("uniform lengths pack to the budget bound") {
  std::vector<Pair> pairs = synth_task(TaskKind::copy, 16, 4, 4, 8, 1);
  // tgt rows cost 5 tokens; 4 rows hit the 20-token budget exactly
  std::vector<Batch> batches = batch_by_length(pairs, 20, 0);
  CHECK(batches.size() == 2);
  for (const Batch& b : batches) {
    CHECK(b.size() == 4);
    CHECK(b.size() * b.src_len() <= 20);
    CHECK(b.size() * b.tgt_len() <= 20);
  }
}

TEST_CASE("an epoch preserves the corpus exactly") {
  std::vector<Pair> pairs = synth_task(TaskKind::reverse, 16, 1, 10, 100, 42);
  std::vector<Batch> batches = batch_by_length(pairs, 64, 9);

  std::size_t corpus_tokens = 0;
  for (const Pair& p : pairs) corpus_tokens += p.src.size();
  std::size_t batched_tokens = 0;
  for (const Batch& b : batches) {
    CHECK(b.size() * b.src_len() <= 64);
    CHECK(b.size() * b.tgt_len() <= 64);
    for (const auto& mask : b.src_pad) {
      for (std::uint8_t m : mask) batched_tokens += m == 0 ? 1 : 0;
    }
  }
  CHECK(batched_tokens == corpus_tokens);
  CHECK(same_corpus(flatten(batches), pairs));
}

TEST_CASE("length bucketing keeps padding under half of each batch") {
  std::vector<Pair> pairs = synth_task(TaskKind::sort, 16, 1, 10, 200, 3);
  for (const Batch& b : batch_by_length(pairs, 64, 5)) {
    std::size_t pad = 0;
    std::size_t total = 0;
    for (const auto& mask : b.src_pad) {
      for (std::uint8_t m : mask) {
        pad += m;
        ++total;
      }
    }
    for (const auto& mask : b.tgt_pad) {
      for (std::uint8_t m : mask) {
        pad += m;
        ++total;
      }
    }
    CHECK(pad * 2 <= total);
  }
}

TEST_CASE("batching is deterministic per seed and varies across seeds") {
  std::vector<Pair> pairs = synth_task(TaskKind::copy, 16, 1, 10, 60, 11);
  auto order = [&](std::uint64_t seed) {
    std::vector<std::size_t> lens;
    for (const Batch& b : batch_by_length(pairs, 48, seed)) {
      lens.push_back(b.src_len());
    }
    return lens;
  };
  CHECK(order(1) == order(1));
  CHECK(order(1) != order(2));
}

TEST_CASE("budget violations are reported per side") {
  std::vector<Pair> long_src = {{std::vector<int>(9, 5), {5}}};
  CHECK_THROWS_AS(batch_by_length(long_src, 8, 0), DataError);

  std::vector<Pair> long_tgt = {{{5}, std::vector<int>(9, 5)}};
  CHECK_THROWS_AS(batch_by_length(long_tgt, 9, 0), DataError);

  // a skinny source with a fat target must batch by the target side
  std::vector<Pair> fat;
  for (int i = 0; i < 4; ++i) fat.push_back({{5}, std::vector<int>(9, 6)});
  std::vector<Batch> batches = batch_by_length(fat, 10, 0);
  CHECK(batches.size() == 4);
  for (const Batch& b : batches) CHECK(b.size() == 1);
}

TEST_CASE("batch stream wraps epochs and stays deterministic") {
  std::vector<Pair> pairs = synth_task(TaskKind::copy, 16, 2, 6, 17, 21);
  BatchStream stream(pairs, 24, 100);
  const std::size_t per_epoch = stream.batches_per_epoch();
  REQUIRE(per_epoch > 1);

  std::vector<Pair> epoch0;
  std::vector<Pair> epoch1;
  for (std::size_t i = 0; i < per_epoch; ++i) {
    const Batch& b = stream.next();
    for (std::size_t r = 0; r < b.size(); ++r) epoch0.push_back(recover_pair(b, r));
  }
  CHECK(stream.epoch() == 0);
  for (std::size_t i = 0; i < per_epoch; ++i) {
    const Batch& b = stream.next();
    for (std::size_t r = 0; r < b.size(); ++r) epoch1.push_back(recover_pair(b, r));
  }
  CHECK(stream.epoch() == 1);
  CHECK(same_corpus(epoch0, pairs));
  CHECK(same_corpus(epoch1, pairs));

  BatchStream replay(pairs, 24, 100);
  std::vector<Pair> replay0;
  for (std::size_t i = 0; i < per_epoch; ++i) {
    const Batch& b = replay.next();
    for (std::size_t r = 0; r < b.size(); ++r) replay0.push_back(recover_pair(b, r));
  }
  REQUIRE(replay0.size() == epoch0.size());
  for (std::size_t i = 0; i < replay0.size(); ++i) {
    CHECK(replay0[i].src == epoch0[i].src);
    CHECK(replay0[i].tgt == epoch0[i].tgt);
  }

  CHECK_THROWS_AS(BatchStream({}, 24, 0), ContractError);
}

TEST_CASE("dataset files parse and round trip through the vocabulary") {
  Vocabulary v = Vocabulary::synthetic(16);
  const std::string text = "a b c\tc b a\nd d\td d\n\n  \nb a\ta b\n";
  std::vector<Pair> pairs = parse_pairs(text, v);
  REQUIRE(pairs.size() == 3);
  CHECK(pairs[0].src == std::vector<int>{3, 4, 5});
  CHECK(pairs[0].tgt == std::vector<int>{5, 4, 3});
  CHECK(pairs[1].src == std::vector<int>{6, 6});
  CHECK(pairs[2].tgt == std::vector<int>{3, 4});

  CHECK_THROWS_AS(parse_pairs("a b c b a\n", v), DataError);
  CHECK_THROWS_AS(parse_pairs("a zz\tb\n", v), VocabError);
  CHECK_THROWS_AS(parse_pairs("\tb\n", v), DataError);
  CHECK_THROWS_AS(parse_pairs("a\t\n", v), DataError);

  const std::string path =
      (std::filesystem::temp_directory_path() / "atnl_pairs.tsv").string();
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << "a b\tb a\r\nc\tc\n";
  }
  std::vector<Pair> from_file = read_pairs(path, v);
  REQUIRE(from_file.size() == 2);
  CHECK(from_file[0].src == std::vector<int>{3, 4});
  CHECK(from_file[0].tgt == std::vector<int>{4, 3});
  CHECK_THROWS_AS(read_pairs(path + ".does_not_exist", v), DataError);
}

}  // TEST_SUITE
