#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <map>

#include "mrsgen/corpus.hpp"
#include "testutil.hpp"

using namespace mrsgen;
using corpus::Vocabulary;
using preprocess::ProcessedExample;

namespace {

ProcessedExample word_example(const std::vector<std::string>& symbols,
                              const std::vector<std::string>& target) {
  ProcessedExample ex;
  ex.seq.symbols = {"("};
  ex.seq.symbols.insert(ex.seq.symbols.end(), symbols.begin(), symbols.end());
  ex.seq.symbols.push_back(")");
  ex.seq.attributes.assign(ex.seq.symbols.size(), "");
  ex.target = target;
  return ex;
}

}  // namespace

TEST_CASE("vocabulary filters by frequency with UNK0 fallback") {
  std::vector<ProcessedExample> train;
  for (int i = 0; i < 5; ++i) train.push_back(word_example({"_boy_n_1"}, {"boy"}));
  train.push_back(word_example({"_qux_n_1"}, {"qux"}));

  Vocabulary vocab = corpus::build_vocabulary(train, 2);
  CHECK(vocab.symbols.lookup("_boy_n_1") >= Vocabulary::kNumReserved);
  CHECK(vocab.symbols.lookup("_qux_n_1") == Vocabulary::kUnk);
  CHECK(vocab.target.lookup("boy") >= Vocabulary::kNumReserved);
  CHECK(vocab.target.lookup("qux") == Vocabulary::kUnk);
  CHECK(vocab.symbols.lookup("never-seen") == Vocabulary::kUnk);

  // min_count 1 keeps everything.
  Vocabulary all = corpus::build_vocabulary(train, 1);
  CHECK(all.symbols.lookup("_qux_n_1") != Vocabulary::kUnk);
}

TEST_CASE("vocabulary reserves fixed low indices") {
  std::vector<ProcessedExample> train = testutil::tiny_corpus();
  Vocabulary vocab = corpus::build_vocabulary(train, 1);
  for (const auto* table :
       {&vocab.symbols, &vocab.bundles, &vocab.target}) {
    CHECK(table->tokens[Vocabulary::kPad] == "<pad>");
    CHECK(table->tokens[Vocabulary::kBos] == "<s>");
    CHECK(table->tokens[Vocabulary::kEos] == "</s>");
    CHECK(table->tokens[Vocabulary::kUnk] == "UNK0");
    CHECK(table->tokens[Vocabulary::kNone] == "<none>");
  }
  CHECK(vocab.bundle_id("") == Vocabulary::kNone);
  // Every observed bundle is kept regardless of frequency.
  CHECK(vocab.bundles.lookup("tense=FUT") != Vocabulary::kUnk);
}

TEST_CASE("vocabulary table size equals a brute-force frequency filter") {
  std::mt19937_64 rng(2024);
  const std::vector<std::string> pool = {"a", "b", "c", "d", "e",
                                         "f", "g", "h", "i", "j"};
  for (int round = 0; round < 50; ++round) {
    std::vector<ProcessedExample> train;
    std::map<std::string, int> freq;
    const int n = 3 + static_cast<int>(corpus::uniform_below(rng, 20));
    for (int i = 0; i < n; ++i) {
      const std::string& w = pool[corpus::uniform_below(rng, pool.size())];
      train.push_back(word_example({"_x_v_1"}, {w}));
      ++freq[w];
    }
    const int min_count = 1 + static_cast<int>(corpus::uniform_below(rng, 3));
    int expected = 0;
    for (const auto& [w, c] : freq) expected += c >= min_count;
    Vocabulary vocab = corpus::build_vocabulary(train, min_count);
    CHECK(vocab.target.size() == Vocabulary::kNumReserved + expected);
  }
}

TEST_CASE("vocabulary empty corpus and bad min_count are rejected") {
  CHECK_THROWS(corpus::build_vocabulary({}, 2));
  CHECK_THROWS(corpus::build_vocabulary(testutil::tiny_corpus(), 0));
}

TEST_CASE("vocabulary save/load round-trip with content hash") {
  namespace fs = std::filesystem;
  Vocabulary vocab = corpus::build_vocabulary(testutil::tiny_corpus(), 1);
  fs::path dir = fs::temp_directory_path() / "mrsgen_vocab_test";
  fs::create_directories(dir);
  std::string prefix = (dir / "vocab").string();
  corpus::save_vocabulary(vocab, prefix);
  Vocabulary back = corpus::load_vocabulary(prefix);
  CHECK(back.symbols.tokens == vocab.symbols.tokens);
  CHECK(back.bundles.tokens == vocab.bundles.tokens);
  CHECK(back.target.tokens == vocab.target.tokens);
  CHECK(back.symbols.content_hash() == vocab.symbols.content_hash());
  fs::remove_all(dir);
}

TEST_CASE("gold/silver mixing hits the 1:2 ratio") {
  auto corpus_of = [](int n, const std::string& provenance) {
    std::vector<ProcessedExample> out;
    for (int i = 0; i < n; ++i) {
      ProcessedExample ex = word_example({"_x_v_1"}, {std::to_string(i)});
      ex.provenance = provenance;
      ex.domain = std::to_string(i);  // identity tag
      out.push_back(ex);
    }
    return out;
  };

  SUBCASE("upsampling by whole copies") {
    auto mixed = corpus::mix_gold_silver(corpus_of(100, "gold"),
                                         corpus_of(600, "silver"), 7);
    CHECK(mixed.size() == 900);
    std::map<std::string, int> gold_counts;
    int silver = 0;
    for (const auto& ex : mixed) {
      if (ex.provenance == "gold") {
        ++gold_counts[ex.domain];
      } else {
        ++silver;
      }
    }
    CHECK(silver == 600);
    for (const auto& [id, count] : gold_counts) CHECK(count == 3);
    CHECK(gold_counts.size() == 100);
  }

  SUBCASE("truncation when gold is large") {
    auto mixed = corpus::mix_gold_silver(corpus_of(500, "gold"),
                                         corpus_of(600, "silver"), 7);
    int gold = 0;
    for (const auto& ex : mixed) gold += ex.provenance == "gold";
    CHECK(gold == 300);
    CHECK(mixed.size() == 900);
  }

  SUBCASE("empty gold warns and returns silver") {
    std::string warning;
    auto mixed =
        corpus::mix_gold_silver({}, corpus_of(10, "silver"), 7, &warning);
    CHECK(mixed.size() == 10);
    CHECK(!warning.empty());
  }

  SUBCASE("ratio within one example on random sizes, silver kept once") {
    std::mt19937_64 rng(123);
    for (int i = 0; i < 100; ++i) {
      const int g = 1 + static_cast<int>(corpus::uniform_below(rng, 400));
      const int s = 1 + static_cast<int>(corpus::uniform_below(rng, 900));
      auto mixed = corpus::mix_gold_silver(corpus_of(g, "gold"),
                                           corpus_of(s, "silver"), i);
      long long gold = 0;
      std::map<std::string, int> silver_seen;
      for (const auto& ex : mixed) {
        if (ex.provenance == "gold") {
          ++gold;
        } else {
          ++silver_seen[ex.domain];
        }
      }
      REQUIRE(std::llabs(2 * gold - s) <= 1);
      REQUIRE(static_cast<int>(silver_seen.size()) == s);
      for (const auto& [id, count] : silver_seen) REQUIRE(count == 1);
    }
  }

  SUBCASE("seeded shuffle is deterministic") {
    auto a = corpus::mix_gold_silver(corpus_of(20, "gold"),
                                     corpus_of(50, "silver"), 42);
    auto b = corpus::mix_gold_silver(corpus_of(20, "gold"),
                                     corpus_of(50, "silver"), 42);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
      REQUIRE(a[i].domain == b[i].domain);
      REQUIRE(a[i].provenance == b[i].provenance);
    }
  }
}

TEST_CASE("batching covers the corpus exactly once") {
  std::vector<ProcessedExample> corpus;
  for (int i = 0; i < 10; ++i) {
    std::vector<std::string> syms;
    for (int k = 0; k <= i; ++k) syms.push_back("_x_v_1");
    corpus.push_back(word_example(syms, {"w" + std::to_string(i)}));
  }
  Vocabulary vocab = corpus::build_vocabulary(corpus, 1);
  std::vector<corpus::Batch> batches =
      corpus::make_batches(corpus, vocab, 4, 99);

  std::multiset<int> sizes;
  std::multiset<int> seen;
  for (const auto& batch : batches) {
    sizes.insert(batch.size());
    for (int id : batch.example_ids) seen.insert(id);
    for (int lane = 0; lane < batch.size(); ++lane) {
      CHECK(batch.src_lengths[lane] <= batch.src_steps());
      CHECK(batch.tgt_lengths[lane] <= batch.tgt_steps());
      // Padding rows carry the pad id.
      for (int t = batch.src_lengths[lane]; t < batch.src_steps(); ++t) {
        CHECK(batch.src_symbols(t, lane) == Vocabulary::kPad);
      }
      // End token closes each target lane.
      CHECK(batch.target(batch.tgt_lengths[lane] - 1, lane) ==
            Vocabulary::kEos);
    }
  }
  CHECK(sizes == std::multiset<int>{2, 4, 4});
  std::multiset<int> expected;
  for (int i = 0; i < 10; ++i) expected.insert(i);
  CHECK(seen == expected);
}

TEST_CASE("batching is deterministic per seed") {
  std::vector<ProcessedExample> corpus = testutil::inflection_corpus({4, 4, false});
  Vocabulary vocab = corpus::build_vocabulary(corpus, 1);
  auto a = corpus::make_batches(corpus, vocab, 8, 5);
  auto b = corpus::make_batches(corpus, vocab, 8, 5);
  auto c = corpus::make_batches(corpus, vocab, 8, 6);
  REQUIRE(a.size() == b.size());
  bool all_equal_ab = true, all_equal_ac = true;
  for (size_t i = 0; i < a.size(); ++i) {
    all_equal_ab &= a[i].example_ids == b[i].example_ids;
    if (i < c.size()) all_equal_ac &= a[i].example_ids == c[i].example_ids;
  }
  CHECK(all_equal_ab);
  CHECK(!all_equal_ac);  // a different seed reorders the batches
}

TEST_CASE("copy supervision marks out-of-vocabulary targets found in source") {
  std::vector<ProcessedExample> train = testutil::tiny_corpus();
  Vocabulary vocab = corpus::build_vocabulary(train, 1);

  ProcessedExample oov = word_example({"Zorp"}, {"Zorp", "."});
  std::vector<ProcessedExample> eval_set = {oov};
  std::vector<corpus::Batch> batches =
      corpus::make_batches(eval_set, vocab, 1, 0);
  REQUIRE(batches.size() == 1);
  const corpus::Batch& batch = batches[0];
  REQUIRE(batch.copy[0].size() >= 2);
  CHECK(batch.copy[0][0].is_copy);
  CHECK(batch.copy[0][0].positions == std::vector<int>{1});
  CHECK(!batch.copy[0][1].is_copy);  // "." is in vocabulary
  CHECK(batch.target(0, 0) == Vocabulary::kUnk);
}
