#include <doctest.h>

#include <filesystem>
#include <map>
#include <random>
#include <sstream>

#include "nmt/bpe.hpp"
#include "nmt/corpus.hpp"
#include "nmt/utf8.hpp"
#include "nmt/vocab.hpp"

#include "bpe_oracle.hpp"

using namespace nmt;

namespace {

std::string join(const std::vector<std::string>& toks) {
  std::string s;
  for (size_t i = 0; i < toks.size(); ++i) {
    if (i) s += ' ';
    s += toks[i];
  }
  return s;
}

}  // namespace

TEST_CASE("first merge on the aa/ab corpus") {
  auto model = learn_bpe({"aa aa ab"}, 1, WordMode::whitespace);
  REQUIRE(model.merges.size() == 1);
  CHECK(model.merges[0].first == "a");
  CHECK(model.merges[0].second == std::string("a") + kEndOfWord);

  testutil::BruteForceBpe oracle({"aa aa ab"}, WordMode::whitespace);
  auto [pair, count] = oracle.best();
  CHECK(pair == model.merges[0]);
  CHECK(count == 2);
}

TEST_CASE("zero operations leaves pure characters") {
  auto model = learn_bpe({"hello world"}, 0, WordMode::whitespace);
  CHECK(model.merges.empty());
  auto toks = apply_bpe("hi", model);
  CHECK(toks == std::vector<std::string>{"h@@", "i"});
}

TEST_CASE("learning is deterministic") {
  std::vector<std::string> corpus{"the cat sat on the mat",
                                  "the hat and the bat", "a cat and a hat"};
  auto m1 = learn_bpe(corpus, 20, WordMode::whitespace);
  auto m2 = learn_bpe(corpus, 20, WordMode::whitespace);
  CHECK(m1.merges == m2.merges);
}

TEST_CASE("merge order and frequencies match the brute-force oracle") {
  std::mt19937_64 rng(61);
  // Random corpus of <= 200 words over a small alphabet.
  std::vector<std::string> lines;
  std::uniform_int_distribution<int> nwords(3, 8), wlen(1, 5), ch(0, 3);
  int total_words = 0;
  while (total_words < 180) {
    std::string line;
    const int n = nwords(rng);
    for (int w = 0; w < n; ++w) {
      if (w) line += ' ';
      const int l = wlen(rng);
      for (int i = 0; i < l; ++i) line += char('a' + ch(rng));
    }
    total_words += n;
    lines.push_back(line);
  }

  const int ops = 25;
  auto model = learn_bpe(lines, ops, WordMode::whitespace);
  testutil::BruteForceBpe oracle(lines, WordMode::whitespace);

  int64_t prev_freq = std::numeric_limits<int64_t>::max();
  for (const auto& merge : model.merges) {
    auto [best_pair, best_count] = oracle.best();
    REQUIRE(best_count >= 2);
    CHECK(best_pair == merge);
    CHECK(best_count <= prev_freq);  // merge frequencies never increase
    prev_freq = best_count;
    oracle.apply(merge);
  }
  // If learning stopped before num_ops, the oracle must agree nothing is left.
  if (static_cast<int>(model.merges.size()) < ops)
    CHECK(oracle.best().second < 2);
}

TEST_CASE("apply: fully merged words come back unchanged") {
  std::vector<std::string> corpus(50, "banana band bandana");
  auto model = learn_bpe(corpus, 40, WordMode::whitespace);
  auto toks = apply_bpe("banana", model);
  CHECK(toks == std::vector<std::string>{"banana"});
}

TEST_CASE("apply: unseen word splits into learned pieces") {
  std::vector<std::string> corpus(10, "lower lowest low");
  auto model = learn_bpe(corpus, 6, WordMode::whitespace);
  // Hand-applied merges on this corpus: l+o, lo+w are learned early, so an
  // unseen word sharing the prefix splits after "low".
  auto toks = apply_bpe("lowly", model);
  REQUIRE(toks.size() >= 2);
  CHECK(toks.front().rfind("low", 0) == 0);
  CHECK(undo_bpe(toks) == "lowly");
}

TEST_CASE("raw sentence mode treats the whole line as one segment") {
  std::vector<std::string> corpus{"你好世界", "你好朋友", "世界你好"};
  auto model = learn_bpe(corpus, 5, WordMode::raw_sentence);
  CHECK(!model.merges.empty());
  auto toks = apply_bpe("你好世界", model);
  CHECK(undo_bpe(toks) == "你好世界");
  // Frequent bigram was merged into one subword.
  bool merged = false;
  for (const auto& t : toks) merged = merged || t.rfind("你好", 0) == 0;
  CHECK(merged);
}

TEST_CASE("unknown characters pass through") {
  auto model = learn_bpe({"abc abc"}, 3, WordMode::whitespace);
  auto toks = apply_bpe("xyz", model);
  CHECK(undo_bpe(toks) == "xyz");
}

TEST_CASE("undo_bpe examples") {
  CHECK(undo_bpe({"ab@@", "c"}) == "abc");
  CHECK(undo_bpe({"x", "y"}) == "x y");
  CHECK(undo_bpe({}) == "");
  CHECK(undo_bpe({"trail@@"}) == "trail");
}

TEST_CASE("apply/undo roundtrip over 1000 random lines") {
  std::mt19937_64 rng(62);
  std::vector<std::string> corpus;
  std::uniform_int_distribution<int> nwords(1, 9), wlen(1, 6), ch(0, 5);
  for (int i = 0; i < 200; ++i) {
    std::string line;
    const int n = nwords(rng);
    for (int w = 0; w < n; ++w) {
      if (w) line += ' ';
      const int l = wlen(rng);
      for (int j = 0; j < l; ++j) line += char('a' + ch(rng));
    }
    corpus.push_back(line);
  }
  auto model = learn_bpe(corpus, 50, WordMode::whitespace);

  for (int i = 0; i < 1000; ++i) {
    std::string line;
    const int n = nwords(rng);
    for (int w = 0; w < n; ++w) {
      if (w) line += ' ';
      const int l = wlen(rng);
      for (int j = 0; j < l; ++j) line += char('a' + ch(rng));
    }
    CHECK(undo_bpe(apply_bpe(line, model)) == line);
  }
}

TEST_CASE("bpe model file roundtrip") {
  std::vector<std::string> corpus{"aab aab abb"};
  auto model = learn_bpe(corpus, 3, WordMode::whitespace);
  const auto path =
      (std::filesystem::temp_directory_path() / "nmt_test_model.bpe").string();
  model.save(path);
  auto loaded = BpeModel::load(path);
  CHECK(loaded.merges == model.merges);
  CHECK(loaded.word_mode == model.word_mode);

  auto raw = learn_bpe({"你好你好"}, 2, WordMode::raw_sentence);
  raw.save(path);
  CHECK(BpeModel::load(path).word_mode == WordMode::raw_sentence);
}

TEST_CASE("vocab construction and stability") {
  std::vector<std::vector<std::string>> corpus{
      {"b", "a", "b"}, {"c", "a", "b"}, {"d"}};
  auto v = Vocab::build(corpus);
  CHECK(v.id("<pad>") == 0);
  CHECK(v.id("<unk>") == 1);
  CHECK(v.id("<s>") == 2);
  CHECK(v.id("</s>") == 3);
  CHECK(v.id("b") == 4);  // freq 3
  CHECK(v.id("a") == 5);  // freq 2
  CHECK(v.id("c") == 6);  // freq 1, lexicographic before d
  CHECK(v.id("d") == 7);
  CHECK(v.id("zzz") == Vocab::kUnk);
  CHECK(v.size() == 8);

  auto v2 = Vocab::build(corpus);
  for (int i = 0; i < v.size(); ++i) CHECK(v.symbol(i) == v2.symbol(i));

  // Frequency ties order lexicographically.
  auto tie = Vocab::build({{"b", "a"}});
  CHECK(tie.id("a") == 4);
  CHECK(tie.id("b") == 5);
}

TEST_CASE("vocab file roundtrip") {
  auto v = Vocab::build({{"tok", "other"}});
  const auto path =
      (std::filesystem::temp_directory_path() / "nmt_test_vocab.txt").string();
  v.save(path);
  auto loaded = Vocab::load(path);
  CHECK(loaded.size() == v.size());
  for (int i = 0; i < v.size(); ++i) CHECK(loaded.symbol(i) == v.symbol(i));
}

TEST_CASE("parallel corpus loading drops blank pairs on both sides") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "nmt_test_corpus";
  fs::create_directories(dir);
  write_lines((dir / "s.txt").string(), {"one", "", "three", "  "});
  write_lines((dir / "t.txt").string(), {"un", "deux", "trois", "quatre"});
  auto c = load_parallel((dir / "s.txt").string(), (dir / "t.txt").string());
  CHECK(c.size() == 2);
  CHECK(c.src[0] == "one");
  CHECK(c.tgt[1] == "trois");

  write_lines((dir / "short.txt").string(), {"only"});
  CHECK_THROWS_AS(
      load_parallel((dir / "s.txt").string(), (dir / "short.txt").string()),
      Error);
}

TEST_CASE("corpus statistics") {
  ParallelCorpus c;
  c.src = {"a b c", "a b c d e"};
  c.tgt = {"你好", "你好世界"};
  auto stats = corpus_stats(c, false, true);
  CHECK(stats.examples == 2);
  CHECK(stats.src_avg_len == doctest::Approx(4.0));
  CHECK(stats.tgt_avg_len == doctest::Approx(3.0));
  CHECK(stats.src_vocab == 5);
  CHECK(stats.tgt_vocab == 4);
}
