#include <doctest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "nmt/bleu.hpp"
#include "nmt/corpus.hpp"

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

TEST_CASE("tokenize_13a basics") {
  CHECK(join(tokenize_13a("Hello, world!")) == "Hello , world !");
  CHECK(tokenize_13a("3.5") == std::vector<std::string>{"3.5"});
  CHECK(join(tokenize_13a("abc def")) == "abc def");
  CHECK(join(tokenize_13a("&quot;x&amp;y&lt;z&gt;")) == "\" x & y < z >");
  CHECK(join(tokenize_13a("3-1")) == "3 - 1");
  CHECK(join(tokenize_13a("a-1")) == "a-1");
  CHECK(join(tokenize_13a("1,000")) == "1,000");
  CHECK(join(tokenize_13a("so,")) == "so ,");
  CHECK(tokenize_13a("").empty());
}

TEST_CASE("tokenize_zh basics") {
  CHECK(join(tokenize_zh("你好world")) == "你 好 world");
  CHECK(join(tokenize_zh("hello there")) == "hello there");
  CHECK(join(tokenize_zh("你好，世界")) == "你 好 ， 世 界");
}

TEST_CASE("tokenize_zh equals tokenize_13a on plain ASCII") {
  std::vector<std::string> samples{
      "Hello, world!", "The price is 3.5 dollars.", "a/b (c) [d] {e}",
      "3-1 and a-b", "multiple   spaces"};
  for (const auto& s : samples) CHECK(tokenize_zh(s) == tokenize_13a(s));
}

TEST_CASE("tokenizer golden files") {
  const std::string dir = TEST_DATA_DIR;
  SUBCASE("13a") {
    auto inputs = read_lines(dir + "/tok13a_input.txt");
    auto expected = read_lines(dir + "/tok13a_expected.txt");
    REQUIRE(inputs.size() >= 30);
    REQUIRE(inputs.size() == expected.size());
    for (size_t i = 0; i < inputs.size(); ++i)
      CHECK_MESSAGE(join(tokenize_13a(inputs[i])) == expected[i],
                    "line ", i + 1, ": ", inputs[i]);
  }
  SUBCASE("zh") {
    auto inputs = read_lines(dir + "/tokzh_input.txt");
    auto expected = read_lines(dir + "/tokzh_expected.txt");
    REQUIRE(inputs.size() >= 30);
    REQUIRE(inputs.size() == expected.size());
    for (size_t i = 0; i < inputs.size(); ++i)
      CHECK_MESSAGE(join(tokenize_zh(inputs[i])) == expected[i],
                    "line ", i + 1, ": ", inputs[i]);
  }
}

TEST_CASE("corpus BLEU golden values") {
  SUBCASE("perfect match scores 100") {
    std::vector<std::string> text{"the cat sat on the mat",
                                  "a quick brown fox", "hello world !"};
    auto r = corpus_bleu(text, text, BleuTok::tok_13a, "zh", "vi");
    CHECK(r.score == doctest::Approx(100.0));
    CHECK(r.brevity_penalty == 1.0);
    for (double p : r.precisions) CHECK(p == doctest::Approx(100.0));
  }
  SUBCASE("hand-derived brevity penalty case") {
    auto r = corpus_bleu({"a b c d"}, {"a b c d e"}, BleuTok::tok_13a, "zh", "vi");
    // All clipped precisions are 1; BP = exp(1 - 5/4).
    CHECK(r.score == doctest::Approx(100.0 * std::exp(-0.25)).epsilon(1e-6));
    CHECK(r.score == doctest::Approx(77.88).epsilon(0.0002));
    CHECK(r.hyp_len == 4);
    CHECK(r.ref_len == 5);
  }
  SUBCASE("empty hypothesis scores zero") {
    auto r = corpus_bleu({""}, {"some reference"}, BleuTok::tok_13a, "zh", "vi");
    CHECK(r.score == 0.0);
    CHECK(r.brevity_penalty == 0.0);
  }
  SUBCASE("zero matches at higher orders smooth exponentially") {
    // Hypothesis shares unigrams only: p1 = 2/4; p2..p4 smoothed.
    auto r = corpus_bleu({"a x b y"}, {"a b c d"}, BleuTok::tok_13a, "zh", "vi");
    CHECK(r.precisions[0] == doctest::Approx(50.0));
    CHECK(r.precisions[1] == doctest::Approx(100.0 / (2.0 * 3.0)));
    CHECK(r.precisions[2] == doctest::Approx(100.0 / (4.0 * 2.0)));
    CHECK(r.precisions[3] == doctest::Approx(100.0 / (8.0 * 1.0)));
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(corpus_bleu({}, {}, BleuTok::tok_13a, "a", "b"), Error);
    CHECK_THROWS_AS(corpus_bleu({"x"}, {"x", "y"}, BleuTok::tok_13a, "a", "b"),
                    Error);
  }
}

TEST_CASE("corpus BLEU is order-independent and duplication-stable") {
  std::vector<std::string> hyps{"the cat sat on a mat", "dogs bark very loudly",
                                "rain falls in the north"};
  std::vector<std::string> refs{"the cat sat on the mat",
                                "dogs bark very loudly today",
                                "rain falls in the north often"};
  auto base = corpus_bleu(hyps, refs, BleuTok::tok_13a, "zh", "vi");

  // Permuting the pairs leaves the corpus-level counts unchanged.
  std::vector<std::string> hyps_p{hyps[2], hyps[0], hyps[1]};
  std::vector<std::string> refs_p{refs[2], refs[0], refs[1]};
  auto permuted = corpus_bleu(hyps_p, refs_p, BleuTok::tok_13a, "zh", "vi");
  CHECK(base.score == permuted.score);

  // Appending the same sentences again (in permuted order) doubles every
  // count; with matches at every order the score is unchanged.
  for (double p : base.precisions) CHECK(p > 0.0);
  std::vector<std::string> hyps_d{hyps[1], hyps[2], hyps[0],
                                  hyps[0], hyps[1], hyps[2]};
  std::vector<std::string> refs_d{refs[1], refs[2], refs[0],
                                  refs[0], refs[1], refs[2]};
  auto doubled = corpus_bleu(hyps_d, refs_d, BleuTok::tok_13a, "zh", "vi");
  CHECK(base.score == doctest::Approx(doubled.score).epsilon(1e-12));
}

TEST_CASE("self-BLEU is 100 for random corpora") {
  std::mt19937_64 rng(71);
  std::uniform_int_distribution<int> nw(1, 8), wl(1, 4), ch(0, 25);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<std::string> corpus;
    for (int i = 0; i < 5; ++i) {
      std::string line;
      const int n = nw(rng);
      for (int w = 0; w < n; ++w) {
        if (w) line += ' ';
        const int l = wl(rng);
        for (int j = 0; j < l; ++j) line += char('a' + ch(rng));
      }
      corpus.push_back(line);
    }
    auto r = corpus_bleu(corpus, corpus, BleuTok::tok_13a, "zh", "vi");
    CHECK(r.score == doctest::Approx(100.0));
  }
}

TEST_CASE("signature strings") {
  auto r = corpus_bleu({"a"}, {"a"}, BleuTok::tok_zh, "vi", "zh", "1.5.1");
  CHECK(r.signature ==
        "BLEU+case.mixed+lang.vi-zh+numrefs.1+smooth.exp+tok.zh+version.1.5.1");
  CHECK(r.signature_spaced ==
        "BLEU+case.mixed +lang.vi-zh +numrefs.1 +smooth.exp +tok.zh "
        "+version.1.5.1");

  auto r2 = corpus_bleu({"a"}, {"a"}, BleuTok::tok_13a, "zh", "vi", "1.5.1");
  CHECK(r2.signature_spaced ==
        "BLEU+case.mixed +lang.zh-vi +numrefs.1 +smooth.exp +tok.13a "
        "+version.1.5.1");

  auto r3 = corpus_bleu({"a"}, {"a"}, BleuTok::tok_13a, "zh", "vi");
  CHECK(r3.signature.find(std::string("version.") + kScorerVersion) !=
        std::string::npos);
}

TEST_CASE("report format is stable") {
  auto r = corpus_bleu({"a b c d"}, {"a b c d e"}, BleuTok::tok_13a, "zh", "vi");
  std::istringstream report(r.report());
  std::string line1, line2;
  std::getline(report, line1);
  std::getline(report, line2);
  CHECK(line1.rfind("77.88 BLEU+case.mixed", 0) == 0);
  CHECK(line2.rfind("P1=100.0 P2=100.0 P3=100.0 P4=100.0 BP=0.779", 0) == 0);
  CHECK(line2.find("hyp_len=4 ref_len=5") != std::string::npos);
}
