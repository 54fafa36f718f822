#include <doctest.h>

#include <random>

#include "nmt/beam.hpp"
#include "test_util.hpp"

using namespace nmt;

namespace {

ModelConfig beam_model(int vocab) {
  ModelConfig cfg;
  cfg.d_model = 8;
  cfg.heads = 2;
  cfg.layers = 1;
  cfg.ffn_dim = 16;
  cfg.dropout = 0.0;
  cfg.label_smoothing = 0.0;
  cfg.gram = GramConfig::cross_h({2}, 2);
  cfg.src_vocab_size = vocab;
  cfg.tgt_vocab_size = vocab;
  cfg.max_len = 8;
  return cfg;
}

// Exhaustive decoding oracle: enumerates every sequence that ends at </s>
// or at max_len and returns the total-log-probability argmax, ties to the
// lexicographically smaller sequence.
template <class T>
std::vector<int> exhaustive_argmax(const ModelParams<T>& params,
                                   const ModelConfig& cfg,
                                   const std::vector<int>& src, int max_len) {
  NoGradGuard no_grad;
  auto memory = encode(src, params, cfg);
  std::vector<int> best_ids;
  double best_score = -std::numeric_limits<double>::infinity();

  std::vector<int> prefix;
  std::function<void(double)> visit = [&](double score) {
    const bool terminated = !prefix.empty() && prefix.back() == kEosId;
    const bool at_cap = static_cast<int>(prefix.size()) == max_len;
    if (terminated || at_cap) {
      if (score > best_score || (score == best_score && prefix < best_ids)) {
        best_score = score;
        best_ids = prefix;
      }
      if (terminated) return;
    }
    if (terminated || at_cap) return;
    std::vector<int> full{kBosId};
    full.insert(full.end(), prefix.begin(), prefix.end());
    auto logits = decode(full, memory, params, cfg, nullptr);
    auto lsm = log_softmax_rows(logits);
    const int last = lsm.rows() - 1;
    for (int v = 0; v < lsm.cols(); ++v) {
      prefix.push_back(v);
      visit(score + static_cast<double>(lsm.at(last, v)));
      prefix.pop_back();
    }
  };
  visit(0.0);
  return best_ids;
}

}  // namespace

TEST_CASE("beam of one equals greedy argmax decoding") {
  auto cfg = beam_model(8);
  auto params = ModelParams<double>::init(cfg, 51);
  std::mt19937_64 rng(52);
  std::uniform_int_distribution<int> tok(4, 7), len(1, 5);

  for (int trial = 0; trial < 5; ++trial) {
    std::vector<int> src(len(rng));
    for (auto& s : src) s = tok(rng);
    src.push_back(kEosId);

    auto beam1 = greedy_decode(params, cfg, src, 6);

    // Manual greedy: argmax of each step, ties to the lowest id.
    NoGradGuard no_grad;
    auto memory = encode(src, params, cfg);
    std::vector<int> manual;
    for (int t = 0; t < 6; ++t) {
      std::vector<int> prefix{kBosId};
      prefix.insert(prefix.end(), manual.begin(), manual.end());
      auto logits = decode(prefix, memory, params, cfg, nullptr);
      int best = 0;
      double best_v = logits.at(logits.rows() - 1, 0);
      for (int v = 1; v < logits.cols(); ++v)
        if (logits.at(logits.rows() - 1, v) > best_v) {
          best_v = logits.at(logits.rows() - 1, v);
          best = v;
        }
      manual.push_back(best);
      if (best == kEosId) break;
    }
    CHECK(beam1 == manual);
  }
}

TEST_CASE("hypotheses terminate at </s> or the length cap") {
  auto cfg = beam_model(6);
  auto params = ModelParams<double>::init(cfg, 53);
  std::mt19937_64 rng(54);
  std::uniform_int_distribution<int> tok(4, 5), len(1, 4);
  for (int beam_size : {1, 2, 4}) {
    for (int trial = 0; trial < 4; ++trial) {
      std::vector<int> src(len(rng));
      for (auto& s : src) s = tok(rng);
      src.push_back(kEosId);
      auto out = beam_search(params, cfg, src, {beam_size, 5, true});
      REQUIRE(!out.empty());
      const bool has_eos = out.back() == kEosId;
      CHECK((has_eos || static_cast<int>(out.size()) == 5));
      for (size_t i = 0; i + 1 < out.size(); ++i) CHECK(out[i] != kEosId);
    }
  }
}

TEST_CASE("full-width beam equals the exhaustive argmax") {
  auto cfg = beam_model(5);  // ids: pad unk <s> </s> + one content token
  auto params = ModelParams<double>::init(cfg, 55);
  std::mt19937_64 rng(56);

  for (int trial = 0; trial < 3; ++trial) {
    std::vector<int> src{4, 4, kEosId};
    if (trial == 1) src = {4, kEosId};
    if (trial == 2) src = {4, 4, 4, kEosId};

    auto oracle = exhaustive_argmax(params, cfg, src, 3);
    auto beam = beam_search(params, cfg, src, {125, 3, false});
    CHECK(beam == oracle);
  }
}

TEST_CASE("strip_specials removes terminators and bos") {
  CHECK(strip_specials({5, 6, kEosId}) == std::vector<int>{5, 6});
  CHECK(strip_specials({kBosId, 5, 6}) == std::vector<int>{5, 6});
  CHECK(strip_specials({5, kPadId, 6}) == std::vector<int>{5});
  CHECK(strip_specials({kEosId}).empty());
}

TEST_CASE("beam parameter validation") {
  auto cfg = beam_model(5);
  auto params = ModelParams<double>::init(cfg, 57);
  CHECK_THROWS_AS(beam_search(params, cfg, {4, kEosId}, {0, 5, true}), Error);
  CHECK_THROWS_AS(beam_search(params, cfg, {4, kEosId}, {1, 0, true}), Error);
}
