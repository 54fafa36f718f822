#include <doctest.h>

#include <random>

#include "nmt/grad_check.hpp"
#include "nmt/model.hpp"
#include "nmt/phrase_attention.hpp"
#include "reference_transformer.hpp"
#include "test_util.hpp"

using namespace nmt;
using testutil::bitwise_equal;
using testutil::random_tensor;
using TD = Tensor<double>;

namespace {

LstmParams<double> random_lstm(std::mt19937_64& rng, int width, double s = 0.4) {
  auto p = LstmParams<double>::zeros(width, width);
  std::normal_distribution<double> d(0, s);
  for (auto& v : p.w.values_mut()) v = d(rng);
  for (auto& v : p.b.values_mut()) v = d(rng);
  return p;
}

// Direct per-window transcription: every position runs its own forward and
// reversed LSTM over the truncated window; second route for the vectorized
// implementation.
TD phrase_sequence_naive(const TD& s, int n, const LstmParams<double>& f,
                         const LstmParams<double>& b) {
  NoGradGuard no_grad;
  const int rows = s.rows(), w = s.cols();
  std::vector<double> out(static_cast<size_t>(rows) * w);
  for (int k = 1; k <= rows; ++k) {
    auto window = ngram_window(s, k, n);
    TD hf = TD::zeros(1, w), cf = TD::zeros(1, w);
    for (int i = 0; i < window.rows(); ++i)
      std::tie(hf, cf) = lstm_step(slice_rows(window, i, 1), hf, cf, f);
    TD hb = TD::zeros(1, w), cb = TD::zeros(1, w);
    for (int i = window.rows() - 1; i >= 0; --i)
      std::tie(hb, cb) = lstm_step(slice_rows(window, i, 1), hb, cb, b);
    for (int j = 0; j < w; ++j)
      out[static_cast<size_t>(k - 1) * w + j] = hf.at(0, j) + hb.at(0, j);
  }
  return TD::from(rows, w, std::move(out));
}

}  // namespace

TEST_CASE("zip and unzip definitions") {
  auto a = TD::from(1, 2, {1, 2});
  auto b = TD::from(1, 2, {3, 4});
  auto z = zip_features(a, b);
  CHECK(z.rows() == 1);
  CHECK(z.cols() == 4);
  CHECK(z.at(0, 0) == 1);
  CHECK(z.at(0, 3) == 4);

  auto a2 = TD::from(2, 1, {1, 2});
  auto b2 = TD::from(2, 1, {3, 4});
  auto z2 = zip_features(a2, b2);
  CHECK(z2.at(0, 0) == 1);
  CHECK(z2.at(0, 1) == 3);
  CHECK(z2.at(1, 0) == 2);
  CHECK(z2.at(1, 1) == 4);

  auto [u1, u2] = unzip_features(TD::from(1, 4, {1, 2, 3, 4}));
  CHECK(u1.at(0, 0) == 1);
  CHECK(u1.at(0, 1) == 2);
  CHECK(u2.at(0, 0) == 3);
  CHECK(u2.at(0, 1) == 4);

  auto [w1, w2] = unzip_features(TD::from(1, 2, {7, 9}));
  CHECK(w1.at(0, 0) == 7);
  CHECK(w2.at(0, 0) == 9);
}

TEST_CASE("zip/unzip roundtrip on random matrices") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<int> dim(1, 6);
    const int r = dim(rng), d = dim(rng);
    auto a = random_tensor<double>(rng, r, d, false);
    auto b = random_tensor<double>(rng, r, d, false);
    auto [ua, ub] = unzip_features(zip_features(a, b));
    CHECK(bitwise_equal(ua, a));
    CHECK(bitwise_equal(ub, b));
    auto z = random_tensor<double>(rng, r, 2 * d, false);
    auto [l, rhalf] = unzip_features(z);
    CHECK(bitwise_equal(zip_features(l, rhalf), z));
  }
}

TEST_CASE("zip/unzip errors") {
  auto a = TD::zeros(2, 2);
  auto b = TD::zeros(3, 2);
  CHECK_THROWS_AS(zip_features(a, b), Error);
  CHECK_THROWS_AS(unzip_features(TD::zeros(2, 3)), Error);
}

TEST_CASE("ngram_window boundaries") {
  auto s = TD::from(5, 1, {10, 20, 30, 40, 50});
  auto w = ngram_window(s, 3, 2);
  CHECK(w.rows() == 2);
  CHECK(w.at(0, 0) == 20);
  CHECK(w.at(1, 0) == 30);

  auto w2 = ngram_window(s, 1, 3);
  CHECK(w2.rows() == 1);
  CHECK(w2.at(0, 0) == 10);

  for (int k = 1; k <= 5; ++k) {
    auto w3 = ngram_window(s, k, 1);
    CHECK(w3.rows() == 1);
    CHECK(w3.at(0, 0) == s.at(k - 1, 0));
  }
  CHECK_THROWS_AS(ngram_window(s, 0, 2), Error);
  CHECK_THROWS_AS(ngram_window(s, 6, 2), Error);
}

TEST_CASE("phrase_sequence matches the per-window transcription") {
  std::mt19937_64 rng(22);
  for (int n = 1; n <= 4; ++n) {
    auto f = random_lstm(rng, 4);
    auto b = random_lstm(rng, 4);
    for (int s_len : {1, 2, 3, 5, 8}) {
      auto s = random_tensor<double>(rng, s_len, 4, false);
      auto fast = phrase_sequence(s, n, f, b);
      auto naive = phrase_sequence_naive(s, n, f, b);
      CHECK(bitwise_equal(fast, naive));
    }
  }
}

TEST_CASE("phrase_sequence n=1 is a single bidirectional step per position") {
  std::mt19937_64 rng(23);
  auto f = random_lstm(rng, 3);
  auto b = random_lstm(rng, 3);
  auto s = random_tensor<double>(rng, 4, 3, false);
  auto out = phrase_sequence(s, 1, f, b);
  auto zero = TD::zeros(4, 3);
  auto [hf, cf] = lstm_step(s, zero, zero, f);
  auto [hb, cb] = lstm_step(s, zero, zero, b);
  auto expected = add(hf, hb);
  CHECK(bitwise_equal(out, expected));
}

TEST_CASE("phrase_sequence with zero LSTMs is zero") {
  auto f = LstmParams<double>::zeros(3, 3);
  auto b = LstmParams<double>::zeros(3, 3);
  std::mt19937_64 rng(24);
  auto s = random_tensor<double>(rng, 5, 3, false);
  auto out = phrase_sequence(s, 2, f, b);
  for (double v : out.values()) CHECK(v == 0.0);
}

TEST_CASE("phrase_sequence window locality") {
  std::mt19937_64 rng(25);
  for (int n = 1; n <= 4; ++n) {
    auto f = random_lstm(rng, 2);
    auto b = random_lstm(rng, 2);
    for (int s_len = 1; s_len <= 8; ++s_len) {
      auto s = random_tensor<double>(rng, s_len, 2, false);
      auto base = phrase_sequence(s, n, f, b);
      for (int j = 1; j <= s_len; ++j) {
        auto perturbed = TD::from(
            s_len, 2, std::vector<double>(s.values().begin(), s.values().end()));
        perturbed.values_mut()[(j - 1) * 2] += 0.37;
        perturbed.values_mut()[(j - 1) * 2 + 1] -= 0.11;
        auto out = phrase_sequence(perturbed, n, f, b);
        for (int k = 1; k <= s_len; ++k) {
          const bool in_window = (j >= k - n + 1) && (j <= k);
          bool row_equal = true;
          for (int c = 0; c < 2; ++c)
            row_equal = row_equal && (out.at(k - 1, c) == base.at(k - 1, c));
          if (!in_window) CHECK(row_equal);
        }
      }
    }
  }
}

TEST_CASE("phrase_sequence dimension errors") {
  auto f = LstmParams<double>::zeros(4, 4);
  auto b = LstmParams<double>::zeros(4, 4);
  CHECK_THROWS_WITH_AS(phrase_sequence(TD::zeros(3, 6), 2, f, b),
                       doctest::Contains("forward LSTM dims"), Error);
}

TEST_CASE("phrase_qk identity, single gram and shapes") {
  std::mt19937_64 rng(26);
  auto q = random_tensor<double>(rng, 5, 4, false);
  auto k = random_tensor<double>(rng, 5, 4, false);

  SUBCASE("empty gram set returns inputs unchanged") {
    auto [pq, pk] = phrase_qk<double>(q, k, {}, {});
    CHECK(pq.node() == q.node());
    CHECK(pk.node() == k.node());
  }
  SUBCASE("single gram equals unzip of the window LSTM directly") {
    std::map<int, LstmPair<double>> bank;
    bank[3] = {random_lstm(rng, 8), random_lstm(rng, 8)};
    auto [pq, pk] = phrase_qk(q, k, {3}, bank);
    auto direct =
        phrase_sequence(zip_features(q, k), 3, bank[3].fwd, bank[3].bwd);
    auto [dk, dq] = unzip_features(direct);
    CHECK(bitwise_equal(pq, dq));
    CHECK(bitwise_equal(pk, dk));
  }
  SUBCASE("gram set {2,3} widens features per gram") {
    std::map<int, LstmPair<double>> bank;
    bank[2] = {random_lstm(rng, 8), random_lstm(rng, 8)};
    bank[3] = {random_lstm(rng, 8), random_lstm(rng, 8)};
    auto [pq, pk] = phrase_qk(q, k, {2, 3}, bank);
    CHECK(pq.rows() == 5);
    CHECK(pq.cols() == 8);
    CHECK(pk.cols() == 8);
  }
  SUBCASE("missing bank entry") {
    std::map<int, LstmPair<double>> bank;
    bank[2] = {random_lstm(rng, 8), random_lstm(rng, 8)};
    CHECK_THROWS_WITH_AS((phrase_qk(q, k, {2, 3}, bank)),
                         doctest::Contains("gram size 3"), Error);
  }
}

namespace {

ModelConfig tiny_config(const GramConfig& gram, int heads = 2) {
  ModelConfig cfg;
  cfg.d_model = 8;
  cfg.heads = heads;
  cfg.layers = 1;
  cfg.ffn_dim = 16;
  cfg.dropout = 0.0;
  cfg.label_smoothing = 0.0;
  cfg.gram = gram;
  cfg.src_vocab_size = 10;
  cfg.tgt_vocab_size = 10;
  return cfg;
}

}  // namespace

TEST_CASE("phrase attention with empty gram sets equals the vanilla reference") {
  std::mt19937_64 rng(27);
  auto cfg = tiny_config(GramConfig::vanilla(2));
  auto params = ModelParams<double>::init(cfg, 7);
  for (int trial = 0; trial < 5; ++trial) {
    auto x = random_tensor<double>(rng, 6, 8, false);
    auto ours = phrase_multi_head_attention(x, params.enc[0].attn, cfg.gram, nullptr);
    auto ref = reftf::multi_head_attention(reftf::from_tensor(x),
                                           params.enc[0].attn, nullptr);
    CHECK(reftf::bitwise_equal(ref, ours));
  }
}

TEST_CASE("phrase attention single position has trivial attention") {
  std::mt19937_64 rng(28);
  auto cfg = tiny_config(GramConfig::cross_h({2}, 2));
  auto params = ModelParams<double>::init(cfg, 9);
  auto x = random_tensor<double>(rng, 1, 8, false);
  auto out = phrase_multi_head_attention(x, params.enc[0].attn, cfg.gram, nullptr);
  // With one position the softmax weight is 1, so the output is v . W^o.
  std::vector<Tensor<double>> heads;
  for (int h = 0; h < 2; ++h) heads.push_back(matmul(x, params.enc[0].attn.wv[h]));
  auto expected = matmul(concat_cols(heads), params.enc[0].attn.wo);
  CHECK(testutil::max_abs_diff(out, expected) < 1e-12);
}

TEST_CASE("phrase attention output shape and padded-key exclusion") {
  std::mt19937_64 rng(29);
  auto cfg = tiny_config(GramConfig::cross_h({2}, 4), 4);
  cfg.d_model = 16;
  auto params = ModelParams<double>::init(cfg, 11);
  auto x5 = random_tensor<double>(rng, 5, 16, false);
  auto out = phrase_multi_head_attention(x5, params.enc[0].attn, cfg.gram, nullptr);
  CHECK(out.rows() == 5);
  CHECK(out.cols() == 16);

  // Rows of a padded batch match the unpadded run exactly when the padded
  // keys are masked (the phrase LSTMs still run over them).
  auto x7 = TD::zeros(7, 16);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 16; ++j)
      x7.values_mut()[static_cast<size_t>(i) * 16 + j] = x5.at(i, j);
  std::vector<uint8_t> keys{1, 1, 1, 1, 1, 0, 0};
  auto padded = phrase_multi_head_attention(x7, params.enc[0].attn, cfg.gram, &keys);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 16; ++j) CHECK(padded.at(i, j) == out.at(i, j));
}

TEST_CASE("phrase path gradients match finite differences") {
  std::mt19937_64 rng(30);
  auto cfg = tiny_config(GramConfig::cross_h({2}, 2));
  auto params = ModelParams<double>::init(cfg, 13);
  auto x = random_tensor<double>(rng, 4, 8, false);
  auto w = random_tensor<double>(rng, 4, 8, false);

  std::vector<TD> phrase_params;
  for (auto& [name, t] : params.named)
    if (name.find("enc.0.attn") != std::string::npos) phrase_params.push_back(t);

  auto f = [&]() {
    auto out = phrase_multi_head_attention(x, params.enc[0].attn, cfg.gram, nullptr);
    return sum_all(mul(out, w));
  };
  CHECK(finite_diff_check_multi<double>(f, phrase_params, {1e-5, 1e-3}) < 1e-4);
}

TEST_CASE("parameter delta from enabling a gram set") {
  for (int dh : {4, 8}) {
    ModelConfig base;
    base.heads = 2;
    base.d_model = base.heads * dh;
    base.layers = 3;
    base.ffn_dim = 32;
    base.gram = GramConfig::vanilla(2);
    base.src_vocab_size = 11;
    base.tgt_vocab_size = 13;

    for (std::vector<int> grams : {std::vector<int>{2}, std::vector<int>{2, 3}}) {
      ModelConfig with = base;
      with.gram = GramConfig::cross_h(grams, base.heads);
      const int64_t delta = count_parameters(with) - count_parameters(base);
      const int64_t expected = static_cast<int64_t>(base.layers) * base.heads *
                               static_cast<int64_t>(grams.size()) * 2 * 4 *
                               (4 * dh + 1) * 2 * dh;
      CHECK(delta == expected);
    }
  }
}

TEST_CASE("shared LSTM bank collapses head-wise parameters") {
  ModelConfig cfg;
  cfg.d_model = 8;
  cfg.heads = 2;
  cfg.layers = 2;
  cfg.ffn_dim = 16;
  cfg.gram = GramConfig::cross_h({2, 3}, 2);
  cfg.src_vocab_size = 10;
  cfg.tgt_vocab_size = 10;

  ModelConfig shared = cfg;
  shared.share_lstm_across_heads = true;

  const int dh = cfg.d_head();
  const int64_t pair_params = 2 * 4 * (4 * dh + 1) * 2 * dh;
  CHECK(count_parameters(cfg) - count_parameters(shared) ==
        cfg.layers * (cfg.heads - 1) * 2 /*grams*/ * pair_params);

  auto params = ModelParams<double>::init(shared, 3);
  CHECK(params.actual_param_count() == count_parameters(shared));
  // Both heads read the same bank entry.
  auto bank0 = params.enc[0].attn.bank_for_head(0);
  auto bank1 = params.enc[0].attn.bank_for_head(1);
  CHECK(bank0.at(2).fwd.w.node() == bank1.at(2).fwd.w.node());
}

TEST_CASE("gram config parsing and formatting") {
  auto g = GramConfig::parse("cross_h:[2,3]", 4);
  CHECK(g.heads == 4);
  for (int h = 0; h < 4; ++h) CHECK(g.per_head_grams[h] == std::vector<int>{2, 3});
  CHECK(g.to_string() == "cross_h:[2,3]");

  auto p = GramConfig::parse("per_head:[[2],[3],[],[2,3]]", 4);
  CHECK(p.per_head_grams[0] == std::vector<int>{2});
  CHECK(p.per_head_grams[2].empty());
  CHECK(p.to_string() == "per_head:[[2],[3],[],[2,3]]");

  CHECK(GramConfig::parse("", 2).all_vanilla());
  CHECK(GramConfig::parse("none", 2).all_vanilla());
  CHECK_THROWS_AS(GramConfig::parse("cross_h:[0]", 2), Error);
  CHECK_THROWS_AS(GramConfig::parse("per_head:[[1],[2],[3]]", 2), Error);
  CHECK_THROWS_AS(GramConfig::parse("bogus:[1]", 2), Error);
  CHECK_THROWS_AS(GramConfig::parse("cross_h:[2,2]", 2), Error);
}
