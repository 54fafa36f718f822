#pragma once

#include <cmath>
#include <map>
#include <utility>
#include <vector>

#include "nmt/gram.hpp"
#include "nmt/lstm.hpp"
#include "nmt/tensor.hpp"

// Phrase-aware multi-head attention. Per head, the query and key matrices
// are zipped feature-wise, summarized by bidirectional n-gram window LSTMs,
// unzipped back into phrase queries/keys, and fed to scaled-dot attention.
// Values are never phrase-transformed.

namespace nmt {

template <class T>
struct LstmPair {
  LstmParams<T> fwd;
  LstmParams<T> bwd;
};

// Feature-axis concatenation of equal-row matrices (the zip of two or more
// per-head feature blocks). Order of the result is the argument order.
template <class T>
Tensor<T> zip_features(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw Error("zip_features: no inputs");
  const int rows = parts.front().rows();
  for (const auto& p : parts)
    if (p.rows() != rows)
      throw Error("zip_features: row-count mismatch (" + std::to_string(rows) +
                  " vs " + std::to_string(p.rows()) + ")");
  return concat_cols(parts);
}

template <class T>
Tensor<T> zip_features(const Tensor<T>& a, const Tensor<T>& b) {
  return zip_features<T>({a, b});
}

// Splits an even-width matrix into its two feature halves.
template <class T>
std::pair<Tensor<T>, Tensor<T>> unzip_features(const Tensor<T>& z) {
  if (z.cols() % 2 != 0)
    throw Error("unzip_features: odd feature width " + std::to_string(z.cols()));
  const int d = z.cols() / 2;
  return {slice_cols(z, 0, d), slice_cols(z, d, d)};
}

// The n-gram window ending at (1-based) position k: rows
// max(1, k-n+1) .. k, truncated at the sequence start.
template <class T>
Tensor<T> ngram_window(const Tensor<T>& s, int k, int n) {
  if (k < 1 || k > s.rows())
    throw Error("ngram_window: position " + std::to_string(k) +
                " outside sequence of length " + std::to_string(s.rows()));
  if (n < 1) throw Error("ngram_window: gram size must be >= 1");
  const int start = std::max(1, k - n + 1);
  return slice_rows(s, start - 1, k - start + 1);
}

// Per-position bidirectional window LSTM summary. For every position k the
// forward LSTM consumes the window left to right and the backward LSTM the
// reversed window, each from a zero state; the result at k is the sum of the
// two final hidden states. Windows are independent runs; no state crosses
// positions. Vectorized: all positions advance in lockstep with shifted
// inputs; rows whose window has not started (forward) stay at the zero
// state, rows whose reversed window has ended (backward) hold their state.
template <class T>
Tensor<T> phrase_sequence(const Tensor<T>& s, int n, const LstmParams<T>& lstm_f,
                          const LstmParams<T>& lstm_b) {
  const int rows = s.rows(), width = s.cols();
  if (n < 1) throw Error("phrase_sequence: gram size must be >= 1");
  if (lstm_f.input_dim != width || lstm_f.hidden_dim != width)
    throw Error("phrase_sequence: forward LSTM dims (" +
                std::to_string(lstm_f.input_dim) + ", " +
                std::to_string(lstm_f.hidden_dim) + ") do not match width " +
                std::to_string(width));
  if (lstm_b.input_dim != width || lstm_b.hidden_dim != width)
    throw Error("phrase_sequence: backward LSTM dims (" +
                std::to_string(lstm_b.input_dim) + ", " +
                std::to_string(lstm_b.hidden_dim) + ") do not match width " +
                std::to_string(width));

  // Forward direction: step j feeds row k + (j - n + 1); rows whose source
  // index is still negative keep the zero state (their window starts later).
  Tensor<T> hf = Tensor<T>::zeros(rows, width);
  Tensor<T> cf = Tensor<T>::zeros(rows, width);
  for (int j = 0; j < n; ++j) {
    const int offset = j - n + 1;
    auto x = shift_rows(s, offset);
    auto [h2, c2] = lstm_step(x, hf, cf, lstm_f);
    if (offset < 0) {
      std::vector<T> started(rows);
      for (int r = 0; r < rows; ++r) started[r] = (r + offset >= 0) ? T(1) : T(0);
      hf = mul_rowmask(h2, started);
      cf = mul_rowmask(c2, std::move(started));
    } else {
      hf = h2;
      cf = c2;
    }
  }

  // Backward direction: step j feeds row k - j; rows that ran past the
  // sequence start hold the state from their last valid step.
  Tensor<T> hb = Tensor<T>::zeros(rows, width);
  Tensor<T> cb = Tensor<T>::zeros(rows, width);
  for (int j = 0; j < n; ++j) {
    auto x = shift_rows(s, -j);
    auto [h2, c2] = lstm_step(x, hb, cb, lstm_b);
    if (j > 0) {
      std::vector<T> alive(rows), done(rows);
      for (int r = 0; r < rows; ++r) {
        alive[r] = (r - j >= 0) ? T(1) : T(0);
        done[r] = T(1) - alive[r];
      }
      hb = add(mul_rowmask(h2, alive), mul_rowmask(hb, done));
      cb = add(mul_rowmask(c2, std::move(alive)), mul_rowmask(cb, std::move(done)));
    } else {
      hb = h2;
      cb = c2;
    }
  }

  return add(hf, hb);
}

// Builds phrase queries/keys for one head. Empty gram set returns (q, k)
// unchanged. Otherwise each gram size contributes one unzip of the window
// LSTM over zip(q, k); the halves are concatenated over ascending gram size.
// The first unzipped half is the phrase key, the second the phrase query.
template <class T>
std::pair<Tensor<T>, Tensor<T>> phrase_qk(
    const Tensor<T>& q, const Tensor<T>& k, const std::vector<int>& grams,
    const std::map<int, LstmPair<T>>& bank_entries) {
  if (grams.empty()) return {q, k};
  auto z = zip_features(q, k);
  std::vector<Tensor<T>> qs, ks;
  for (int g : grams) {
    auto it = bank_entries.find(g);
    if (it == bank_entries.end())
      throw Error("phrase_qk: no LSTM bank entry for gram size " +
                  std::to_string(g));
    auto p = phrase_sequence(z, g, it->second.fwd, it->second.bwd);
    auto [ph_k, ph_q] = unzip_features(p);
    ks.push_back(ph_k);
    qs.push_back(ph_q);
  }
  if (grams.size() == 1) return {qs.front(), ks.front()};
  return {concat_cols(qs), concat_cols(ks)};
}

// Parameters of one multi-head attention block. The LSTM bank is keyed
// (head, gram); with share_lstm_across_heads every head reads head slot 0.
template <class T>
struct MhaParams {
  std::vector<Tensor<T>> wq, wk, wv;  // per head, d_model x d_head
  Tensor<T> wo;                       // d_model x d_model
  std::map<std::pair<int, int>, LstmPair<T>> bank;
  bool share_lstm_across_heads = false;

  std::map<int, LstmPair<T>> bank_for_head(int head) const {
    std::map<int, LstmPair<T>> out;
    const int slot = share_lstm_across_heads ? 0 : head;
    for (const auto& [key, pair] : bank)
      if (key.first == slot) out.emplace(key.second, pair);
    return out;
  }
};

// Generalized attention core: queries projected from `qx`, keys/values from
// `kvx`. The phrase path (non-null `grams`) requires qx == kvx row counts
// (self-attention); cross-attention passes grams = nullptr.
template <class T>
Tensor<T> multi_head_attention(const Tensor<T>& qx, const Tensor<T>& kvx,
                               const MhaParams<T>& params,
                               const GramConfig* grams,
                               const AttnMask* mask) {
  const int heads = static_cast<int>(params.wq.size());
  const int d_model = qx.cols();
  if (heads == 0 || d_model % heads != 0)
    throw Error("attention: d_model " + std::to_string(d_model) +
                " not divisible by " + std::to_string(heads) + " heads");
  const int d_head = d_model / heads;
  const T inv_scale = T(1) / std::sqrt(static_cast<T>(d_head));

  std::vector<Tensor<T>> head_outputs;
  head_outputs.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    auto q = matmul(qx, params.wq[h]);
    auto k = matmul(kvx, params.wk[h]);
    auto v = matmul(kvx, params.wv[h]);
    Tensor<T> ph_q = q, ph_k = k;
    if (grams && !grams->per_head_grams[h].empty()) {
      if (qx.rows() != kvx.rows())
        throw Error("attention: phrase path requires self-attention inputs");
      std::tie(ph_q, ph_k) =
          phrase_qk(q, k, grams->per_head_grams[h], params.bank_for_head(h));
    }
    // Scale stays sqrt(d_head) regardless of the phrase feature width.
    auto scores = scale(matmul(ph_q, transpose(ph_k)), inv_scale);
    auto weights = softmax_rows(scores, mask);
    head_outputs.push_back(matmul(weights, v));
  }
  auto combined = heads == 1 ? head_outputs.front() : concat_cols(head_outputs);
  return matmul(combined, params.wo);
}

// Encoder self-attention with the phrase mechanism. The padding mask applies
// to attention keys only; phrase LSTMs run over padded positions but their
// outputs are never attended to.
template <class T>
Tensor<T> phrase_multi_head_attention(const Tensor<T>& x,
                                      const MhaParams<T>& params,
                                      const GramConfig& gram_cfg,
                                      const std::vector<uint8_t>* key_pad_mask) {
  if (gram_cfg.heads != static_cast<int>(params.wq.size()))
    throw Error("attention: gram config lists " + std::to_string(gram_cfg.heads) +
                " heads, params have " + std::to_string(params.wq.size()));
  AttnMask mask;
  const AttnMask* mask_ptr = nullptr;
  if (key_pad_mask) {
    mask = AttnMask::from_key_mask(x.rows(), *key_pad_mask);
    mask_ptr = &mask;
  }
  return multi_head_attention(x, x, params, &gram_cfg, mask_ptr);
}

}  // namespace nmt
