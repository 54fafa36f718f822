#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "nmt/gram.hpp"
#include "nmt/phrase_attention.hpp"
#include "nmt/tensor.hpp"

// Encoder-decoder translation model: sinusoidal positions, a stack of
// phrase-attention encoder layers, a plain Transformer decoder, and the
// label-smoothed negative log-likelihood.

namespace nmt {

inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kBosId = 2;
inline constexpr int kEosId = 3;

struct ModelConfig {
  int d_model = 512;
  int heads = 4;
  int layers = 6;  // encoder and decoder depth
  int ffn_dim = 2048;
  double dropout = 0.1;
  double label_smoothing = 0.1;
  GramConfig gram = GramConfig::vanilla(4);
  bool share_lstm_across_heads = false;
  int src_vocab_size = 0;
  int tgt_vocab_size = 0;
  int max_len = 256;

  int d_head() const { return d_model / heads; }

  void validate() const {
    if (d_model <= 0 || heads <= 0 || layers < 0 || ffn_dim <= 0)
      throw Error("model config: sizes must be positive");
    if (d_model % heads != 0)
      throw Error("model config: d_model " + std::to_string(d_model) +
                  " not divisible by heads " + std::to_string(heads));
    if (d_model % 2 != 0)
      throw Error("model config: d_model must be even for sinusoidal positions");
    if (gram.heads != heads)
      throw Error("model config: gram config heads " + std::to_string(gram.heads) +
                  " != model heads " + std::to_string(heads));
    if (src_vocab_size <= 0 || tgt_vocab_size <= 0)
      throw Error("model config: vocabulary sizes must be set");
    if (dropout < 0.0 || dropout >= 1.0)
      throw Error("model config: dropout must be in [0, 1)");
    if (label_smoothing < 0.0 || label_smoothing >= 1.0)
      throw Error("model config: label_smoothing must be in [0, 1)");
  }
};

template <class T>
struct LnParams {
  Tensor<T> gain;
  Tensor<T> bias;
};

template <class T>
struct FfnParams {
  Tensor<T> w1, b1, w2, b2;
};

template <class T>
struct EncLayerParams {
  MhaParams<T> attn;
  LnParams<T> ln1, ln2;
  FfnParams<T> ffn;
};

template <class T>
struct DecLayerParams {
  MhaParams<T> self_attn;
  MhaParams<T> cross_attn;
  LnParams<T> ln1, ln2, ln3;
  FfnParams<T> ffn;
};

inline constexpr double kLayerNormEps = 1e-5;

// Dropout context threaded through the forward passes. Inference uses the
// default (inactive) context.
template <class T>
struct DropoutCtx {
  double rate = 0.0;
  std::mt19937_64* rng = nullptr;
  bool training = false;

  Tensor<T> operator()(const Tensor<T>& x) const {
    if (!training || rate <= 0.0) return x;
    return dropout(x, rate, *rng, training);
  }
};

// The full parameter set. Tensors are registered under stable names in a
// fixed order; checkpoints store them by name.
template <class T>
struct ModelParams {
  ModelConfig cfg;
  Tensor<T> src_embed, tgt_embed;
  std::vector<EncLayerParams<T>> enc;
  std::vector<DecLayerParams<T>> dec;
  Tensor<T> out_w, out_b;
  std::vector<std::pair<std::string, Tensor<T>>> named;

  static ModelParams init(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    ModelParams p;
    p.cfg = cfg;
    std::mt19937_64 rng(seed);
    const int d = cfg.d_model, dh = cfg.d_head(), H = cfg.heads;

    auto reg = [&](const std::string& name, Tensor<T> t) {
      t.set_name(name);
      p.named.emplace_back(name, t);
      return t;
    };
    auto xavier = [&](const std::string& name, int rows, int cols, int fan_in,
                      int fan_out) {
      const double bound = std::sqrt(6.0 / (fan_in + fan_out));
      std::uniform_real_distribution<double> dist(-bound, bound);
      auto t = Tensor<T>::zeros(rows, cols, true);
      for (auto& v : t.values_mut()) v = static_cast<T>(dist(rng));
      return reg(name, t);
    };
    auto matrix = [&](const std::string& name, int rows, int cols) {
      return xavier(name, rows, cols, rows, cols);
    };
    auto zeros = [&](const std::string& name, int rows, int cols) {
      return reg(name, Tensor<T>::zeros(rows, cols, true));
    };
    auto ones = [&](const std::string& name, int cols) {
      return reg(name, Tensor<T>::filled(1, cols, T(1), true));
    };
    auto embedding = [&](const std::string& name, int vocab) {
      std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(double(d)));
      auto t = Tensor<T>::zeros(vocab, d, true);
      for (auto& v : t.values_mut()) v = static_cast<T>(dist(rng));
      return reg(name, t);
    };
    auto lstm = [&](const std::string& prefix, int width) {
      LstmParams<T> lp = LstmParams<T>::zeros(width, width);
      // Per-gate Xavier: each gate is logically hidden x (input + hidden).
      const double bound = std::sqrt(6.0 / (2 * width + width));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (auto& v : lp.w.values_mut()) v = static_cast<T>(dist(rng));
      lp.w.set_name(prefix + ".w");
      lp.b.set_name(prefix + ".b");
      p.named.emplace_back(prefix + ".w", lp.w);
      p.named.emplace_back(prefix + ".b", lp.b);
      return lp;
    };
    auto mha = [&](const std::string& prefix, bool with_bank, bool shared) {
      MhaParams<T> m;
      m.share_lstm_across_heads = shared;
      for (int h = 0; h < H; ++h) {
        m.wq.push_back(matrix(prefix + ".q" + std::to_string(h), d, dh));
        m.wk.push_back(matrix(prefix + ".k" + std::to_string(h), d, dh));
        m.wv.push_back(matrix(prefix + ".v" + std::to_string(h), d, dh));
      }
      m.wo = matrix(prefix + ".out", d, d);
      if (with_bank) {
        if (shared) {
          for (int g : cfg.gram.gram_union()) {
            const std::string base = prefix + ".lstm.shared.g" + std::to_string(g);
            m.bank[{0, g}] = {lstm(base + ".fwd", 2 * dh), lstm(base + ".bwd", 2 * dh)};
          }
        } else {
          for (int h = 0; h < H; ++h)
            for (int g : cfg.gram.per_head_grams[h]) {
              const std::string base =
                  prefix + ".lstm.h" + std::to_string(h) + ".g" + std::to_string(g);
              m.bank[{h, g}] = {lstm(base + ".fwd", 2 * dh), lstm(base + ".bwd", 2 * dh)};
            }
        }
      }
      return m;
    };
    auto layer_norm_pair = [&](const std::string& prefix) {
      return LnParams<T>{ones(prefix + ".gain", d), zeros(prefix + ".bias", 1, d)};
    };
    auto ffn = [&](const std::string& prefix) {
      return FfnParams<T>{matrix(prefix + ".w1", d, cfg.ffn_dim),
                          zeros(prefix + ".b1", 1, cfg.ffn_dim),
                          matrix(prefix + ".w2", cfg.ffn_dim, d),
                          zeros(prefix + ".b2", 1, d)};
    };

    p.src_embed = embedding("src_embed", cfg.src_vocab_size);
    p.tgt_embed = embedding("tgt_embed", cfg.tgt_vocab_size);
    for (int l = 0; l < cfg.layers; ++l) {
      const std::string pre = "enc." + std::to_string(l);
      EncLayerParams<T> layer;
      layer.attn = mha(pre + ".attn", true, cfg.share_lstm_across_heads);
      layer.ln1 = layer_norm_pair(pre + ".ln1");
      layer.ffn = ffn(pre + ".ffn");
      layer.ln2 = layer_norm_pair(pre + ".ln2");
      p.enc.push_back(std::move(layer));
    }
    for (int l = 0; l < cfg.layers; ++l) {
      const std::string pre = "dec." + std::to_string(l);
      DecLayerParams<T> layer;
      layer.self_attn = mha(pre + ".self", false, false);
      layer.ln1 = layer_norm_pair(pre + ".ln1");
      layer.cross_attn = mha(pre + ".cross", false, false);
      layer.ln2 = layer_norm_pair(pre + ".ln2");
      layer.ffn = ffn(pre + ".ffn");
      layer.ln3 = layer_norm_pair(pre + ".ln3");
      p.dec.push_back(std::move(layer));
    }
    p.out_w = matrix("out_proj.w", d, cfg.tgt_vocab_size);
    p.out_b = zeros("out_proj.b", 1, cfg.tgt_vocab_size);
    return p;
  }

  void zero_grads() {
    for (auto& [name, t] : named) t.zero_grad();
  }

  std::vector<Tensor<T>> all_tensors() const {
    std::vector<Tensor<T>> out;
    out.reserve(named.size());
    for (const auto& [name, t] : named) out.push_back(t);
    return out;
  }

  int64_t actual_param_count() const {
    int64_t n = 0;
    for (const auto& [name, t] : named) n += static_cast<int64_t>(t.size());
    return n;
  }
};

// Sinusoidal position encodings, positions 0-indexed:
//   (pos, 2i) = sin(pos / 10000^(2i/d)),  (pos, 2i+1) = cos(same).
template <class T>
Tensor<T> sinusoidal_positions(int length, int d_model) {
  if (d_model % 2 != 0)
    throw Error("sinusoidal_positions: d_model must be even");
  auto out = Tensor<T>::zeros(length, d_model);
  auto v = out.values_mut();
  for (int pos = 0; pos < length; ++pos)
    for (int i = 0; i < d_model / 2; ++i) {
      const double angle =
          pos / std::pow(10000.0, (2.0 * i) / static_cast<double>(d_model));
      v[static_cast<size_t>(pos) * d_model + 2 * i] = static_cast<T>(std::sin(angle));
      v[static_cast<size_t>(pos) * d_model + 2 * i + 1] = static_cast<T>(std::cos(angle));
    }
  return out;
}

template <class T>
Tensor<T> feed_forward(const Tensor<T>& x, const FfnParams<T>& p) {
  auto inner = relu(add_bias(matmul(x, p.w1), p.b1));
  return add_bias(matmul(inner, p.w2), p.b2);
}

// One encoder layer, post-norm residual order:
//   h_no  = LayerNorm(attention(x) + x)
//   h_out = LayerNorm(FFN(h_no) + h_no)
template <class T>
Tensor<T> encoder_layer(const Tensor<T>& x, const EncLayerParams<T>& p,
                        const GramConfig& gram_cfg,
                        const std::vector<uint8_t>* key_pad_mask,
                        const DropoutCtx<T>& drop = {}) {
  auto h_mh = drop(phrase_multi_head_attention(x, p.attn, gram_cfg, key_pad_mask));
  auto h_no = layer_norm_rows(add(h_mh, x), p.ln1.gain, p.ln1.bias,
                              static_cast<T>(kLayerNormEps));
  auto h_ff = drop(feed_forward(h_no, p.ffn));
  return layer_norm_rows(add(h_ff, h_no), p.ln2.gain, p.ln2.bias,
                         static_cast<T>(kLayerNormEps));
}

inline std::vector<uint8_t> non_pad_mask(const std::vector<int>& ids) {
  std::vector<uint8_t> m(ids.size());
  for (size_t i = 0; i < ids.size(); ++i) m[i] = ids[i] != kPadId;
  return m;
}

// Runs the encoder stack over a source id sequence. Ids must already be
// vocabulary-mapped (unknowns to <unk>); out-of-range ids are an error.
template <class T>
Tensor<T> encode(const std::vector<int>& src_ids, const ModelParams<T>& params,
                 const ModelConfig& cfg, const DropoutCtx<T>& drop = {}) {
  const int s = static_cast<int>(src_ids.size());
  auto x = add(scale(embedding_rows(params.src_embed, src_ids),
                     static_cast<T>(std::sqrt(double(cfg.d_model)))),
               sinusoidal_positions<T>(s, cfg.d_model));
  x = drop(x);
  const auto keys = non_pad_mask(src_ids);
  const bool any_pad =
      std::find(keys.begin(), keys.end(), uint8_t(0)) != keys.end();
  for (const auto& layer : params.enc)
    x = encoder_layer(x, layer, cfg.gram, any_pad ? &keys : nullptr, drop);
  return x;
}

// Decoder forward over a target prefix (teacher forcing / incremental
// decoding). Row t of the logits depends only on prefix positions <= t and
// on the encoder memory.
template <class T>
Tensor<T> decode(const std::vector<int>& tgt_prefix_ids, const Tensor<T>& memory,
                 const ModelParams<T>& params, const ModelConfig& cfg,
                 const std::vector<uint8_t>* src_key_mask,
                 const DropoutCtx<T>& drop = {}) {
  if (tgt_prefix_ids.empty()) throw Error("decode: empty target prefix");
  if (tgt_prefix_ids.front() != kBosId)
    throw Error("decode: target prefix must start with <s>");
  const int t = static_cast<int>(tgt_prefix_ids.size());
  auto y = add(scale(embedding_rows(params.tgt_embed, tgt_prefix_ids),
                     static_cast<T>(std::sqrt(double(cfg.d_model)))),
               sinusoidal_positions<T>(t, cfg.d_model));
  y = drop(y);
  const auto tgt_keys = non_pad_mask(tgt_prefix_ids);
  const auto self_mask = AttnMask::causal(t, &tgt_keys);
  AttnMask cross_mask;
  const AttnMask* cross_ptr = nullptr;
  if (src_key_mask) {
    cross_mask = AttnMask::from_key_mask(t, *src_key_mask);
    cross_ptr = &cross_mask;
  }
  for (const auto& layer : params.dec) {
    auto h = drop(multi_head_attention(y, y, layer.self_attn, nullptr, &self_mask));
    y = layer_norm_rows(add(h, y), layer.ln1.gain, layer.ln1.bias,
                        static_cast<T>(kLayerNormEps));
    h = drop(multi_head_attention(y, memory, layer.cross_attn, nullptr, cross_ptr));
    y = layer_norm_rows(add(h, y), layer.ln2.gain, layer.ln2.bias,
                        static_cast<T>(kLayerNormEps));
    h = drop(feed_forward(y, layer.ffn));
    y = layer_norm_rows(add(h, y), layer.ln3.gain, layer.ln3.bias,
                        static_cast<T>(kLayerNormEps));
  }
  return add_bias(matmul(y, params.out_w), params.out_b);
}

// Summed label-smoothed negative log-likelihood over non-pad positions.
// Writes the number of counted positions to `token_count`.
template <class T>
Tensor<T> nll_loss_sum(const Tensor<T>& logits, const std::vector<int>& refs,
                       int pad_id, double label_smoothing, int* token_count) {
  const int rows = logits.rows(), vocab = logits.cols();
  if (static_cast<int>(refs.size()) != rows)
    throw Error("nll_loss: " + std::to_string(refs.size()) + " references for " +
                std::to_string(rows) + " logit rows");
  int count = 0;
  for (int r : refs) {
    if (r < 0 || r >= vocab)
      throw Error("nll_loss: reference id " + std::to_string(r) +
                  " outside vocabulary");
    if (r != pad_id) ++count;
  }
  if (count == 0) throw Error("nll_loss: all positions are padding");
  if (token_count) *token_count = count;

  auto lsm = log_softmax_rows(logits);
  auto ln = lsm.node();
  const double eps = label_smoothing;
  auto refs_copy = std::make_shared<std::vector<int>>(refs);
  auto out = detail::make_result<T>(
      1, 1, {ln}, [ln, refs_copy, pad_id, eps, rows, vocab](TensorNode<T>& n) {
        if (!ln->requires_grad) return;
        ln->ensure_grad();
        const T g = n.grad[0];
        for (int i = 0; i < rows; ++i) {
          const int ref = (*refs_copy)[i];
          if (ref == pad_id) continue;
          for (int j = 0; j < vocab; ++j)
            ln->grad[static_cast<size_t>(i) * vocab + j] -=
                g * static_cast<T>(eps / vocab);
          ln->grad[static_cast<size_t>(i) * vocab + ref] -=
              g * static_cast<T>(1.0 - eps);
        }
      });
  T total = 0;
  for (int i = 0; i < rows; ++i) {
    const int ref = refs[i];
    if (ref == pad_id) continue;
    T smooth = 0;
    for (int j = 0; j < vocab; ++j)
      smooth -= ln->value[static_cast<size_t>(i) * vocab + j];
    total += static_cast<T>(1.0 - eps) *
                 (-ln->value[static_cast<size_t>(i) * vocab + ref]) +
             static_cast<T>(eps) * smooth / static_cast<T>(vocab);
  }
  out.node()->value[0] = total;
  return out;
}

// Mean over non-pad positions of the smoothed negative log-likelihood.
template <class T>
Tensor<T> nll_loss(const Tensor<T>& logits, const std::vector<int>& refs,
                   int pad_id, double label_smoothing) {
  int count = 0;
  auto total = nll_loss_sum(logits, refs, pad_id, label_smoothing, &count);
  return scale(total, T(1) / static_cast<T>(count));
}

// Teacher-forced loss for one sentence pair. `tgt_ids` is the full target
// sequence including <s> and </s>; positions after the first pad are ignored.
template <class T>
Tensor<T> sequence_loss_sum(const ModelParams<T>& params, const ModelConfig& cfg,
                            const std::vector<int>& src_ids,
                            const std::vector<int>& tgt_ids, int* token_count,
                            const DropoutCtx<T>& drop = {}) {
  if (tgt_ids.size() < 2)
    throw Error("sequence_loss: target must contain <s> and at least one token");
  auto memory = encode(src_ids, params, cfg, drop);
  const auto src_keys = non_pad_mask(src_ids);
  const bool any_pad =
      std::find(src_keys.begin(), src_keys.end(), uint8_t(0)) != src_keys.end();
  std::vector<int> prefix(tgt_ids.begin(), tgt_ids.end() - 1);
  std::vector<int> refs(tgt_ids.begin() + 1, tgt_ids.end());
  auto logits =
      decode(prefix, memory, params, cfg, any_pad ? &src_keys : nullptr, drop);
  return nll_loss_sum(logits, refs, kPadId, cfg.label_smoothing, token_count);
}

// Closed-form parameter count for a configuration; must equal the number of
// allocated parameter values.
inline int64_t count_parameters(const ModelConfig& cfg) {
  cfg.validate();
  const int64_t d = cfg.d_model, dh = cfg.d_head(), H = cfg.heads;
  const int64_t f = cfg.ffn_dim;
  int64_t total = 0;
  total += static_cast<int64_t>(cfg.src_vocab_size) * d;
  total += static_cast<int64_t>(cfg.tgt_vocab_size) * d;

  const int64_t attn_block = 3 * H * d * dh + d * d;
  const int64_t ffn_block = d * f + f + f * d + d;
  const int64_t ln_pair = 2 * d;
  const int64_t lstm_pair = 2 * LstmParams<float>::param_count(2 * dh, 2 * dh);

  int64_t bank_per_layer = 0;
  if (cfg.share_lstm_across_heads) {
    bank_per_layer =
        static_cast<int64_t>(cfg.gram.gram_union().size()) * lstm_pair;
  } else {
    for (const auto& grams : cfg.gram.per_head_grams)
      bank_per_layer += static_cast<int64_t>(grams.size()) * lstm_pair;
  }
  total += cfg.layers * (attn_block + bank_per_layer + 2 * ln_pair + ffn_block);
  total += cfg.layers * (2 * attn_block + 3 * ln_pair + ffn_block);
  total += d * cfg.tgt_vocab_size + cfg.tgt_vocab_size;
  return total;
}

}  // namespace nmt
