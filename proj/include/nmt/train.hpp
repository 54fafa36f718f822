#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "nmt/checkpoint.hpp"
#include "nmt/model.hpp"

namespace nmt {

struct TrainConfig {
  double peak_lr = 7e-4;
  int warmup_steps = 6000;
  int max_tokens_per_batch = 4096;
  int max_epochs = 100;
  int checkpoint_every_steps = 0;  // 0: checkpoint at every epoch end
  int keep_last = 5;
  uint64_t seed = 1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.98;
  double adam_eps = 1e-9;
  double grad_clip = 0.0;  // 0: off
  // Harness knobs (0 = disabled): step cap, dev-eval cadence, early stop.
  int64_t max_steps = 0;
  int eval_every_steps = 0;
  double stop_at_accuracy = 0.0;

  void validate() const {
    if (peak_lr <= 0 || warmup_steps <= 0 || max_tokens_per_batch <= 0 ||
        max_epochs <= 0)
      throw Error("train config: lr, warmup, batch tokens and epochs must be positive");
    if (keep_last < 1) throw Error("train config: keep_last must be >= 1");
    if (adam_beta1 < 0 || adam_beta1 >= 1 || adam_beta2 < 0 || adam_beta2 >= 1)
      throw Error("train config: adam betas must lie in [0, 1)");
    if (adam_eps <= 0) throw Error("train config: adam eps must be positive");
  }
};

// Linear warmup to the peak rate, then inverse-square-root decay; continuous
// at the boundary.
inline double lr_at_step(int64_t step, const TrainConfig& cfg) {
  if (step < 1) throw Error("lr_at_step: step must be >= 1");
  if (step <= cfg.warmup_steps)
    return cfg.peak_lr * static_cast<double>(step) / cfg.warmup_steps;
  return cfg.peak_lr * std::sqrt(static_cast<double>(cfg.warmup_steps) /
                                 static_cast<double>(step));
}

// Adam with bias correction. Moments are kept in double regardless of the
// parameter precision.
template <class T>
struct AdamState {
  std::vector<std::vector<double>> m, v;
  int64_t t = 0;

  static AdamState init(const ModelParams<T>& params) {
    AdamState s;
    s.m.reserve(params.named.size());
    s.v.reserve(params.named.size());
    for (const auto& [name, p] : params.named) {
      s.m.emplace_back(p.size(), 0.0);
      s.v.emplace_back(p.size(), 0.0);
    }
    return s;
  }
};

template <class T>
void adam_step(ModelParams<T>& params, AdamState<T>& state, double lr,
               const TrainConfig& cfg) {
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(state.t));

  double clip_scale = 1.0;
  if (cfg.grad_clip > 0.0) {
    double sq = 0.0;
    for (auto& [name, p] : params.named)
      for (T g : p.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
    const double norm = std::sqrt(sq);
    if (norm > cfg.grad_clip) clip_scale = cfg.grad_clip / norm;
  }

  for (size_t pi = 0; pi < params.named.size(); ++pi) {
    auto& [name, p] = params.named[pi];
    auto grads = p.grad();
    auto vals = p.values_mut();
    auto& m = state.m[pi];
    auto& v = state.v[pi];
    for (size_t i = 0; i < vals.size(); ++i) {
      const double g0 = static_cast<double>(grads[i]);
      if (!std::isfinite(g0))
        throw Error("adam_step: non-finite gradient in parameter '" + name + "'");
      const double g = g0 * clip_scale;
      m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * g;
      v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      vals[i] = static_cast<T>(static_cast<double>(vals[i]) -
                               lr * m_hat / (std::sqrt(v_hat) + cfg.adam_eps));
    }
  }
}

// Vocabulary-mapped corpus: src rows are token ids ending with </s>, tgt
// rows start with <s> and end with </s>.
struct EncodedCorpus {
  std::vector<std::vector<int>> src;
  std::vector<std::vector<int>> tgt;

  size_t size() const { return src.size(); }
};

struct TokenBatch {
  std::vector<int> pair_indices;
};

// Length-sorted greedy batching: pairs sorted by target length (then source
// length, then index) and filled until the padded token count would exceed
// the cap. A single pair over the cap forms its own batch with a warning.
inline std::vector<TokenBatch> make_token_batches(const EncodedCorpus& corpus,
                                                  int max_tokens,
                                                  std::ostream* warn = nullptr) {
  if (corpus.size() == 0) throw Error("make_token_batches: empty corpus");
  std::vector<int> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const auto ka = std::make_tuple(corpus.tgt[a].size(), corpus.src[a].size(), a);
    const auto kb = std::make_tuple(corpus.tgt[b].size(), corpus.src[b].size(), b);
    return ka < kb;
  });

  std::vector<TokenBatch> batches;
  TokenBatch cur;
  size_t max_src = 0, max_tgt = 0;
  auto flush = [&]() {
    if (!cur.pair_indices.empty()) {
      batches.push_back(std::move(cur));
      cur = {};
      max_src = max_tgt = 0;
    }
  };
  for (int idx : order) {
    const size_t ns = std::max(max_src, corpus.src[idx].size());
    const size_t nt = std::max(max_tgt, corpus.tgt[idx].size());
    const size_t count = cur.pair_indices.size() + 1;
    const size_t padded = std::max(ns, nt) * count;
    if (!cur.pair_indices.empty() && padded > static_cast<size_t>(max_tokens))
      flush();
    const size_t single = std::max(corpus.src[idx].size(), corpus.tgt[idx].size());
    if (cur.pair_indices.empty() && single > static_cast<size_t>(max_tokens) && warn)
      *warn << "warning: sentence pair " << idx << " alone exceeds "
            << max_tokens << " tokens; forming a singleton batch\n";
    cur.pair_indices.push_back(idx);
    max_src = std::max(max_src, corpus.src[idx].size());
    max_tgt = std::max(max_tgt, corpus.tgt[idx].size());
    if (single > static_cast<size_t>(max_tokens)) flush();
  }
  flush();
  return batches;
}

// Teacher-forced argmax accuracy over non-pad positions (ties resolved to
// the lowest token id).
template <class T>
double next_token_accuracy(const ModelParams<T>& params, const ModelConfig& cfg,
                           const EncodedCorpus& corpus) {
  NoGradGuard no_grad;
  int64_t correct = 0, total = 0;
  for (size_t i = 0; i < corpus.size(); ++i) {
    auto memory = encode(corpus.src[i], params, cfg);
    const auto src_keys = non_pad_mask(corpus.src[i]);
    std::vector<int> prefix(corpus.tgt[i].begin(), corpus.tgt[i].end() - 1);
    std::vector<int> refs(corpus.tgt[i].begin() + 1, corpus.tgt[i].end());
    auto logits = decode(prefix, memory, params, cfg, &src_keys);
    for (int t = 0; t < logits.rows(); ++t) {
      if (refs[t] == kPadId) continue;
      int best = 0;
      T best_v = logits.at(t, 0);
      for (int v = 1; v < logits.cols(); ++v)
        if (logits.at(t, v) > best_v) {
          best_v = logits.at(t, v);
          best = v;
        }
      correct += (best == refs[t]);
      ++total;
    }
  }
  return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

template <class T>
double corpus_mean_loss(const ModelParams<T>& params, const ModelConfig& cfg,
                        const EncodedCorpus& corpus) {
  NoGradGuard no_grad;
  double total = 0.0;
  int64_t tokens = 0;
  for (size_t i = 0; i < corpus.size(); ++i) {
    int count = 0;
    auto loss =
        sequence_loss_sum(params, cfg, corpus.src[i], corpus.tgt[i], &count);
    total += static_cast<double>(loss.item());
    tokens += count;
  }
  return total / static_cast<double>(tokens);
}

struct TrainResult {
  int64_t steps = 0;
  int epochs = 0;
  std::vector<std::string> checkpoints;  // retained files, oldest first
  std::vector<double> epoch_train_loss;
  double final_dev_loss = 0.0;
  double final_dev_accuracy = 0.0;
  bool stopped_early = false;
};

// Token-batched training loop: per step, the summed losses of the batch are
// normalized by the batch token count, backpropagated, and applied with
// Adam at the scheduled rate. Checkpoints keep the `keep_last` newest files.
template <class T>
TrainResult train_loop(ModelParams<T>& params, const ModelConfig& mcfg,
                       const TrainConfig& tcfg, const EncodedCorpus& train,
                       const EncodedCorpus& dev, const std::string& out_dir,
                       const std::string& config_echo, std::ostream& log) {
  tcfg.validate();
  mcfg.validate();
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  auto batches = make_token_batches(train, tcfg.max_tokens_per_batch, &log);
  log << "training: " << train.size() << " pairs in " << batches.size()
      << " batches\n";

  AdamState<T> opt = AdamState<T>::init(params);
  std::mt19937_64 dropout_rng(tcfg.seed ^ 0x9e3779b97f4a7c15ULL);
  DropoutCtx<T> drop{mcfg.dropout, &dropout_rng, true};

  TrainResult result;
  int64_t step = 0;

  auto save_ckpt = [&](int epoch) {
    CheckpointManifest m;
    m.step = step;
    m.epoch = epoch;
    m.config = config_echo;
    char name[64];
    std::snprintf(name, sizeof(name), "checkpoint_%08lld.ckpt",
                  static_cast<long long>(step));
    const std::string path = (fs::path(out_dir) / name).string();
    save_checkpoint(path, params, m);
    result.checkpoints.push_back(path);
    while (static_cast<int>(result.checkpoints.size()) > tcfg.keep_last) {
      fs::remove(result.checkpoints.front());
      result.checkpoints.erase(result.checkpoints.begin());
    }
  };

  auto dev_eval = [&](int epoch) {
    result.final_dev_loss = corpus_mean_loss(params, mcfg, dev);
    result.final_dev_accuracy = next_token_accuracy(params, mcfg, dev);
    log << "  step " << step << " epoch " << epoch
        << " dev_loss " << result.final_dev_loss
        << " dev_acc " << result.final_dev_accuracy << "\n";
    return tcfg.stop_at_accuracy > 0.0 &&
           result.final_dev_accuracy >= tcfg.stop_at_accuracy;
  };

  bool done = false;
  for (int epoch = 1; epoch <= tcfg.max_epochs && !done; ++epoch) {
    std::vector<int> batch_order(batches.size());
    std::iota(batch_order.begin(), batch_order.end(), 0);
    std::mt19937_64 shuffle_rng(tcfg.seed + static_cast<uint64_t>(epoch));
    std::shuffle(batch_order.begin(), batch_order.end(), shuffle_rng);

    double epoch_loss = 0.0;
    int64_t epoch_tokens = 0;
    for (int bi : batch_order) {
      ++step;
      params.zero_grads();
      Tensor<T> total;
      int batch_tokens = 0;
      for (int idx : batches[bi].pair_indices) {
        int count = 0;
        auto loss = sequence_loss_sum(params, mcfg, train.src[idx],
                                      train.tgt[idx], &count, drop);
        batch_tokens += count;
        total = total.defined() ? add(total, loss) : loss;
      }
      auto mean = scale(total, T(1) / static_cast<T>(batch_tokens));
      const double loss_v = static_cast<double>(mean.item());
      if (!std::isfinite(loss_v))
        throw Error("train: non-finite loss at step " + std::to_string(step) +
                    " (epoch " + std::to_string(epoch) + ", batch " +
                    std::to_string(bi) + ")");
      backward(mean);
      adam_step(params, opt, lr_at_step(step, tcfg), tcfg);
      epoch_loss += loss_v * batch_tokens;
      epoch_tokens += batch_tokens;

      if (tcfg.checkpoint_every_steps > 0 &&
          step % tcfg.checkpoint_every_steps == 0)
        save_ckpt(epoch);
      if (tcfg.eval_every_steps > 0 && step % tcfg.eval_every_steps == 0 &&
          dev_eval(epoch)) {
        result.stopped_early = true;
        done = true;
        break;
      }
      if (tcfg.max_steps > 0 && step >= tcfg.max_steps) {
        done = true;
        break;
      }
    }
    result.epochs = epoch;
    result.epoch_train_loss.push_back(epoch_loss /
                                      static_cast<double>(epoch_tokens));
    log << "epoch " << epoch << " train_loss " << result.epoch_train_loss.back()
        << "\n";
    if (tcfg.checkpoint_every_steps == 0) save_ckpt(epoch);
    if (!done && tcfg.eval_every_steps == 0 && dev_eval(epoch)) {
      result.stopped_early = true;
      done = true;
    }
  }
  result.steps = step;
  // Leave a checkpoint at the final parameters if the cadence missed them.
  bool have_final = false;
  if (!result.checkpoints.empty()) {
    RawCheckpoint last = load_raw_checkpoint(result.checkpoints.back());
    have_final = last.manifest.step == step;
  }
  if (!have_final) save_ckpt(result.epochs);
  if (!result.stopped_early) dev_eval(result.epochs);
  return result;
}

}  // namespace nmt
