#pragma once

#include <algorithm>
#include <vector>

#include "nmt/model.hpp"

namespace nmt {

struct BeamConfig {
  int beam_size = 4;
  int max_len = 128;       // generated tokens, excluding <s>
  bool length_norm = true;
};

namespace detail {

struct BeamHyp {
  std::vector<int> ids;  // generated tokens (no <s>), may end with </s>
  double logp = 0.0;
  bool finished = false;

  double rank_score(bool length_norm) const {
    if (!length_norm || ids.empty()) return logp;
    return logp / static_cast<double>(ids.size());
  }
};

// Higher score first; exact ties go to the lexicographically smaller token
// sequence for reproducible decoding.
inline bool beam_better(double sa, const std::vector<int>& ia, double sb,
                        const std::vector<int>& ib) {
  if (sa != sb) return sa > sb;
  return ia < ib;
}

}  // namespace detail

// Standard beam search over decoder log-probabilities. Hypotheses end at
// </s> or at max_len; the final ranking optionally divides by length.
// Returns the generated token sequence (without <s>; includes the
// terminating </s> when one was produced).
template <class T>
std::vector<int> beam_search(const ModelParams<T>& params, const ModelConfig& cfg,
                             const std::vector<int>& src_ids,
                             const BeamConfig& beam) {
  if (beam.beam_size < 1) throw Error("beam_search: beam size must be >= 1");
  if (beam.max_len < 1) throw Error("beam_search: max_len must be >= 1");
  NoGradGuard no_grad;

  auto memory = encode(src_ids, params, cfg);
  const auto src_keys = non_pad_mask(src_ids);
  const bool any_pad =
      std::find(src_keys.begin(), src_keys.end(), uint8_t(0)) != src_keys.end();
  const std::vector<uint8_t>* key_mask = any_pad ? &src_keys : nullptr;

  using detail::BeamHyp;
  std::vector<BeamHyp> alive{BeamHyp{}};
  std::vector<BeamHyp> finished;

  for (int step = 0; step < beam.max_len && !alive.empty(); ++step) {
    std::vector<BeamHyp> candidates;
    for (const auto& hyp : alive) {
      std::vector<int> prefix;
      prefix.reserve(hyp.ids.size() + 1);
      prefix.push_back(kBosId);
      prefix.insert(prefix.end(), hyp.ids.begin(), hyp.ids.end());
      auto logits = decode(prefix, memory, params, cfg, key_mask);
      auto lsm = log_softmax_rows(logits);
      const int last = lsm.rows() - 1;
      for (int v = 0; v < lsm.cols(); ++v) {
        BeamHyp next = hyp;
        next.ids.push_back(v);
        next.logp += static_cast<double>(lsm.at(last, v));
        next.finished = (v == kEosId);
        candidates.push_back(std::move(next));
      }
    }
    std::sort(candidates.begin(), candidates.end(),
              [](const BeamHyp& a, const BeamHyp& b) {
                return detail::beam_better(a.logp, a.ids, b.logp, b.ids);
              });
    // Only the overall top beam_size candidates survive; finished ones
    // leave the beam. With beam size 1 this is exactly greedy decoding.
    if (static_cast<int>(candidates.size()) > beam.beam_size)
      candidates.resize(beam.beam_size);
    alive.clear();
    for (auto& c : candidates) {
      if (c.finished)
        finished.push_back(std::move(c));
      else
        alive.push_back(std::move(c));
    }
  }

  // Rank every terminated hypothesis plus whatever survived to max_len.
  std::vector<BeamHyp> pool = std::move(finished);
  pool.insert(pool.end(), alive.begin(), alive.end());
  const BeamHyp* best = nullptr;
  for (const auto& h : pool)
    if (!best || detail::beam_better(h.rank_score(beam.length_norm), h.ids,
                                     best->rank_score(beam.length_norm),
                                     best->ids))
      best = &h;
  return best ? best->ids : std::vector<int>{};
}

template <class T>
std::vector<int> greedy_decode(const ModelParams<T>& params,
                               const ModelConfig& cfg,
                               const std::vector<int>& src_ids, int max_len) {
  return beam_search(params, cfg, src_ids, BeamConfig{1, max_len, false});
}

// Strips the terminating </s> (and anything after a pad, defensively) for
// surface output.
inline std::vector<int> strip_specials(const std::vector<int>& ids) {
  std::vector<int> out;
  for (int id : ids) {
    if (id == kEosId) break;
    if (id == kPadId) break;
    if (id == kBosId) continue;
    out.push_back(id);
  }
  return out;
}

}  // namespace nmt
