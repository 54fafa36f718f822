#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "nmt/tokenize.hpp"

namespace nmt {

inline constexpr const char* kScorerVersion = "0.1.0";

enum class BleuTok { tok_13a, tok_zh };

inline const char* bleu_tok_name(BleuTok t) {
  return t == BleuTok::tok_zh ? "zh" : "13a";
}

struct BleuResult {
  double score = 0.0;                      // 0..100
  std::array<double, 4> precisions{};      // percentages
  double brevity_penalty = 0.0;
  int64_t hyp_len = 0;
  int64_t ref_len = 0;
  std::string signature;         // BLEU+case.mixed+lang...+version.x
  std::string signature_spaced;  // fields joined with " +"

  // Two-line report: score + signature, then precisions and lengths.
  std::string report() const;
};

// Corpus BLEU with exponential smoothing over a single reference per
// hypothesis. The smoothing divisor starts at 1 and doubles at every order
// with zero clipped matches; that order scores 1/(divisor * total).
BleuResult corpus_bleu(const std::vector<std::string>& hyps,
                       const std::vector<std::string>& refs, BleuTok tok,
                       const std::string& src_lang, const std::string& tgt_lang,
                       const std::string& version = kScorerVersion);

}  // namespace nmt
