#include "nmt/bleu.hpp"

#include <cmath>
#include <cstdio>
#include <map>

#include "nmt/error.hpp"

namespace nmt {

namespace {

// n-grams as separator-joined keys; corpus scale makes this cheap.
std::map<std::string, int64_t> ngram_counts(const std::vector<std::string>& toks,
                                            int n) {
  std::map<std::string, int64_t> counts;
  if (static_cast<int>(toks.size()) < n) return counts;
  for (size_t i = 0; i + n <= toks.size(); ++i) {
    std::string key;
    for (int j = 0; j < n; ++j) {
      if (j) key.push_back('\x1f');
      key += toks[i + j];
    }
    counts[key] += 1;
  }
  return counts;
}

std::string make_signature(const std::string& src, const std::string& tgt,
                           BleuTok tok, const std::string& version,
                           bool spaced) {
  // The spaced rendering keeps "BLEU+case.mixed" joined, as printed in the
  // published evaluation signatures.
  const std::string sep = spaced ? " +" : "+";
  return "BLEU+case.mixed" + sep + "lang." + src + "-" + tgt + sep +
         "numrefs.1" + sep + "smooth.exp" + sep + "tok." +
         bleu_tok_name(tok) + sep + "version." + version;
}

}  // namespace

BleuResult corpus_bleu(const std::vector<std::string>& hyps,
                       const std::vector<std::string>& refs, BleuTok tok,
                       const std::string& src_lang, const std::string& tgt_lang,
                       const std::string& version) {
  if (hyps.empty()) throw Error("bleu: empty corpus");
  if (hyps.size() != refs.size())
    throw Error("bleu: " + std::to_string(hyps.size()) + " hypotheses vs " +
                std::to_string(refs.size()) + " references");

  auto tokenize = [&](const std::string& s) {
    return tok == BleuTok::tok_zh ? tokenize_zh(s) : tokenize_13a(s);
  };

  std::array<int64_t, 4> correct{}, total{};
  int64_t hyp_len = 0, ref_len = 0;
  for (size_t i = 0; i < hyps.size(); ++i) {
    const auto h = tokenize(hyps[i]);
    const auto r = tokenize(refs[i]);
    hyp_len += static_cast<int64_t>(h.size());
    ref_len += static_cast<int64_t>(r.size());
    for (int n = 1; n <= 4; ++n) {
      const auto hc = ngram_counts(h, n);
      if (hc.empty()) continue;
      const auto rc = ngram_counts(r, n);
      for (const auto& [gram, count] : hc) {
        total[n - 1] += count;
        auto it = rc.find(gram);
        if (it != rc.end()) correct[n - 1] += std::min(count, it->second);
      }
    }
  }

  BleuResult res;
  res.hyp_len = hyp_len;
  res.ref_len = ref_len;
  res.signature = make_signature(src_lang, tgt_lang, tok, version, false);
  res.signature_spaced = make_signature(src_lang, tgt_lang, tok, version, true);

  if (hyp_len == 0) {
    res.brevity_penalty = 0.0;
    res.score = 0.0;
    return res;
  }
  res.brevity_penalty =
      hyp_len >= ref_len
          ? 1.0
          : std::exp(1.0 - static_cast<double>(ref_len) /
                               static_cast<double>(hyp_len));

  double log_sum = 0.0;
  double divisor = 1.0;
  for (int n = 0; n < 4; ++n) {
    double p;
    if (correct[n] == 0) {
      divisor *= 2.0;
      // An order with no n-grams at all (every hypothesis shorter than n)
      // degenerates to 1/divisor.
      p = total[n] > 0 ? 1.0 / (divisor * static_cast<double>(total[n]))
                       : 1.0 / divisor;
    } else {
      p = static_cast<double>(correct[n]) / static_cast<double>(total[n]);
    }
    res.precisions[n] = 100.0 * p;
    log_sum += std::log(p);
  }
  res.score = 100.0 * res.brevity_penalty * std::exp(log_sum / 4.0);
  return res;
}

std::string BleuResult::report() const {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%.2f %s\n", score, signature.c_str());
  std::string out = buf;
  const double ratio =
      ref_len ? static_cast<double>(hyp_len) / static_cast<double>(ref_len) : 0.0;
  std::snprintf(buf, sizeof(buf),
                "P1=%.1f P2=%.1f P3=%.1f P4=%.1f BP=%.3f ratio=%.3f "
                "hyp_len=%lld ref_len=%lld\n",
                precisions[0], precisions[1], precisions[2], precisions[3],
                brevity_penalty, ratio, static_cast<long long>(hyp_len),
                static_cast<long long>(ref_len));
  out += buf;
  return out;
}

}  // namespace nmt
