#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "nmt/error.hpp"

namespace nmt {

// Line-aligned source/target sentence pairs. Pairs where either side is
// blank are dropped from both sides to keep the alignment.
struct ParallelCorpus {
  std::vector<std::string> src;
  std::vector<std::string> tgt;

  size_t size() const { return src.size(); }
};

ParallelCorpus load_parallel(const std::string& src_path,
                             const std::string& tgt_path);

std::vector<std::string> read_lines(const std::string& path);
void write_lines(const std::string& path, const std::vector<std::string>& lines);

// Table-style corpus statistics: example count, distinct-token counts and
// average lengths per side. Raw (spaceless) sides are measured in code
// points instead of whitespace tokens.
struct CorpusStats {
  size_t examples = 0;
  size_t src_vocab = 0;
  size_t tgt_vocab = 0;
  double src_avg_len = 0.0;
  double tgt_avg_len = 0.0;
};

CorpusStats corpus_stats(const ParallelCorpus& corpus, bool src_raw,
                         bool tgt_raw);

}  // namespace nmt
