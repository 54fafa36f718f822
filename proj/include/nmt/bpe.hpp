#pragma once

#include <string>
#include <utility>
#include <vector>

#include "nmt/error.hpp"

namespace nmt {

enum class WordMode { whitespace, raw_sentence };

// Byte-pair encoding model: an ordered list of merges learned greedily by
// pair frequency. In raw_sentence mode each whole line is one word segment
// (the spaceless-language path); in whitespace mode lines are split into
// words first. Words carry an end-of-word marker on their final character.
struct BpeModel {
  std::vector<std::pair<std::string, std::string>> merges;
  int num_ops = 0;
  WordMode word_mode = WordMode::whitespace;

  void save(const std::string& path) const;
  static BpeModel load(const std::string& path);
};

inline constexpr const char* kEndOfWord = "</w>";
inline constexpr const char* kContinuation = "@@";

// Learns up to num_ops merges. The most frequent adjacent symbol pair wins
// each round; frequency ties go to the lexicographically smaller pair;
// learning stops early once no pair occurs twice.
BpeModel learn_bpe(const std::vector<std::string>& lines, int num_ops,
                   WordMode mode);

// Applies the learned merges in order and emits subtokens; every piece
// except the last of a word gets the "@@" continuation marker. Unseen
// characters pass through as single-character subwords.
std::vector<std::string> apply_bpe(const std::string& sentence,
                                   const BpeModel& model);

// Joins subtokens with spaces, removes every "@@ " and a trailing "@@".
std::string undo_bpe(const std::vector<std::string>& subtokens);

}  // namespace nmt
