#include "nmt/bpe.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include "nmt/utf8.hpp"

namespace nmt {

namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' ||
         c == '\v';
}

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (is_space(c)) {
      if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::string strip(const std::string& line) {
  size_t b = 0, e = line.size();
  while (b < e && is_space(line[b])) ++b;
  while (e > b && is_space(line[e - 1])) --e;
  return line.substr(b, e - b);
}

// One word segment per mode: whitespace-separated words, or the whole
// stripped line.
std::vector<std::string> word_units(const std::string& line, WordMode mode) {
  if (mode == WordMode::whitespace) return split_ws(line);
  const std::string s = strip(line);
  if (s.empty()) return {};
  return {s};
}

// Initial symbol sequence: code points, end-of-word marker appended to the
// final one.
std::vector<std::string> initial_symbols(const std::string& word) {
  auto syms = utf8_chars(word);
  if (!syms.empty()) syms.back() += kEndOfWord;
  return syms;
}

bool contains_space(const std::string& sym) {
  return std::any_of(sym.begin(), sym.end(), [](char c) { return is_space(c); });
}

void merge_in_place(std::vector<std::string>& syms, const std::string& left,
                    const std::string& right) {
  size_t w = 0;
  for (size_t r = 0; r < syms.size();) {
    if (r + 1 < syms.size() && syms[r] == left && syms[r + 1] == right) {
      syms[w++] = left + right;
      r += 2;
    } else {
      if (w != r) syms[w] = std::move(syms[r]);
      ++w;
      ++r;
    }
  }
  syms.resize(w);
}

struct PairHash {
  size_t operator()(const std::pair<std::string, std::string>& p) const {
    return std::hash<std::string>()(p.first) * 1000003u ^
           std::hash<std::string>()(p.second);
  }
};

}  // namespace

BpeModel learn_bpe(const std::vector<std::string>& lines, int num_ops,
                   WordMode mode) {
  if (lines.empty()) throw Error("learn_bpe: empty corpus");
  if (num_ops < 0) throw Error("learn_bpe: negative operation count");

  // Collapse to word types with frequencies.
  std::map<std::string, int64_t> word_freq;
  for (const auto& line : lines)
    for (auto& w : word_units(line, mode)) word_freq[w] += 1;

  std::vector<std::pair<std::vector<std::string>, int64_t>> types;
  types.reserve(word_freq.size());
  for (const auto& [word, freq] : word_freq)
    types.push_back({initial_symbols(word), freq});

  BpeModel model;
  model.num_ops = num_ops;
  model.word_mode = mode;
  using Pair = std::pair<std::string, std::string>;
  for (int op = 0; op < num_ops; ++op) {
    std::unordered_map<Pair, int64_t, PairHash> counts;
    for (const auto& [syms, freq] : types)
      for (size_t i = 0; i + 1 < syms.size(); ++i) {
        // Merging across whitespace would corrupt the merge-file format.
        if (contains_space(syms[i]) || contains_space(syms[i + 1])) continue;
        counts[{syms[i], syms[i + 1]}] += freq;
      }
    const Pair* best = nullptr;
    int64_t best_count = 1;  // a pair must occur at least twice
    for (const auto& [pair, count] : counts)
      if (count > best_count ||
          (count == best_count && best && pair < *best)) {
        best = &pair;
        best_count = count;
      }
    if (!best) break;
    for (auto& [syms, freq] : types) merge_in_place(syms, best->first, best->second);
    model.merges.push_back(*best);
  }
  return model;
}

std::vector<std::string> apply_bpe(const std::string& sentence,
                                   const BpeModel& model) {
  using Pair = std::pair<std::string, std::string>;
  std::unordered_map<Pair, int, PairHash> rank;
  for (size_t i = 0; i < model.merges.size(); ++i)
    rank.emplace(model.merges[i], static_cast<int>(i));

  std::vector<std::string> out;
  for (const auto& word : word_units(sentence, model.word_mode)) {
    auto syms = initial_symbols(word);
    // Repeatedly apply the earliest-learned merge present in the word.
    while (syms.size() > 1) {
      int best_rank = static_cast<int>(model.merges.size());
      for (size_t i = 0; i + 1 < syms.size(); ++i) {
        auto it = rank.find({syms[i], syms[i + 1]});
        if (it != rank.end() && it->second < best_rank) best_rank = it->second;
      }
      if (best_rank == static_cast<int>(model.merges.size())) break;
      merge_in_place(syms, model.merges[best_rank].first,
                     model.merges[best_rank].second);
    }
    for (size_t i = 0; i < syms.size(); ++i) {
      std::string piece = syms[i];
      if (i + 1 == syms.size()) {
        const size_t mlen = std::string(kEndOfWord).size();
        if (piece.size() >= mlen &&
            piece.compare(piece.size() - mlen, mlen, kEndOfWord) == 0)
          piece.resize(piece.size() - mlen);
      } else {
        piece += kContinuation;
      }
      if (!piece.empty()) out.push_back(std::move(piece));
    }
  }
  return out;
}

std::string undo_bpe(const std::vector<std::string>& subtokens) {
  std::string joined;
  for (size_t i = 0; i < subtokens.size(); ++i) {
    if (i) joined += ' ';
    joined += subtokens[i];
  }
  std::string out;
  out.reserve(joined.size());
  for (size_t i = 0; i < joined.size();) {
    if (joined.compare(i, 3, "@@ ") == 0) {
      i += 3;
    } else {
      out.push_back(joined[i]);
      i += 1;
    }
  }
  if (out.size() >= 2 && out.compare(out.size() - 2, 2, "@@") == 0)
    out.resize(out.size() - 2);
  return out;
}

void BpeModel::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("bpe: cannot write " + path);
  out << "#mode: "
      << (word_mode == WordMode::raw_sentence ? "raw_sentence" : "whitespace")
      << "\n";
  for (const auto& [l, r] : merges) out << l << " " << r << "\n";
  if (!out) throw Error("bpe: write failed for " + path);
}

BpeModel BpeModel::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("bpe: cannot read " + path);
  BpeModel model;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (first) {
      first = false;
      if (line.rfind("#mode:", 0) == 0) {
        const std::string mode = strip(line.substr(6));
        if (mode == "raw_sentence")
          model.word_mode = WordMode::raw_sentence;
        else if (mode == "whitespace")
          model.word_mode = WordMode::whitespace;
        else
          throw Error("bpe " + path + ": unknown mode '" + mode + "'");
        continue;
      }
    }
    if (line.empty()) continue;
    const auto sp = line.find(' ');
    if (sp == std::string::npos || sp + 1 >= line.size())
      throw Error("bpe " + path + ": malformed merge line '" + line + "'");
    model.merges.push_back({line.substr(0, sp), line.substr(sp + 1)});
  }
  model.num_ops = static_cast<int>(model.merges.size());
  return model;
}

}  // namespace nmt
