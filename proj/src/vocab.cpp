#include "nmt/vocab.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>

namespace nmt {

namespace {
const char* kSpecials[] = {"<pad>", "<unk>", "<s>", "</s>"};
bool is_special(const std::string& s) {
  for (const char* sp : kSpecials)
    if (s == sp) return true;
  return false;
}
}  // namespace

Vocab Vocab::build(const std::vector<std::vector<std::string>>& token_lines) {
  if (token_lines.empty()) throw Error("vocab: empty corpus");
  std::map<std::string, int64_t> freq;
  for (const auto& line : token_lines)
    for (const auto& tok : line)
      if (!tok.empty() && !is_special(tok)) freq[tok] += 1;

  std::vector<std::pair<std::string, int64_t>> order(freq.begin(), freq.end());
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocab v;
  for (const char* sp : kSpecials) v.symbols_.push_back(sp);
  for (const auto& [sym, n] : order) v.symbols_.push_back(sym);
  v.rebuild_index();
  return v;
}

void Vocab::rebuild_index() {
  index_.clear();
  for (size_t i = 0; i < symbols_.size(); ++i)
    index_[symbols_[i]] = static_cast<int>(i);
  if (index_.size() != symbols_.size())
    throw Error("vocab: duplicate symbol in vocabulary");
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("vocab: cannot write " + path);
  for (const auto& s : symbols_) out << s << "\n";
  if (!out) throw Error("vocab: write failed for " + path);
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("vocab: cannot read " + path);
  Vocab v;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    v.symbols_.push_back(line);
  }
  if (v.symbols_.size() < 4)
    throw Error("vocab " + path + ": missing special symbols");
  for (int i = 0; i < 4; ++i)
    if (v.symbols_[i] != kSpecials[i])
      throw Error("vocab " + path + ": special slot " + std::to_string(i) +
                  " holds '" + v.symbols_[i] + "'");
  v.rebuild_index();
  return v;
}

}  // namespace nmt
