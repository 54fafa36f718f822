#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "nmt/error.hpp"

namespace nmt {

// Subword vocabulary with fixed special ids, then corpus symbols by
// descending frequency (ties lexicographic). Symbol/id mapping is bijective
// and stable across rebuilds from the same corpus.
class Vocab {
public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;

  static Vocab build(const std::vector<std::vector<std::string>>& token_lines);

  int id(const std::string& symbol) const {
    auto it = index_.find(symbol);
    return it == index_.end() ? kUnk : it->second;
  }
  const std::string& symbol(int id) const {
    if (id < 0 || id >= static_cast<int>(symbols_.size()))
      throw Error("vocab: id " + std::to_string(id) + " out of range");
    return symbols_[id];
  }
  int size() const { return static_cast<int>(symbols_.size()); }

  std::vector<int> encode(const std::vector<std::string>& tokens) const {
    std::vector<int> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(id(t));
    return out;
  }

  void save(const std::string& path) const;
  static Vocab load(const std::string& path);

private:
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, int> index_;
  void rebuild_index();
};

}  // namespace nmt
