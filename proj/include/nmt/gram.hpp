#pragma once

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "nmt/error.hpp"

namespace nmt {

// Per-head assignment of gram sizes for the phrase attention. An empty set
// on a head means that head runs as plain scaled-dot attention. Sets are
// kept sorted ascending; that order fixes the multi-gram concatenation.
struct GramConfig {
  int heads = 0;
  std::vector<std::vector<int>> per_head_grams;

  static GramConfig vanilla(int heads) {
    GramConfig g;
    g.heads = heads;
    g.per_head_grams.assign(heads, {});
    return g;
  }

  // Applies the same gram-size set to every head.
  static GramConfig cross_h(std::vector<int> grams, int heads) {
    normalize(grams);
    GramConfig g;
    g.heads = heads;
    g.per_head_grams.assign(heads, grams);
    return g;
  }

  static GramConfig per_head(std::vector<std::vector<int>> grams) {
    GramConfig g;
    g.heads = static_cast<int>(grams.size());
    for (auto& gs : grams) normalize(gs);
    g.per_head_grams = std::move(grams);
    return g;
  }

  // Textual forms: "cross_h:[2,3]", "per_head:[[2],[3],[],[2,3]]", or a
  // blank / "none" string for all-vanilla heads.
  static GramConfig parse(const std::string& text, int heads) {
    std::string s = text;
    s.erase(std::remove_if(s.begin(), s.end(),
                           [](unsigned char c) { return std::isspace(c); }),
            s.end());
    if (s.empty() || s == "none") return vanilla(heads);
    const auto colon = s.find(':');
    if (colon == std::string::npos)
      throw Error("gram: expected 'cross_h:[...]' or 'per_head:[[...]]', got '" +
                  text + "'");
    const std::string kind = s.substr(0, colon);
    const std::string payload = s.substr(colon + 1);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(payload);
    } catch (const std::exception&) {
      throw Error("gram: malformed list in '" + text + "'");
    }
    if (kind == "cross_h") {
      if (!j.is_array()) throw Error("gram: cross_h payload must be a list");
      std::vector<int> grams;
      for (const auto& v : j) {
        if (!v.is_number_integer()) throw Error("gram: gram sizes must be integers");
        grams.push_back(v.get<int>());
      }
      return cross_h(std::move(grams), heads);
    }
    if (kind == "per_head") {
      if (!j.is_array()) throw Error("gram: per_head payload must be a list of lists");
      std::vector<std::vector<int>> grams;
      for (const auto& hv : j) {
        if (!hv.is_array()) throw Error("gram: per_head payload must be a list of lists");
        std::vector<int> gs;
        for (const auto& v : hv) {
          if (!v.is_number_integer()) throw Error("gram: gram sizes must be integers");
          gs.push_back(v.get<int>());
        }
        grams.push_back(std::move(gs));
      }
      auto g = per_head(std::move(grams));
      if (g.heads != heads)
        throw Error("gram: per_head lists " + std::to_string(g.heads) +
                    " heads but the model has " + std::to_string(heads));
      return g;
    }
    throw Error("gram: unknown form '" + kind + "' (expected cross_h or per_head)");
  }

  std::string to_string() const {
    const bool uniform =
        std::all_of(per_head_grams.begin(), per_head_grams.end(),
                    [&](const auto& g) { return g == per_head_grams.front(); });
    auto list = [](const std::vector<int>& g) {
      std::string s = "[";
      for (size_t i = 0; i < g.size(); ++i)
        s += (i ? "," : "") + std::to_string(g[i]);
      return s + "]";
    };
    if (heads > 0 && uniform) return "cross_h:" + list(per_head_grams.front());
    std::string s = "per_head:[";
    for (int h = 0; h < heads; ++h) s += (h ? "," : "") + list(per_head_grams[h]);
    return s + "]";
  }

  bool all_vanilla() const {
    return std::all_of(per_head_grams.begin(), per_head_grams.end(),
                       [](const auto& g) { return g.empty(); });
  }

  // Gram sizes used by any head (ascending); the shared-LSTM bank is keyed
  // on this union.
  std::vector<int> gram_union() const {
    std::set<int> u;
    for (const auto& g : per_head_grams) u.insert(g.begin(), g.end());
    return {u.begin(), u.end()};
  }

private:
  static void normalize(std::vector<int>& grams) {
    for (int g : grams)
      if (g < 1) throw Error("gram: gram size " + std::to_string(g) + " must be >= 1");
    std::sort(grams.begin(), grams.end());
    const auto last = std::unique(grams.begin(), grams.end());
    if (last != grams.end()) throw Error("gram: duplicate gram size in set");
  }
};

}  // namespace nmt
