#include "nmt/tokenize.hpp"

#include <regex>
#include <sstream>

#include "nmt/utf8.hpp"

namespace nmt {

namespace {

void replace_all(std::string& s, const std::string& from, const std::string& to) {
  size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
}

bool is_punct_to_pad(char c) {
  // The mteval symbol class: {-~, [-`, space-&, (-+, :-@ and '/'. Digits,
  // period, comma and dash are handled by the follow-up rules.
  return (c >= '{' && c <= '~') || (c >= '[' && c <= '`') ||
         (c >= ' ' && c <= '&') || (c >= '(' && c <= '+') ||
         (c >= ':' && c <= '@') || c == '/';
}

// The language-independent regex block shared by 13a and zh.
std::vector<std::string> regex_tokenize(const std::string& line) {
  std::string s;
  s.reserve(line.size() * 2);
  s.push_back(' ');
  for (char c : line) {
    if (is_punct_to_pad(c) && c != ' ') {
      s.push_back(' ');
      s.push_back(c);
      s.push_back(' ');
    } else {
      s.push_back(c);
    }
  }
  s.push_back(' ');

  static const std::regex period_comma_before("([^0-9])([.,])");
  static const std::regex period_comma_after("([.,])([^0-9])");
  static const std::regex digit_dash("([0-9])(-)");
  s = std::regex_replace(s, period_comma_before, "$1 $2 ");
  s = std::regex_replace(s, period_comma_after, " $1 $2");
  s = std::regex_replace(s, digit_dash, "$1 $2 ");

  std::istringstream ss(s);
  std::vector<std::string> tokens;
  std::string tok;
  while (ss >> tok) tokens.push_back(tok);
  return tokens;
}

}  // namespace

std::vector<std::string> tokenize_13a(const std::string& line) {
  std::string s = line;
  replace_all(s, "<skipped>", "");
  replace_all(s, "-\n", "");
  replace_all(s, "\n", " ");
  if (s.find('&') != std::string::npos) {
    replace_all(s, "&quot;", "\"");
    replace_all(s, "&amp;", "&");
    replace_all(s, "&lt;", "<");
    replace_all(s, "&gt;", ">");
  }
  return regex_tokenize(s);
}

bool is_cjk_char(uint32_t cp) {
  return (cp >= 0x4E00 && cp <= 0x9FFF) ||  // CJK Unified Ideographs
         (cp >= 0x3400 && cp <= 0x4DBF) ||  // Extension A
         (cp >= 0xF900 && cp <= 0xFAFF) ||  // Compatibility Ideographs
         (cp >= 0x3000 && cp <= 0x303F) ||  // CJK punctuation
         (cp >= 0xFF00 && cp <= 0xFFEF);    // Fullwidth / halfwidth forms
}

std::vector<std::string> tokenize_zh(const std::string& line) {
  std::string spaced;
  spaced.reserve(line.size() * 2);
  size_t i = 0;
  while (i < line.size()) {
    const size_t start = i;
    const uint32_t cp = utf8_next(line, i);
    if (is_cjk_char(cp)) {
      spaced.push_back(' ');
      spaced.append(line, start, i - start);
      spaced.push_back(' ');
    } else {
      spaced.append(line, start, i - start);
    }
  }
  return regex_tokenize(spaced);
}

}  // namespace nmt
