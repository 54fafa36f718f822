#pragma once

#include <string>
#include <vector>

namespace nmt {

// mteval-v13a tokenization: entity unescaping, newline handling, then
// space-padding of symbol characters, period/comma splits next to
// non-digits and digit-dash splits. Case is preserved.
std::vector<std::string> tokenize_13a(const std::string& line);

// Chinese scoring tokenization: every CJK character (ideographs, CJK
// punctuation, fullwidth forms) is isolated, the remainder goes through the
// 13a symbol rules.
std::vector<std::string> tokenize_zh(const std::string& line);

bool is_cjk_char(uint32_t cp);

}  // namespace nmt
