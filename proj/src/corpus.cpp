#include "nmt/corpus.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "nmt/utf8.hpp"

namespace nmt {

namespace {
bool blank(const std::string& s) {
  for (char c : s)
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  return true;
}
}  // namespace

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("corpus: cannot read " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("corpus: cannot write " + path);
  for (const auto& l : lines) out << l << "\n";
  if (!out) throw Error("corpus: write failed for " + path);
}

ParallelCorpus load_parallel(const std::string& src_path,
                             const std::string& tgt_path) {
  auto src = read_lines(src_path);
  auto tgt = read_lines(tgt_path);
  if (src.size() != tgt.size())
    throw Error("corpus: " + src_path + " has " + std::to_string(src.size()) +
                " lines but " + tgt_path + " has " + std::to_string(tgt.size()));
  ParallelCorpus c;
  for (size_t i = 0; i < src.size(); ++i) {
    if (blank(src[i]) || blank(tgt[i])) continue;
    c.src.push_back(src[i]);
    c.tgt.push_back(tgt[i]);
  }
  return c;
}

namespace {

size_t side_len(const std::string& line, bool raw) {
  if (raw) return utf8_chars(line).size();
  std::istringstream ss(line);
  std::string tok;
  size_t n = 0;
  while (ss >> tok) ++n;
  return n;
}

void side_vocab(const std::string& line, bool raw, std::set<std::string>& vocab) {
  if (raw) {
    for (auto& c : utf8_chars(line)) vocab.insert(c);
  } else {
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) vocab.insert(tok);
  }
}

}  // namespace

CorpusStats corpus_stats(const ParallelCorpus& corpus, bool src_raw,
                         bool tgt_raw) {
  CorpusStats stats;
  stats.examples = corpus.size();
  std::set<std::string> sv, tv;
  size_t src_total = 0, tgt_total = 0;
  for (size_t i = 0; i < corpus.size(); ++i) {
    src_total += side_len(corpus.src[i], src_raw);
    tgt_total += side_len(corpus.tgt[i], tgt_raw);
    side_vocab(corpus.src[i], src_raw, sv);
    side_vocab(corpus.tgt[i], tgt_raw, tv);
  }
  stats.src_vocab = sv.size();
  stats.tgt_vocab = tv.size();
  if (stats.examples) {
    stats.src_avg_len = static_cast<double>(src_total) / stats.examples;
    stats.tgt_avg_len = static_cast<double>(tgt_total) / stats.examples;
  }
  return stats;
}

}  // namespace nmt
