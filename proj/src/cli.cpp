#include "nmt/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "nmt/beam.hpp"
#include "nmt/bleu.hpp"
#include "nmt/bpe.hpp"
#include "nmt/checkpoint.hpp"
#include "nmt/config.hpp"
#include "nmt/corpus.hpp"
#include "nmt/train.hpp"
#include "nmt/vocab.hpp"

namespace nmt::cli {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_tokens(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> toks;
  std::string t;
  while (ss >> t) toks.push_back(t);
  return toks;
}

WordMode parse_mode(const std::string& mode) {
  if (mode == "whitespace") return WordMode::whitespace;
  if (mode == "raw" || mode == "raw_sentence") return WordMode::raw_sentence;
  throw Error("unknown BPE mode '" + mode + "' (whitespace|raw)");
}

EncodedCorpus encode_corpus(const ParallelCorpus& corpus, const Vocab& src_vocab,
                            const Vocab& tgt_vocab) {
  EncodedCorpus out;
  out.src.reserve(corpus.size());
  out.tgt.reserve(corpus.size());
  for (size_t i = 0; i < corpus.size(); ++i) {
    auto s = src_vocab.encode(split_tokens(corpus.src[i]));
    s.push_back(Vocab::kEos);
    std::vector<int> t{Vocab::kBos};
    for (int id : tgt_vocab.encode(split_tokens(corpus.tgt[i]))) t.push_back(id);
    t.push_back(Vocab::kEos);
    out.src.push_back(std::move(s));
    out.tgt.push_back(std::move(t));
  }
  return out;
}

int cmd_learn_bpe(const std::string& input, int ops, const std::string& mode,
                  const std::string& output) {
  auto lines = read_lines(input);
  auto model = learn_bpe(lines, ops, parse_mode(mode));
  model.save(output);
  std::cout << "learned " << model.merges.size() << " merges from " << input
            << " -> " << output << "\n";
  return 0;
}

int cmd_apply_bpe(const std::string& model_path, const std::string& input,
                  const std::string& output) {
  auto model = BpeModel::load(model_path);
  auto lines = read_lines(input);
  std::vector<std::string> out;
  out.reserve(lines.size());
  for (const auto& line : lines) {
    auto toks = apply_bpe(line, model);
    std::string joined;
    for (size_t i = 0; i < toks.size(); ++i) {
      if (i) joined += ' ';
      joined += toks[i];
    }
    out.push_back(std::move(joined));
  }
  write_lines(output, out);
  return 0;
}

int cmd_train(const std::string& config_path,
              const std::vector<std::string>& overrides, int64_t seed_override) {
  RunConfig cfg = load_config(config_path, overrides);
  if (seed_override >= 0) {
    cfg.seed = static_cast<uint64_t>(seed_override);
    cfg.train.seed = cfg.seed;
  }
  if (cfg.data.train_src.empty() || cfg.data.train_tgt.empty())
    throw Error("config: data.train_src and data.train_tgt are required");
  auto train_corpus = load_parallel(cfg.data.train_src, cfg.data.train_tgt);
  ParallelCorpus dev_corpus;
  if (!cfg.data.dev_src.empty())
    dev_corpus = load_parallel(cfg.data.dev_src, cfg.data.dev_tgt);
  else
    dev_corpus = train_corpus;  // fall back to train for progress reporting

  std::vector<std::vector<std::string>> src_tokens, tgt_tokens;
  for (const auto& l : train_corpus.src) src_tokens.push_back(split_tokens(l));
  for (const auto& l : train_corpus.tgt) tgt_tokens.push_back(split_tokens(l));
  Vocab src_vocab = Vocab::build(src_tokens);
  Vocab tgt_vocab = Vocab::build(tgt_tokens);
  cfg.model.src_vocab_size = src_vocab.size();
  cfg.model.tgt_vocab_size = tgt_vocab.size();
  cfg.model.validate();

  fs::create_directories(cfg.out_dir);
  src_vocab.save((fs::path(cfg.out_dir) / "src.vocab").string());
  tgt_vocab.save((fs::path(cfg.out_dir) / "tgt.vocab").string());

  const std::string echo = cfg.to_json();
  {
    std::ofstream cfg_out(fs::path(cfg.out_dir) / "config.json");
    cfg_out << echo << "\n";
  }

  auto train_ids = encode_corpus(train_corpus, src_vocab, tgt_vocab);
  auto dev_ids = encode_corpus(dev_corpus, src_vocab, tgt_vocab);

  auto params = ModelParams<float>::init(cfg.model, cfg.seed);
  auto result = train_loop(params, cfg.model, cfg.train, train_ids, dev_ids,
                           cfg.out_dir, echo, std::cout);
  std::cout << "finished after " << result.steps << " steps, "
            << result.checkpoints.size() << " checkpoints in " << cfg.out_dir
            << "\n";
  return 0;
}

int cmd_translate(const std::string& checkpoint, const std::string& src_path,
                  const std::string& output, std::string src_vocab_path,
                  std::string tgt_vocab_path, const std::string& bpe_path,
                  int beam_size, int max_len, bool no_length_norm) {
  const fs::path ckpt_dir = fs::path(checkpoint).parent_path();
  if (src_vocab_path.empty()) src_vocab_path = (ckpt_dir / "src.vocab").string();
  if (tgt_vocab_path.empty()) tgt_vocab_path = (ckpt_dir / "tgt.vocab").string();

  RawCheckpoint raw = load_raw_checkpoint(checkpoint);
  RunConfig cfg = parse_config_text(raw.manifest.config, {}, checkpoint);
  Vocab src_vocab = Vocab::load(src_vocab_path);
  Vocab tgt_vocab = Vocab::load(tgt_vocab_path);
  if (cfg.model.src_vocab_size != src_vocab.size() ||
      cfg.model.tgt_vocab_size != tgt_vocab.size())
    throw Error("translate: vocabulary files do not match the checkpoint config");

  auto params = ModelParams<float>::init(cfg.model, 0);
  load_checkpoint(checkpoint, params);

  BpeModel bpe;
  const bool use_bpe = !bpe_path.empty();
  if (use_bpe) bpe = BpeModel::load(bpe_path);

  BeamConfig bc;
  bc.beam_size = beam_size;
  bc.max_len = max_len > 0 ? max_len : cfg.model.max_len;
  bc.length_norm = !no_length_norm;

  auto lines = read_lines(src_path);
  std::vector<std::string> out;
  out.reserve(lines.size());
  for (const auto& line : lines) {
    const auto toks = use_bpe ? apply_bpe(line, bpe) : split_tokens(line);
    auto ids = src_vocab.encode(toks);
    ids.push_back(Vocab::kEos);
    auto gen = strip_specials(beam_search(params, cfg.model, ids, bc));
    std::vector<std::string> pieces;
    pieces.reserve(gen.size());
    for (int id : gen) pieces.push_back(tgt_vocab.symbol(id));
    out.push_back(undo_bpe(pieces));
  }
  if (output.empty() || output == "-") {
    for (const auto& l : out) std::cout << l << "\n";
  } else {
    write_lines(output, out);
  }
  return 0;
}

int cmd_score(const std::string& hyp_path, const std::string& ref_path,
              const std::string& tok, std::string src_lang,
              std::string tgt_lang, const std::string& sig_version) {
  BleuTok bt;
  if (tok == "zh")
    bt = BleuTok::tok_zh;
  else if (tok == "13a")
    bt = BleuTok::tok_13a;
  else
    throw Error("score: unknown tokenizer '" + tok + "' (13a|zh)");
  // Language defaults mirror the two supported directions.
  if (src_lang.empty()) src_lang = bt == BleuTok::tok_zh ? "vi" : "zh";
  if (tgt_lang.empty()) tgt_lang = bt == BleuTok::tok_zh ? "zh" : "vi";

  auto hyps = read_lines(hyp_path);
  auto refs = read_lines(ref_path);
  if (hyps.size() != refs.size())
    throw Error("score: " + std::to_string(hyps.size()) + " hypotheses vs " +
                std::to_string(refs.size()) + " references");
  auto result = corpus_bleu(hyps, refs, bt, src_lang, tgt_lang,
                            sig_version.empty() ? kScorerVersion : sig_version);
  std::cout << result.report();
  return 0;
}

int cmd_average(std::vector<std::string> inputs, const std::string& dir,
                int last, const std::string& output) {
  if (!dir.empty()) {
    std::vector<std::string> found;
    for (const auto& e : fs::directory_iterator(dir)) {
      const std::string name = e.path().filename().string();
      if (name.rfind("checkpoint_", 0) == 0 && name.ends_with(".ckpt"))
        found.push_back(e.path().string());
    }
    std::sort(found.begin(), found.end());
    if (found.empty()) throw Error("average: no checkpoints in " + dir);
    const size_t take = std::min<size_t>(last, found.size());
    inputs.assign(found.end() - take, found.end());
  }
  if (inputs.empty()) throw Error("average: no input checkpoints");
  auto averaged = average_checkpoints(inputs);
  save_raw_checkpoint(output, averaged);
  std::cout << "averaged " << inputs.size() << " checkpoints -> " << output
            << "\n";
  return 0;
}

int cmd_stats(const std::string& src, const std::string& tgt,
              const std::string& src_mode, const std::string& tgt_mode) {
  auto corpus = load_parallel(src, tgt);
  auto stats = corpus_stats(corpus, parse_mode(src_mode) == WordMode::raw_sentence,
                            parse_mode(tgt_mode) == WordMode::raw_sentence);
  std::cout << "examples " << stats.examples << "\n";
  std::cout << "src_vocab " << stats.src_vocab << "\n";
  std::cout << "tgt_vocab " << stats.tgt_vocab << "\n";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", stats.src_avg_len);
  std::cout << "src_avg_len " << buf << "\n";
  std::snprintf(buf, sizeof(buf), "%.2f", stats.tgt_avg_len);
  std::cout << "tgt_avg_len " << buf << "\n";
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Phrase-aware neural machine translation toolkit"};
  app.require_subcommand(1);

  // learn-bpe
  auto* learn = app.add_subcommand("learn-bpe", "Learn BPE merges from a corpus");
  std::string lb_input, lb_output, lb_mode = "whitespace";
  int lb_ops = 4000;
  learn->add_option("--input", lb_input, "Corpus file")->required();
  learn->add_option("--output", lb_output, "Merge file to write")->required();
  learn->add_option("--ops", lb_ops, "Number of merge operations");
  learn->add_option("--mode", lb_mode, "whitespace|raw");

  // apply-bpe
  auto* apply = app.add_subcommand("apply-bpe", "Apply learned merges to text");
  std::string ab_model, ab_input, ab_output;
  apply->add_option("--model", ab_model, "Merge file")->required();
  apply->add_option("--input", ab_input, "Text file")->required();
  apply->add_option("--output", ab_output, "Subtokenized output")->required();

  // train
  auto* train = app.add_subcommand("train", "Train a model from a config file");
  std::string tr_config;
  std::vector<std::string> tr_sets;
  int64_t tr_seed = -1;
  train->add_option("--config", tr_config, "JSON run config")->required();
  train->add_option("--set", tr_sets, "Override config values (key.path=value)");
  train->add_option("--seed", tr_seed, "Override the config seed");

  // translate
  auto* translate = app.add_subcommand("translate", "Translate a source file");
  std::string tl_ckpt, tl_src, tl_out, tl_src_vocab, tl_tgt_vocab, tl_bpe;
  int tl_beam = 4, tl_max_len = 0;
  bool tl_no_norm = false;
  translate->add_option("--checkpoint", tl_ckpt, "Checkpoint file")->required();
  translate->add_option("--src", tl_src, "Source text file")->required();
  translate->add_option("--output", tl_out, "Output file ('-' for stdout)");
  translate->add_option("--src-vocab", tl_src_vocab, "Source vocab (default: beside checkpoint)");
  translate->add_option("--tgt-vocab", tl_tgt_vocab, "Target vocab (default: beside checkpoint)");
  translate->add_option("--bpe", tl_bpe, "Apply this BPE model to raw input");
  translate->add_option("--beam", tl_beam, "Beam size");
  translate->add_option("--max-len", tl_max_len, "Decoding length cap");
  translate->add_flag("--no-length-norm", tl_no_norm, "Rank by raw log-probability");

  // score
  auto* score = app.add_subcommand("score", "BLEU-score a hypothesis file");
  std::string sc_hyp, sc_ref, sc_tok = "13a", sc_src_lang, sc_tgt_lang, sc_version;
  score->add_option("--hyp", sc_hyp, "Hypothesis file")->required();
  score->add_option("--ref", sc_ref, "Reference file")->required();
  score->add_option("--tok", sc_tok, "Tokenizer: 13a|zh");
  score->add_option("--src-lang", sc_src_lang, "Signature source language");
  score->add_option("--tgt-lang", sc_tgt_lang, "Signature target language");
  score->add_option("--sig-version", sc_version, "Signature version field");

  // average
  auto* average = app.add_subcommand("average", "Average checkpoints");
  std::vector<std::string> av_inputs;
  std::string av_dir, av_output;
  int av_last = 5;
  average->add_option("--inputs", av_inputs, "Checkpoint files");
  average->add_option("--dir", av_dir, "Take the newest checkpoints from here");
  average->add_option("--last", av_last, "How many newest checkpoints");
  average->add_option("--output", av_output, "Averaged checkpoint")->required();

  // stats
  auto* stats = app.add_subcommand("stats", "Parallel corpus statistics");
  std::string st_src, st_tgt, st_src_mode = "whitespace", st_tgt_mode = "whitespace";
  stats->add_option("--src", st_src, "Source file")->required();
  stats->add_option("--tgt", st_tgt, "Target file")->required();
  stats->add_option("--src-mode", st_src_mode, "whitespace|raw");
  stats->add_option("--tgt-mode", st_tgt_mode, "whitespace|raw");

  std::vector<const char*> argv;
  argv.push_back("nmt");
  for (const auto& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n" << app.help() << "\n";
    return 2;
  }

  try {
    if (learn->parsed()) return cmd_learn_bpe(lb_input, lb_ops, lb_mode, lb_output);
    if (apply->parsed()) return cmd_apply_bpe(ab_model, ab_input, ab_output);
    if (train->parsed()) return cmd_train(tr_config, tr_sets, tr_seed);
    if (translate->parsed())
      return cmd_translate(tl_ckpt, tl_src, tl_out, tl_src_vocab, tl_tgt_vocab,
                           tl_bpe, tl_beam, tl_max_len, tl_no_norm);
    if (score->parsed())
      return cmd_score(sc_hyp, sc_ref, sc_tok, sc_src_lang, sc_tgt_lang, sc_version);
    if (average->parsed()) return cmd_average(av_inputs, av_dir, av_last, av_output);
    if (stats->parsed()) return cmd_stats(st_src, st_tgt, st_src_mode, st_tgt_mode);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace nmt::cli
