#include "nmt/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace nmt {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed,
                    const std::string& where) {
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key))
      throw Error("config: unknown key '" + key + "' at " + where);
}

template <class T>
void read_number(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  if (!j[key].is_number())
    throw Error("config: " + where + "." + key + " must be a number");
  out = j[key].get<T>();
}

void read_string(const json& j, const char* key, std::string& out,
                 const std::string& where) {
  if (!j.contains(key)) return;
  if (!j[key].is_string())
    throw Error("config: " + where + "." + key + " must be a string");
  out = j[key].get<std::string>();
}

void read_bool(const json& j, const char* key, bool& out, const std::string& where) {
  if (!j.contains(key)) return;
  if (!j[key].is_boolean())
    throw Error("config: " + where + "." + key + " must be a boolean");
  out = j[key].get<bool>();
}

json parse_scalar(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const std::exception&) {
    return json(text);  // bare strings are taken literally
  }
}

void apply_override(json& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw Error("config: --set expects key.path=value, got '" + assignment + "'");
  const std::string path = assignment.substr(0, eq);
  const json value = parse_scalar(assignment.substr(eq + 1));
  json* node = &root;
  std::istringstream ss(path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  if (parts.empty()) throw Error("config: empty --set key");
  for (size_t i = 0; i + 1 < parts.size(); ++i) node = &((*node)[parts[i]]);
  (*node)[parts.back()] = value;
}

}  // namespace

RunConfig parse_config_text(const std::string& text,
                            const std::vector<std::string>& overrides,
                            const std::string& where) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    throw Error("config: malformed JSON in " + where + ": " + e.what());
  }
  if (!j.is_object()) throw Error("config: top level must be an object");
  for (const auto& o : overrides) apply_override(j, o);

  reject_unknown(j, {"model", "train", "data", "out_dir", "seed"}, "top level");

  RunConfig cfg;
  if (j.contains("model")) {
    const json& m = j["model"];
    if (!m.is_object()) throw Error("config: 'model' must be an object");
    reject_unknown(m,
                   {"d_model", "heads", "layers", "ffn_dim", "dropout",
                    "label_smoothing", "gram", "share_lstm_across_heads",
                    "max_len", "src_vocab_size", "tgt_vocab_size"},
                   "model");
    read_number(m, "d_model", cfg.model.d_model, "model");
    read_number(m, "heads", cfg.model.heads, "model");
    read_number(m, "layers", cfg.model.layers, "model");
    read_number(m, "ffn_dim", cfg.model.ffn_dim, "model");
    read_number(m, "dropout", cfg.model.dropout, "model");
    read_number(m, "label_smoothing", cfg.model.label_smoothing, "model");
    read_number(m, "max_len", cfg.model.max_len, "model");
    read_number(m, "src_vocab_size", cfg.model.src_vocab_size, "model");
    read_number(m, "tgt_vocab_size", cfg.model.tgt_vocab_size, "model");
    read_bool(m, "share_lstm_across_heads", cfg.model.share_lstm_across_heads,
              "model");
    read_string(m, "gram", cfg.gram_text, "model");
  }
  cfg.model.gram = GramConfig::parse(cfg.gram_text, cfg.model.heads);

  if (j.contains("train")) {
    const json& t = j["train"];
    if (!t.is_object()) throw Error("config: 'train' must be an object");
    reject_unknown(t,
                   {"peak_lr", "warmup_steps", "max_tokens_per_batch",
                    "max_epochs", "checkpoint_every_steps", "keep_last",
                    "adam_beta1", "adam_beta2", "adam_eps", "grad_clip",
                    "max_steps", "eval_every_steps", "stop_at_accuracy"},
                   "train");
    read_number(t, "peak_lr", cfg.train.peak_lr, "train");
    read_number(t, "warmup_steps", cfg.train.warmup_steps, "train");
    read_number(t, "max_tokens_per_batch", cfg.train.max_tokens_per_batch, "train");
    read_number(t, "max_epochs", cfg.train.max_epochs, "train");
    read_number(t, "checkpoint_every_steps", cfg.train.checkpoint_every_steps,
                "train");
    read_number(t, "keep_last", cfg.train.keep_last, "train");
    read_number(t, "adam_beta1", cfg.train.adam_beta1, "train");
    read_number(t, "adam_beta2", cfg.train.adam_beta2, "train");
    read_number(t, "adam_eps", cfg.train.adam_eps, "train");
    read_number(t, "grad_clip", cfg.train.grad_clip, "train");
    read_number(t, "max_steps", cfg.train.max_steps, "train");
    read_number(t, "eval_every_steps", cfg.train.eval_every_steps, "train");
    read_number(t, "stop_at_accuracy", cfg.train.stop_at_accuracy, "train");
  }
  if (j.contains("data")) {
    const json& d = j["data"];
    if (!d.is_object()) throw Error("config: 'data' must be an object");
    reject_unknown(d, {"train_src", "train_tgt", "dev_src", "dev_tgt"}, "data");
    read_string(d, "train_src", cfg.data.train_src, "data");
    read_string(d, "train_tgt", cfg.data.train_tgt, "data");
    read_string(d, "dev_src", cfg.data.dev_src, "data");
    read_string(d, "dev_tgt", cfg.data.dev_tgt, "data");
  }
  if (j.contains("out_dir")) read_string(j, "out_dir", cfg.out_dir, "top level");
  if (j.contains("seed")) {
    if (!j["seed"].is_number())
      throw Error("config: seed must be a number");
    cfg.seed = j["seed"].get<uint64_t>();
  }
  cfg.train.seed = cfg.seed;
  return cfg;
}

RunConfig load_config(const std::string& path,
                      const std::vector<std::string>& overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("config: cannot read " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), overrides, path);
}

std::string RunConfig::to_json() const {
  json j;
  j["model"] = {{"d_model", model.d_model},
                {"heads", model.heads},
                {"layers", model.layers},
                {"ffn_dim", model.ffn_dim},
                {"dropout", model.dropout},
                {"label_smoothing", model.label_smoothing},
                {"gram", model.gram.to_string()},
                {"share_lstm_across_heads", model.share_lstm_across_heads},
                {"max_len", model.max_len},
                {"src_vocab_size", model.src_vocab_size},
                {"tgt_vocab_size", model.tgt_vocab_size}};
  j["train"] = {{"peak_lr", train.peak_lr},
                {"warmup_steps", train.warmup_steps},
                {"max_tokens_per_batch", train.max_tokens_per_batch},
                {"max_epochs", train.max_epochs},
                {"checkpoint_every_steps", train.checkpoint_every_steps},
                {"keep_last", train.keep_last},
                {"adam_beta1", train.adam_beta1},
                {"adam_beta2", train.adam_beta2},
                {"adam_eps", train.adam_eps},
                {"grad_clip", train.grad_clip},
                {"max_steps", train.max_steps},
                {"eval_every_steps", train.eval_every_steps},
                {"stop_at_accuracy", train.stop_at_accuracy}};
  j["data"] = {{"train_src", data.train_src},
               {"train_tgt", data.train_tgt},
               {"dev_src", data.dev_src},
               {"dev_tgt", data.dev_tgt}};
  j["out_dir"] = out_dir;
  j["seed"] = seed;
  return j.dump();
}

}  // namespace nmt
