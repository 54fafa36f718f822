#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "nmt/model.hpp"

// Checkpoint file: a plain-text manifest block (key=value lines), then one
// record per tensor: `name ndim dims...\n` followed by the row-major
// little-endian fp32 payload. Loading then saving reproduces the bytes.

namespace nmt {

inline uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hex64(uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = digits[v & 0xF];
    v >>= 4;
  }
  return s;
}

struct CheckpointManifest {
  int format_version = 1;
  int64_t step = 0;
  int64_t epoch = 0;
  std::string config;  // resolved run configuration, single line

  std::string digest() const { return hex64(fnv1a64(config)); }
};

struct RawTensor {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::vector<float> data;
};

struct RawCheckpoint {
  CheckpointManifest manifest;
  std::vector<RawTensor> tensors;
};

namespace detail {

inline void write_manifest(std::ostream& out, const CheckpointManifest& m,
                           size_t tensor_count) {
  if (m.config.find('\n') != std::string::npos)
    throw Error("checkpoint: config echo must be a single line");
  out << "format_version=" << m.format_version << "\n";
  out << "step=" << m.step << "\n";
  out << "epoch=" << m.epoch << "\n";
  out << "config_digest=" << m.digest() << "\n";
  out << "config=" << m.config << "\n";
  out << "tensors=" << tensor_count << "\n";
}

inline std::string manifest_value(std::istream& in, const std::string& key,
                                  const std::string& path) {
  std::string line;
  if (!std::getline(in, line))
    throw Error("checkpoint " + path + ": truncated manifest");
  const auto eq = line.find('=');
  if (eq == std::string::npos || line.substr(0, eq) != key)
    throw Error("checkpoint " + path + ": expected '" + key + "=', got '" +
                line + "'");
  return line.substr(eq + 1);
}

}  // namespace detail

inline void save_raw_checkpoint(const std::string& path, const RawCheckpoint& ck) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("checkpoint: cannot write " + path);
  detail::write_manifest(out, ck.manifest, ck.tensors.size());
  for (const auto& t : ck.tensors) {
    out << t.name << " 2 " << t.rows << " " << t.cols << "\n";
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  }
  if (!out) throw Error("checkpoint: write failed for " + path);
}

inline RawCheckpoint load_raw_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("checkpoint: cannot read " + path);
  RawCheckpoint ck;
  ck.manifest.format_version =
      std::stoi(detail::manifest_value(in, "format_version", path));
  if (ck.manifest.format_version != 1)
    throw Error("checkpoint " + path + ": unsupported format_version");
  ck.manifest.step = std::stoll(detail::manifest_value(in, "step", path));
  ck.manifest.epoch = std::stoll(detail::manifest_value(in, "epoch", path));
  const std::string digest = detail::manifest_value(in, "config_digest", path);
  ck.manifest.config = detail::manifest_value(in, "config", path);
  if (digest != ck.manifest.digest())
    throw Error("checkpoint " + path + ": config digest mismatch");
  const size_t count = std::stoull(detail::manifest_value(in, "tensors", path));
  ck.tensors.reserve(count);
  for (size_t i = 0; i < count; ++i) {
    std::string header;
    if (!std::getline(in, header))
      throw Error("checkpoint " + path + ": truncated tensor table");
    std::istringstream hs(header);
    RawTensor t;
    int ndim = 0;
    hs >> t.name >> ndim;
    if (!hs || ndim != 2)
      throw Error("checkpoint " + path + ": bad tensor header '" + header + "'");
    hs >> t.rows >> t.cols;
    if (!hs || t.rows <= 0 || t.cols <= 0)
      throw Error("checkpoint " + path + ": bad dims in '" + header + "'");
    t.data.resize(static_cast<size_t>(t.rows) * t.cols);
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    if (!in)
      throw Error("checkpoint " + path + ": truncated payload for " + t.name);
    ck.tensors.push_back(std::move(t));
  }
  return ck;
}

template <class T>
void save_checkpoint(const std::string& path, const ModelParams<T>& params,
                     const CheckpointManifest& manifest) {
  RawCheckpoint ck;
  ck.manifest = manifest;
  ck.tensors.reserve(params.named.size());
  for (const auto& [name, t] : params.named) {
    RawTensor rt;
    rt.name = name;
    rt.rows = t.rows();
    rt.cols = t.cols();
    rt.data.reserve(t.size());
    for (T v : t.values()) rt.data.push_back(static_cast<float>(v));
    ck.tensors.push_back(std::move(rt));
  }
  save_raw_checkpoint(path, ck);
}

template <class T>
CheckpointManifest load_checkpoint(const std::string& path,
                                   ModelParams<T>& params) {
  RawCheckpoint ck = load_raw_checkpoint(path);
  if (ck.tensors.size() != params.named.size())
    throw Error("checkpoint " + path + ": holds " +
                std::to_string(ck.tensors.size()) + " tensors, model expects " +
                std::to_string(params.named.size()));
  size_t idx = 0;
  for (auto& [name, t] : params.named) {
    const RawTensor& rt = ck.tensors[idx++];
    if (rt.name != name)
      throw Error("checkpoint " + path + ": tensor '" + rt.name +
                  "' where '" + name + "' expected");
    if (rt.rows != t.rows() || rt.cols != t.cols())
      throw Error("checkpoint " + path + ": shape mismatch for '" + name + "'");
    auto vals = t.values_mut();
    for (size_t i = 0; i < vals.size(); ++i) vals[i] = static_cast<T>(rt.data[i]);
  }
  return ck.manifest;
}

// Element-wise arithmetic mean of every parameter across checkpoints.
// Accumulates in double so averaging identical inputs is exact.
inline RawCheckpoint average_checkpoints(const std::vector<std::string>& paths) {
  if (paths.empty()) throw Error("average: no checkpoints given");
  RawCheckpoint first = load_raw_checkpoint(paths.front());
  std::vector<std::vector<double>> acc(first.tensors.size());
  for (size_t i = 0; i < first.tensors.size(); ++i)
    acc[i].assign(first.tensors[i].data.begin(), first.tensors[i].data.end());

  int64_t max_step = first.manifest.step;
  int64_t max_epoch = first.manifest.epoch;
  for (size_t p = 1; p < paths.size(); ++p) {
    RawCheckpoint ck = load_raw_checkpoint(paths[p]);
    if (ck.manifest.digest() != first.manifest.digest())
      throw Error("average: " + paths[p] + " was written with a different config");
    if (ck.tensors.size() != first.tensors.size())
      throw Error("average: " + paths[p] + " holds a different tensor set");
    for (size_t i = 0; i < ck.tensors.size(); ++i) {
      const RawTensor& t = ck.tensors[i];
      const RawTensor& ref = first.tensors[i];
      if (t.name != ref.name || t.rows != ref.rows || t.cols != ref.cols)
        throw Error("average: parameter '" + t.name + "' in " + paths[p] +
                    " diverges from '" + ref.name + "' (" +
                    std::to_string(ref.rows) + "x" + std::to_string(ref.cols) +
                    ")");
      for (size_t j = 0; j < t.data.size(); ++j) acc[i][j] += t.data[j];
    }
    max_step = std::max(max_step, ck.manifest.step);
    max_epoch = std::max(max_epoch, ck.manifest.epoch);
  }
  const double inv = 1.0 / static_cast<double>(paths.size());
  RawCheckpoint out = std::move(first);
  out.manifest.step = max_step;
  out.manifest.epoch = max_epoch;
  for (size_t i = 0; i < out.tensors.size(); ++i)
    for (size_t j = 0; j < out.tensors[i].data.size(); ++j)
      out.tensors[i].data[j] = static_cast<float>(acc[i][j] * inv);
  return out;
}

}  // namespace nmt
