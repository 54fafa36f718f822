#pragma once

#include <string>
#include <vector>

#include "nmt/model.hpp"
#include "nmt/train.hpp"

namespace nmt {

// A full run configuration: model + training hyperparameters, data paths
// and the seed, serialized as one JSON document. Unknown keys are rejected;
// the fully resolved form is echoed into every checkpoint manifest.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::string gram_text;  // textual gram form, e.g. "cross_h:[2,3]"
  struct Data {
    std::string train_src, train_tgt, dev_src, dev_tgt;
  } data;
  std::string out_dir = "run";
  uint64_t seed = 1;

  std::string to_json() const;
};

// Parses, validates and defaults a config document. `overrides` are
// `key.path=value` assignments applied before validation.
RunConfig load_config(const std::string& path,
                      const std::vector<std::string>& overrides = {});
RunConfig parse_config_text(const std::string& text,
                            const std::vector<std::string>& overrides = {},
                            const std::string& where = "config");

}  // namespace nmt
