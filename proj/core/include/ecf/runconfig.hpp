#pragma once

#include <string>

#include "ecf/data.hpp"
#include "ecf/model.hpp"
#include "ecf/trainkit.hpp"

namespace ecf {

// Everything a run needs, assembled from a plain-text key=value file. Every
// key has a default; unknown or malformed keys are hard errors. One root
// seed feeds data synthesis, parameter init, and batch shuffling through
// named substreams.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  PhantomSpec phantom;
  int data_count = 10;
  std::string data_manifest = "data/manifest.json";
  std::string out_dir = "out";

  uint64_t seed() const { return train.seed; }
  void set_seed(uint64_t s) {
    train.seed = s;
    phantom.seed = s;
  }
};

// Parses `text` (lines of key=value, '#' comments) on top of the defaults.
RunConfig parse_config_text(const std::string& text);
RunConfig load_config_file(const std::string& path);

// Applies one "key=value" override in place.
void apply_override(RunConfig& cfg, const std::string& assignment);

// Sorted key=value rendering; parsing it back reproduces the config.
std::string canonical_config(const RunConfig& cfg);

// FNV-1a 64 of the canonical text, 16 lowercase hex digits. Stamped into
// every artifact a command writes.
std::string config_hash(const RunConfig& cfg);

}  // namespace ecf
