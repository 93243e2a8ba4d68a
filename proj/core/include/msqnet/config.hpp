#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "msqnet/data.hpp"
#include "msqnet/harness.hpp"
#include "msqnet/model.hpp"

namespace msqnet {

// Raised for malformed configs, unknown keys, and invalid invariants; the
// CLI maps it to exit 2.
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Whole-experiment configuration. JSON parsing is strict: unknown keys are
// rejected so typos fail loudly.
struct Config {
  ModelConfig model;
  DataConfig data;
  TrainConfig train;
  std::vector<std::string> classes;  // defaults to the primitive library
  int train_videos = 256;
  int eval_videos = 64;
  std::uint64_t seed = 0;
  double seen_fraction = 0.75;
  int n_splits = 10;
  int ablation_seeds = 5;
  double gradcheck_h = 1e-5;
  double gradcheck_tol = 1e-4;

  static Config from_json(const nlohmann::json& j);
  static Config from_file(const std::string& path);
  nlohmann::json to_json() const;  // effective values, defaults included
  std::uint64_t canonical_hash() const;
  void validate() const;

  // derived seeds for the independent streams of one run
  std::uint64_t init_seed() const { return mix_seed(seed, 0x1a17); }
  std::uint64_t data_seed() const { return mix_seed(seed, 0xda7a); }
};

}  // namespace msqnet
