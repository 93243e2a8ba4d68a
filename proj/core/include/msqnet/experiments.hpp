#pragma once

#include <string>
#include <vector>

#include "msqnet/config.hpp"

namespace msqnet {

struct SupervisedRun {
  MsqnetModel model;
  RunRecord record;
  Dataset train_set, eval_set;
};

// Builds data and model from the config, trains, and returns everything.
SupervisedRun run_supervised(const Config& cfg);

// The three model variants contrasted in the zero-shot ladder.
enum class ZeroShotVariant { kVanilla, kTextInit, kFull };
std::string variant_name(ZeroShotVariant v);

struct ZeroShotSplitResult {
  int split_index = 0;
  double map = 0.0;
  double null95 = 0.0;  // 95th percentile of the label-permutation null
  bool above_null = false;
  std::vector<std::string> unseen_classes;
};

struct ZeroShotReport {
  ZeroShotVariant variant{};
  std::vector<ZeroShotSplitResult> splits;
  double mean_map = 0.0;
  double std_map = 0.0;
  int above_null_count = 0;
};

// Disjoint-class protocol: train on seen classes, evaluate unseen-class mAP
// against a seeded label-permutation null. The classification head is shared
// across classes for these runs so the readout transfers to the unseen
// vocabulary.
ZeroShotReport run_zero_shot(const Config& cfg, ZeroShotVariant variant, int null_resamples = 200);

struct AblationCell {
  std::string name;
  std::vector<double> per_seed;  // primary eval metric per seed
  double mean = 0.0;
  double stddev = 0.0;
};

struct AblationReport {
  std::vector<AblationCell> cells;  // 4 query cells + 3 frame-count cells
  std::string render() const;
};

// Factorial {mmq x text_init} grid plus the frame-count grid {8, 10, 16},
// each run over n_seeds seeds of the base config.
AblationReport ablation_suite(const Config& base, int n_seeds);

}  // namespace msqnet
