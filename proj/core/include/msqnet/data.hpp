#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "msqnet/video.hpp"

namespace msqnet {

struct DataConfig {
  int frames = 8;
  int height = 16;
  int width = 16;
  double noise_std = 0.05;
  double amplitude = 0.7;
  // unnormalized weights for label-set sizes 1, 2, 3
  std::vector<double> label_size_weights = {1.0, 1.0, 1.0};
  // Optional groups of mutually exclusive class names: the label sampler
  // never draws two members of one group into the same video. Opposite
  // motions superpose into a pattern that mimics a third class (left+right
  // crossing bars look like oscillation), so benchmark configs exclude them.
  std::vector<std::vector<std::string>> exclusive_groups;
};

// Names of the built-in motion primitives. Every class name is a '+'-joined
// list of these atoms; rendering a class draws each of its atoms.
const std::vector<std::string>& primitive_library();
bool is_known_primitive(const std::string& atom);

struct SyntheticVideo {
  Video pixels;                // values in [0,1]
  std::vector<double> labels;  // multi-hot over the owning dataset's vocabulary
  std::uint64_t seed = 0;
};

enum class SplitMode { kSupervised, kZeroShot };

struct SplitSpec {
  SplitMode mode = SplitMode::kSupervised;
  double seen_fraction = 1.0;
  std::uint64_t split_seed = 0;
  std::vector<int> seen_classes;    // class ids into the run vocabulary
  std::vector<int> unseen_classes;  // empty in supervised mode
};

// Renders the union of the label set's atoms onto a noisy background.
// Deterministic: identical (label_set, seed) produce identical pixels.
// label indices refer to `vocabulary`; the label vector is over `vocabulary`.
SyntheticVideo generate_video(const std::vector<int>& label_set, std::uint64_t seed,
                              const std::vector<std::string>& vocabulary, const DataConfig& cfg);

// n_splits seeded disjoint-and-exhaustive partitions with
// |seen| = round(seen_fraction * K). Duplicates are re-drawn when the class
// count permits distinct partitions.
std::vector<SplitSpec> make_zero_shot_splits(int num_classes, double seen_fraction, int n_splits,
                                             std::uint64_t master_seed);

struct Dataset {
  std::vector<std::string> class_names;  // vocabulary the label vectors index
  std::vector<SyntheticVideo> videos;
};

// Supervised mode draws train and eval over the full vocabulary from
// disjoint seed ranges; zero-shot mode restricts train to seen classes and
// eval to unseen ones, with eval labels over the unseen vocabulary.
std::pair<Dataset, Dataset> build_dataset(const SplitSpec& split,
                                          const std::vector<std::string>& vocabulary, int n_train,
                                          int n_eval, const DataConfig& cfg,
                                          std::uint64_t data_seed);

// Directory layout: classes.txt (one name per line), manifest.txt rows of
// `filename,seed,labelbits`, one binary tensor file per video.
void export_dataset(const Dataset& ds, const std::string& dir);
Dataset import_dataset(const std::string& dir);

std::vector<std::string> read_class_file(const std::string& path);

}  // namespace msqnet
