#include "msqnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "msqnet/checkpoint.hpp"
#include "msqnet/rng.hpp"

namespace msqnet {

namespace {

constexpr double kTwoPi = 6.283185307179586;

// Bars carry a mild group tint (vertical warm, horizontal cool) so that
// superposed patterns stay separable; within a group the classes still
// differ only by their motion.

// full-height vertical bar, wrapping horizontally
void add_vbar(Video& v, int t, int col, int width, double amp) {
  static constexpr double tint[3] = {1.0, 0.85, 0.7};
  for (int dx = 0; dx < width; ++dx) {
    const int x = ((col + dx) % v.width + v.width) % v.width;
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < v.height; ++y) v.at(t, c, y, x) += amp * tint[c];
  }
}

// full-width horizontal bar, wrapping vertically
void add_hbar(Video& v, int t, int row, int width, double amp) {
  static constexpr double tint[3] = {0.7, 0.85, 1.0};
  for (int dy = 0; dy < width; ++dy) {
    const int y = ((row + dy) % v.height + v.height) % v.height;
    for (int c = 0; c < 3; ++c)
      for (int x = 0; x < v.width; ++x) v.at(t, c, y, x) += amp * tint[c];
  }
}

void add_square(Video& v, int t, int row, int col, int half, double r, double g, double b) {
  for (int dy = -half; dy < half; ++dy)
    for (int dx = -half; dx < half; ++dx) {
      const int y = ((row + dy) % v.height + v.height) % v.height;
      const int x = ((col + dx) % v.width + v.width) % v.width;
      v.at(t, 0, y, x) += r;
      v.at(t, 1, y, x) += g;
      v.at(t, 2, y, x) += b;
    }
}

// triangle wave over one period, range [0, 1]
double tri(int step, int period) {
  const int m = ((step % period) + period) % period;
  const double x = 2.0 * m / period;
  return x <= 1.0 ? x : 2.0 - x;
}

// Each atom draws an additive moving pattern. The shapes are global (bars,
// centered squares, full-field flashes): their only per-video nuisance is a
// seeded temporal phase, so one frame never pins down the class but a short
// clip does.
void render_atom(const std::string& atom, Video& v, Rng& rng, double amp) {
  const int h = v.height, w = v.width, frames = v.frames;
  const int bar = std::max(2, 3 * w / 8);
  const int phase = static_cast<int>(rng.uniform_int(16));

  const int scale = std::max(1, h / 16);
  for (int t = 0; t < frames; ++t) {
    if (atom == "translate-left") {
      add_vbar(v, t, phase - 2 * t, bar, amp);
    } else if (atom == "translate-right") {
      add_vbar(v, t, phase + 2 * t, bar, amp);
    } else if (atom == "translate-up") {
      add_hbar(v, t, phase - 2 * t, bar, amp);
    } else if (atom == "translate-down") {
      add_hbar(v, t, phase + 2 * t, bar, amp);
    } else if (atom == "grow") {
      const int half = std::min(1 + (t + phase % 4) / 2, 7) * scale;
      add_square(v, t, h / 2, w / 2, half, 0.7 * amp, amp, 0.7 * amp);
    } else if (atom == "shrink") {
      const int half = std::max(7 - (t + phase % 4) / 2, 1) * scale;
      add_square(v, t, h / 2, w / 2, half, 0.7 * amp, amp, 0.7 * amp);
    } else if (atom == "blink") {
      if ((t + phase) % 2 == 0) {
        for (int c = 0; c < 3; ++c)
          for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) v.at(t, c, y, x) += 0.35 * amp;
      }
    } else if (atom == "rotate-quadrant") {
      const int q = ((t + phase) / 2) % 4;
      static constexpr int qy[4] = {0, 0, 1, 1};
      static constexpr int qx[4] = {0, 1, 1, 0};
      add_square(v, t, qy[q] * (h / 2) + h / 4, qx[q] * (w / 2) + w / 4, h / 4, 0.5 * amp, 0.5 * amp,
                 0.5 * amp);
    } else if (atom == "color-shift-r" || atom == "color-shift-g" || atom == "color-shift-b") {
      const double wave = amp * tri(t + phase, 8);
      const double base = 0.15 * amp;
      const int half = std::max(2, 3 * h / 16);
      double r = base, g = base, b = base;
      if (atom == "color-shift-r") r = wave;
      if (atom == "color-shift-g") g = wave;
      if (atom == "color-shift-b") b = wave;
      add_square(v, t, h / 2, w / 2, half, r, g, b);
    } else if (atom == "oscillate") {
      const int col = phase + static_cast<int>(std::lround(4.0 * std::sin(kTwoPi * (t + phase) / 8.0)));
      add_vbar(v, t, col, bar, amp);
    } else {
      throw std::invalid_argument("generate_video: unknown primitive '" + atom + "'");
    }
  }
}

std::vector<std::string> split_atoms(const std::string& name) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= name.size()) {
    const std::size_t pos = name.find('+', start);
    if (pos == std::string::npos) {
      out.push_back(name.substr(start));
      break;
    }
    out.push_back(name.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

}  // namespace

const std::vector<std::string>& primitive_library() {
  static const std::vector<std::string> atoms = {
      "translate-left", "translate-right", "translate-up",  "translate-down",
      "grow",           "shrink",          "blink",         "rotate-quadrant",
      "color-shift-r",  "color-shift-g",   "color-shift-b", "oscillate",
  };
  return atoms;
}

bool is_known_primitive(const std::string& atom) {
  const auto& lib = primitive_library();
  return std::find(lib.begin(), lib.end(), atom) != lib.end();
}

SyntheticVideo generate_video(const std::vector<int>& label_set, std::uint64_t seed,
                              const std::vector<std::string>& vocabulary, const DataConfig& cfg) {
  if (label_set.empty() || label_set.size() > 3) {
    throw std::invalid_argument("generate_video: label set size must be 1..3");
  }
  SyntheticVideo out;
  out.seed = seed;
  out.labels.assign(vocabulary.size(), 0.0);
  out.pixels = Video::zeros(cfg.frames, cfg.height, cfg.width);

  // noisy background
  Rng noise(mix_seed(seed, 0xb6));
  for (double& p : out.pixels.pixels) p = noise.normal(0.0, cfg.noise_std);

  // union of atoms across the label set, rendered once each
  std::set<std::string> atoms;
  for (int cls : label_set) {
    if (cls < 0 || cls >= static_cast<int>(vocabulary.size())) {
      throw std::invalid_argument("generate_video: class id " + std::to_string(cls) + " outside vocabulary");
    }
    out.labels[static_cast<std::size_t>(cls)] = 1.0;
    for (const std::string& atom : split_atoms(vocabulary[static_cast<std::size_t>(cls)])) {
      if (!is_known_primitive(atom)) {
        throw std::invalid_argument("generate_video: unknown primitive '" + atom + "' in class '" +
                                    vocabulary[static_cast<std::size_t>(cls)] + "'");
      }
      atoms.insert(atom);
    }
  }
  for (const std::string& atom : atoms) {
    Rng arng(mix_seed(seed, fnv1a64(atom)));
    render_atom(atom, out.pixels, arng, cfg.amplitude);
  }
  for (double& p : out.pixels.pixels) p = std::clamp(p, 0.0, 1.0);
  return out;
}

std::vector<SplitSpec> make_zero_shot_splits(int num_classes, double seen_fraction, int n_splits,
                                             std::uint64_t master_seed) {
  if (num_classes < 4) throw std::invalid_argument("make_zero_shot_splits: need at least 4 classes");
  if (n_splits < 1) throw std::invalid_argument("make_zero_shot_splits: n_splits must be >= 1");
  const int n_seen = static_cast<int>(std::lround(seen_fraction * num_classes));
  if (n_seen <= 0 || n_seen >= num_classes) {
    throw std::invalid_argument("make_zero_shot_splits: degenerate split, |seen| = " + std::to_string(n_seen) +
                                " of " + std::to_string(num_classes));
  }

  std::vector<SplitSpec> out;
  std::set<std::vector<int>> used;
  std::uint64_t salt = 0;
  for (int s = 0; s < n_splits; ++s) {
    while (true) {
      const std::uint64_t split_seed = mix_seed(master_seed, static_cast<std::uint64_t>(s) * 0x10001 + salt);
      Rng rng(split_seed);
      std::vector<int> ids(static_cast<std::size_t>(num_classes));
      for (int i = 0; i < num_classes; ++i) ids[static_cast<std::size_t>(i)] = i;
      for (int i = num_classes - 1; i > 0; --i) {
        const int j = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(i + 1)));
        std::swap(ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(j)]);
      }
      SplitSpec spec;
      spec.mode = SplitMode::kZeroShot;
      spec.seen_fraction = seen_fraction;
      spec.split_seed = split_seed;
      spec.seen_classes.assign(ids.begin(), ids.begin() + n_seen);
      spec.unseen_classes.assign(ids.begin() + n_seen, ids.end());
      std::sort(spec.seen_classes.begin(), spec.seen_classes.end());
      std::sort(spec.unseen_classes.begin(), spec.unseen_classes.end());
      if (used.insert(spec.seen_classes).second || used.size() >= (1u << 20)) {
        out.push_back(std::move(spec));
        break;
      }
      ++salt;  // duplicate partition: redraw deterministically
    }
  }
  return out;
}

namespace {

constexpr std::uint64_t kTrainStreamBase = 1u << 20;
constexpr std::uint64_t kEvalStreamBase = 1u << 21;

std::vector<int> draw_label_set(Rng& rng, const std::vector<int>& pool,
                                const std::vector<std::string>& vocabulary, const DataConfig& cfg) {
  const auto& w = cfg.label_size_weights;
  if (w.size() != 3) throw std::invalid_argument("label_size_weights must have 3 entries");
  double total = 0.0;
  for (double x : w) total += x;
  if (total <= 0.0) throw std::invalid_argument("label_size_weights must not all be zero");
  double u = rng.uniform() * total;
  int size = 1;
  for (int s = 0; s < 3; ++s) {
    if (u < w[static_cast<std::size_t>(s)]) {
      size = s + 1;
      break;
    }
    u -= w[static_cast<std::size_t>(s)];
    size = s + 1;
  }
  size = std::min<int>(size, static_cast<int>(pool.size()));

  auto group_of = [&](int cls) {
    for (std::size_t g = 0; g < cfg.exclusive_groups.size(); ++g) {
      const auto& group = cfg.exclusive_groups[g];
      if (std::find(group.begin(), group.end(), vocabulary[static_cast<std::size_t>(cls)]) != group.end()) {
        return static_cast<int>(g);
      }
    }
    return -1;
  };

  std::vector<int> shuffled = pool;
  for (int i = static_cast<int>(shuffled.size()) - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(i + 1)));
    std::swap(shuffled[static_cast<std::size_t>(i)], shuffled[static_cast<std::size_t>(j)]);
  }
  std::vector<int> set;
  std::set<int> groups_taken;
  for (int cls : shuffled) {
    if (static_cast<int>(set.size()) == size) break;
    const int g = group_of(cls);
    if (g >= 0 && !groups_taken.insert(g).second) continue;
    set.push_back(cls);
  }
  std::sort(set.begin(), set.end());
  return set;
}

Dataset draw_videos(const std::vector<int>& pool, const std::vector<std::string>& vocabulary,
                    int count, std::uint64_t data_seed, std::uint64_t stream_base,
                    const DataConfig& cfg) {
  // labels are produced over the pool's own vocabulary
  Dataset ds;
  std::vector<int> remap(vocabulary.size(), -1);
  for (std::size_t i = 0; i < pool.size(); ++i) {
    ds.class_names.push_back(vocabulary[static_cast<std::size_t>(pool[i])]);
    remap[static_cast<std::size_t>(pool[i])] = static_cast<int>(i);
  }
  for (int i = 0; i < count; ++i) {
    const std::uint64_t seed = mix_seed(data_seed, stream_base + static_cast<std::uint64_t>(i));
    Rng rng(mix_seed(seed, 0x1abe1));
    std::vector<int> label_set = draw_label_set(rng, pool, vocabulary, cfg);
    SyntheticVideo video = generate_video(label_set, seed, vocabulary, cfg);
    // rebase the label vector onto the pool vocabulary
    std::vector<double> labels(pool.size(), 0.0);
    for (int cls : label_set) labels[static_cast<std::size_t>(remap[static_cast<std::size_t>(cls)])] = 1.0;
    video.labels = std::move(labels);
    ds.videos.push_back(std::move(video));
  }
  return ds;
}

}  // namespace

std::pair<Dataset, Dataset> build_dataset(const SplitSpec& split,
                                          const std::vector<std::string>& vocabulary, int n_train,
                                          int n_eval, const DataConfig& cfg,
                                          std::uint64_t data_seed) {
  std::vector<int> all(vocabulary.size());
  for (std::size_t i = 0; i < vocabulary.size(); ++i) all[i] = static_cast<int>(i);

  if (split.mode == SplitMode::kSupervised) {
    Dataset train = draw_videos(all, vocabulary, n_train, data_seed, kTrainStreamBase, cfg);
    Dataset eval = draw_videos(all, vocabulary, n_eval, data_seed, kEvalStreamBase, cfg);
    return {std::move(train), std::move(eval)};
  }

  for (int cls : split.seen_classes) {
    if (cls < 0 || cls >= static_cast<int>(vocabulary.size())) {
      throw std::invalid_argument("build_dataset: split references class outside vocabulary");
    }
  }
  if (split.unseen_classes.size() < 2) {
    throw std::invalid_argument("build_dataset: zero-shot eval needs at least 2 unseen classes");
  }
  Dataset train = draw_videos(split.seen_classes, vocabulary, n_train, data_seed, kTrainStreamBase, cfg);
  Dataset eval = draw_videos(split.unseen_classes, vocabulary, n_eval, data_seed, kEvalStreamBase, cfg);
  return {std::move(train), std::move(eval)};
}

void export_dataset(const Dataset& ds, const std::string& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream cls(dir + "/classes.txt");
    if (!cls) throw std::runtime_error("export_dataset: cannot write classes.txt");
    for (const std::string& name : ds.class_names) cls << name << "\n";
  }
  std::ofstream manifest(dir + "/manifest.txt");
  if (!manifest) throw std::runtime_error("export_dataset: cannot write manifest.txt");
  for (std::size_t i = 0; i < ds.videos.size(); ++i) {
    const SyntheticVideo& v = ds.videos[i];
    char filename[32];
    std::snprintf(filename, sizeof filename, "video_%05zu.msqk", i);
    NoGradGuard ng;
    Tensor pixels({v.pixels.frames, 3, v.pixels.height, v.pixels.width},
                  std::vector<double>(v.pixels.pixels));
    save_checkpoint(dir + "/" + filename, {{"pixels", pixels}});
    std::string bits;
    for (double l : v.labels) bits += l != 0.0 ? '1' : '0';
    manifest << filename << "," << v.seed << "," << bits << "\n";
  }
}

Dataset import_dataset(const std::string& dir) {
  Dataset ds;
  ds.class_names = read_class_file(dir + "/classes.txt");
  std::ifstream manifest(dir + "/manifest.txt");
  if (!manifest) throw std::runtime_error("import_dataset: cannot open manifest.txt in '" + dir + "'");
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string filename, seed_str, bits;
    if (!std::getline(ss, filename, ',') || !std::getline(ss, seed_str, ',') || !std::getline(ss, bits)) {
      throw std::runtime_error("import_dataset: malformed manifest line '" + line + "'");
    }
    auto tensors = read_checkpoint(dir + "/" + filename);
    if (tensors.size() != 1 || tensors[0].name != "pixels" || tensors[0].value.ndim() != 4) {
      throw std::runtime_error("import_dataset: '" + filename + "' is not a single pixels tensor");
    }
    const Tensor& px = tensors[0].value;
    SyntheticVideo v;
    v.seed = std::stoull(seed_str);
    v.pixels.frames = px.dim(0);
    v.pixels.height = px.dim(2);
    v.pixels.width = px.dim(3);
    v.pixels.pixels.assign(px.data().begin(), px.data().end());
    for (char c : bits) v.labels.push_back(c == '1' ? 1.0 : 0.0);
    if (v.labels.size() != ds.class_names.size()) {
      throw std::runtime_error("import_dataset: label width mismatch in '" + filename + "'");
    }
    ds.videos.push_back(std::move(v));
  }
  return ds;
}

std::vector<std::string> read_class_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open class file '" + path + "'");
  std::vector<std::string> names;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) names.push_back(line);
  }
  return names;
}

}  // namespace msqnet
