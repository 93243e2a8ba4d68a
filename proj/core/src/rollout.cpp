#include "msqnet/rollout.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace msqnet {

namespace {

void minmax_normalize(std::vector<double>& v) {
  double lo = v[0], hi = v[0];
  for (double x : v) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  if (hi - lo < 1e-15) {
    std::fill(v.begin(), v.end(), 1.0);  // constant map convention
    return;
  }
  for (double& x : v) x = (x - lo) / (hi - lo);
}

}  // namespace

std::vector<std::vector<double>> decoder_heat(const DecoderTrace& trace) {
  if (trace.cross_attn.empty()) {
    throw std::invalid_argument(
        "attention_rollout: trace has no attention maps; rerun decode with attention retention enabled");
  }
  const int k = trace.cross_attn[0].sq;
  const int cols = trace.cross_attn[0].sk;
  std::vector<std::vector<double>> heat(static_cast<std::size_t>(k),
                                        std::vector<double>(static_cast<std::size_t>(cols), 0.0));
  const double layer_weight = 1.0 / static_cast<double>(trace.cross_attn.size());
  for (const AttnWeights& layer : trace.cross_attn) {
    const auto mean = layer.head_mean();
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < cols; ++j)
        heat[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] +=
            layer_weight * mean[static_cast<std::size_t>(i) * cols + j];
  }
  return heat;
}

std::vector<double> encoder_rollout(const EncoderAttnCapture& capture) {
  const int s = capture.tokens;
  std::vector<double> rollout(static_cast<std::size_t>(s) * s, 0.0);
  for (int i = 0; i < s; ++i) rollout[static_cast<std::size_t>(i) * s + i] = 1.0;

  std::vector<double> mixed(static_cast<std::size_t>(s) * s);
  std::vector<double> next(static_cast<std::size_t>(s) * s);
  for (const auto& pass : capture.passes) {
    // row-normalized 0.5 A + 0.5 I
    for (int i = 0; i < s; ++i) {
      double row_sum = 0.0;
      for (int j = 0; j < s; ++j) {
        const double v = 0.5 * pass[static_cast<std::size_t>(i) * s + j] + (i == j ? 0.5 : 0.0);
        mixed[static_cast<std::size_t>(i) * s + j] = v;
        row_sum += v;
      }
      for (int j = 0; j < s; ++j) mixed[static_cast<std::size_t>(i) * s + j] /= row_sum;
    }
    // rollout <- mixed . rollout
    std::fill(next.begin(), next.end(), 0.0);
    for (int i = 0; i < s; ++i)
      for (int p = 0; p < s; ++p) {
        const double m = mixed[static_cast<std::size_t>(i) * s + p];
        if (m == 0.0) continue;
        for (int j = 0; j < s; ++j)
          next[static_cast<std::size_t>(i) * s + j] += m * rollout[static_cast<std::size_t>(p) * s + j];
      }
    std::swap(rollout, next);
  }
  return rollout;
}

RolloutMap attention_rollout(const DecoderTrace& trace, const EncoderAttnCapture* encoder_attns,
                             const EncoderConfig& cfg, const std::vector<std::string>& class_names) {
  auto heat = decoder_heat(trace);
  const int k = static_cast<int>(heat.size());
  const int t_plus_1 = cfg.frames + 1;
  if (static_cast<int>(heat[0].size()) != t_plus_1) {
    throw std::invalid_argument("attention_rollout: trace width does not match the encoder frame count");
  }

  RolloutMap map;
  map.frames = cfg.frames;
  map.grid_h = cfg.height / cfg.patch;
  map.grid_w = cfg.width / cfg.patch;
  map.class_names = class_names;

  if (encoder_attns != nullptr) {
    const int s = encoder_attns->tokens;
    const int n = cfg.patches_per_frame();
    const auto rollout = encoder_rollout(*encoder_attns);
    // dependence of frame t's pooled representation on the input tokens
    for (int c = 0; c < k; ++c) {
      std::vector<std::vector<double>> frames;
      for (int t = 0; t < cfg.frames; ++t) {
        std::vector<double> frame_dep(static_cast<std::size_t>(s), 0.0);
        for (int p = 0; p < n; ++p) {
          const int token = 1 + t * n + p;
          for (int j = 0; j < s; ++j)
            frame_dep[static_cast<std::size_t>(j)] += rollout[static_cast<std::size_t>(token) * s + j] / n;
        }
        // restrict to frame t's own patches and weight by the class's frame heat
        std::vector<double> patch_heat(static_cast<std::size_t>(n));
        for (int p = 0; p < n; ++p)
          patch_heat[static_cast<std::size_t>(p)] =
              heat[static_cast<std::size_t>(c)][static_cast<std::size_t>(1 + t)] *
              frame_dep[static_cast<std::size_t>(1 + t * n + p)];
        minmax_normalize(patch_heat);
        frames.push_back(std::move(patch_heat));
      }
      map.spatial.push_back(std::move(frames));
    }
  }

  for (auto& row : heat) minmax_normalize(row);
  map.memory_heat = std::move(heat);
  return map;
}

namespace {

void write_pgm(const std::string& path, int width, int height, const std::vector<double>& heat) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("export_heatmap: cannot write '" + path + "'");
  os << "P5\n" << width << " " << height << "\n255\n";
  for (double v : heat) {
    const int byte = static_cast<int>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
    os.put(static_cast<char>(byte));
  }
  if (!os) throw std::runtime_error("export_heatmap: write failed for '" + path + "'");
}

}  // namespace

void export_heatmap(const RolloutMap& map, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream index(dir + "/index.txt");
  if (!index) throw std::runtime_error("export_heatmap: cannot write index in '" + dir + "'");
  index << "class_id,class_name,frame,file\n";
  char name[128];
  for (std::size_t c = 0; c < map.memory_heat.size(); ++c) {
    if (!map.spatial.empty()) {
      for (int t = 0; t < map.frames; ++t) {
        std::snprintf(name, sizeof name, "class_%02zu_frame_%02d.pgm", c, t);
        write_pgm(dir + "/" + name, map.grid_w, map.grid_h, map.spatial[c][static_cast<std::size_t>(t)]);
        index << c << "," << map.class_names[c] << "," << t << "," << name << "\n";
      }
    } else {
      std::snprintf(name, sizeof name, "class_%02zu_memory.pgm", c);
      write_pgm(dir + "/" + name, static_cast<int>(map.memory_heat[c].size()), 1, map.memory_heat[c]);
      index << c << "," << map.class_names[c] << ",-1," << name << "\n";
    }
  }
}

std::vector<int> read_pgm(const std::string& path, int& width, int& height) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_pgm: cannot open '" + path + "'");
  std::string magic;
  int maxval = 0;
  is >> magic >> width >> height >> maxval;
  if (magic != "P5" || maxval != 255) throw std::runtime_error("read_pgm: '" + path + "' is not a maxval-255 P5 file");
  is.get();  // single whitespace after the header
  std::vector<int> pixels;
  pixels.reserve(static_cast<std::size_t>(width) * height);
  for (int i = 0; i < width * height; ++i) {
    const int c = is.get();
    if (c == EOF) throw std::runtime_error("read_pgm: truncated pixel data in '" + path + "'");
    pixels.push_back(c);
  }
  return pixels;
}

void export_embeddings(const MsqnetModel& model, const Dataset& dataset, const std::string& path) {
  NoGradGuard ng;
  std::ofstream os(path);
  if (!os) throw std::runtime_error("export_embeddings: cannot write '" + path + "'");
  const int d = model.cfg.decoder.model_dim;
  os << "video_id,labels,kind,class";
  for (int i = 0; i < d; ++i) os << ",e" << i;
  os << "\n";
  char cell[40];
  for (std::size_t vi = 0; vi < dataset.videos.size(); ++vi) {
    const SyntheticVideo& v = dataset.videos[vi];
    auto out = model.forward(v.pixels);
    std::string bits;
    for (double l : v.labels) bits += l != 0.0 ? '1' : '0';

    os << vi << "," << bits << ",a,-1";
    for (int i = 0; i < d; ++i) {
      std::snprintf(cell, sizeof cell, ",%.9g", out.video_feature.at(i));
      os << cell;
    }
    os << "\n";
    for (std::size_t c = 0; c < v.labels.size(); ++c) {
      if (v.labels[c] == 0.0) continue;
      os << vi << "," << bits << ",b," << c;
      for (int i = 0; i < d; ++i) {
        std::snprintf(cell, sizeof cell, ",%.9g", out.final_queries.at(static_cast<int>(c), i));
        os << cell;
      }
      os << "\n";
    }
  }
}

}  // namespace msqnet
