#include "msqnet/query.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace msqnet {

namespace {

std::vector<double> hashed_unit_vector(const std::string& token, std::uint64_t seed, int dim) {
  Rng rng(fnv1a64(token, mix_seed(0x7465787400ULL, seed)));
  std::vector<double> v(static_cast<std::size_t>(dim));
  double norm2 = 0.0;
  for (double& x : v) {
    x = rng.normal();
    norm2 += x * x;
  }
  const double inv = 1.0 / std::sqrt(norm2);
  for (double& x : v) x *= inv;
  return v;
}

std::vector<std::string> split_tokens(const std::string& name) {
  std::vector<std::string> tokens;
  std::size_t start = 0;
  while (start <= name.size()) {
    const std::size_t pos = name.find('+', start);
    if (pos == std::string::npos) {
      tokens.push_back(name.substr(start));
      break;
    }
    tokens.push_back(name.substr(start, pos - start));
    start = pos + 1;
  }
  return tokens;
}

}  // namespace

std::vector<double> TextEmbedder::embed(const std::string& name) const {
  if (name.empty()) throw std::invalid_argument("text embedder: empty class name");
  if (mode == Mode::kHashed) return hashed_unit_vector(name, seed, dimension);

  std::vector<double> acc(static_cast<std::size_t>(dimension), 0.0);
  for (const std::string& token : split_tokens(name)) {
    if (token.empty()) throw std::invalid_argument("text embedder: empty token in '" + name + "'");
    const auto v = hashed_unit_vector(token, seed, dimension);
    for (int i = 0; i < dimension; ++i) acc[static_cast<std::size_t>(i)] += v[static_cast<std::size_t>(i)];
  }
  double norm2 = 0.0;
  for (double x : acc) norm2 += x * x;
  if (norm2 < 1e-30) throw std::runtime_error("text embedder: degenerate zero embedding for '" + name + "'");
  const double inv = 1.0 / std::sqrt(norm2);
  for (double& x : acc) x *= inv;
  return acc;
}

Tensor text_embed(const std::vector<std::string>& names, const TextEmbedder& embedder) {
  if (names.empty()) throw std::invalid_argument("text_embed: empty class list");
  std::unordered_set<std::string> seen;
  for (const std::string& n : names) {
    if (!seen.insert(n).second) throw std::invalid_argument("text_embed: duplicate class name '" + n + "'");
  }
  NoGradGuard ng;
  Tensor out({static_cast<int>(names.size()), embedder.dimension});
  for (std::size_t k = 0; k < names.size(); ++k) {
    const auto v = embedder.embed(names[k]);
    for (int i = 0; i < embedder.dimension; ++i) out.at(static_cast<int>(k), i) = v[static_cast<std::size_t>(i)];
  }
  return out;
}

FrameEmbedderParams FrameEmbedderParams::init(const FrameEmbedderConfig& cfg, int patches_per_frame,
                                              Rng& rng) {
  if (cfg.video_dim % cfg.heads != 0) {
    throw std::invalid_argument("frame embedder: video_dim must be divisible by heads");
  }
  FrameEmbedderParams p;
  const int patch_len = 3 * cfg.patch * cfg.patch;
  const double std = std::sqrt(2.0 / (patch_len + cfg.video_dim));
  p.patch_proj = Tensor::randn({cfg.video_dim, patch_len}, rng, std).set_requires_grad(true);
  p.pos = Tensor::randn({patches_per_frame, cfg.video_dim}, rng, 0.02).set_requires_grad(true);
  p.ln_attn = LayerNormParams::init(cfg.video_dim);
  p.attn = AttentionParams::init(cfg.video_dim, rng);
  p.ln_ffn = LayerNormParams::init(cfg.video_dim);
  p.ffn = FfnParams::init(cfg.video_dim, cfg.ffn(), rng);
  return p;
}

void FrameEmbedderParams::collect(const std::string& prefix, std::vector<ParamRef>& out) const {
  out.push_back({prefix + ".patch_proj", patch_proj});
  out.push_back({prefix + ".pos", pos});
  ln_attn.collect(prefix + ".ln_attn", out);
  attn.collect(prefix + ".attn", out);
  ln_ffn.collect(prefix + ".ln_ffn", out);
  ffn.collect(prefix + ".ffn", out);
}

void FrameEmbedderParams::set_trainable(bool trainable) {
  std::vector<ParamRef> refs;
  collect("f", refs);
  for (auto& r : refs) r.value.set_requires_grad(trainable);
}

Tensor frame_embed(const Video& video, const FrameEmbedderParams& params,
                   const FrameEmbedderConfig& cfg) {
  if (video.height % cfg.patch != 0 || video.width % cfg.patch != 0) {
    throw std::invalid_argument("frame_embed: frame geometry not divisible by patch");
  }
  const int p = cfg.patch;
  const int grid_w = video.width / p;
  const int n = (video.height / p) * (video.width / p);
  const int patch_len = 3 * p * p;

  std::vector<Tensor> rows;
  rows.reserve(static_cast<std::size_t>(video.frames));
  for (int t = 0; t < video.frames; ++t) {
    Tensor patches;
    {
      NoGradGuard ng;
      patches = Tensor({n, patch_len});
      auto pd = patches.data();
      std::size_t w = 0;
      for (int pi = 0; pi < n; ++pi) {
        const int py = (pi / grid_w) * p;
        const int px = (pi % grid_w) * p;
        for (int c = 0; c < 3; ++c)
          for (int y = 0; y < p; ++y)
            for (int x = 0; x < p; ++x) pd[w++] = video.at(t, c, py + y, px + x);
      }
    }
    Tensor tokens = add(matmul_nt(patches, params.patch_proj), params.pos);
    Tensor normed = apply_ln(tokens, params.ln_attn);
    tokens = add(tokens, multi_head_attention(normed, normed, normed, params.attn, cfg.heads));
    tokens = add(tokens, ffn(apply_ln(tokens, params.ln_ffn), params.ffn));
    rows.push_back(reshape(mean_rows(tokens), {1, cfg.video_dim}));
  }
  return concat_rows(rows);
}

Tensor video_embed(const Tensor& frame_feats) {
  if (frame_feats.ndim() != 2 || frame_feats.rows() < 1) {
    throw std::invalid_argument("video_embed: expected [T x D''], got " + shape_str(frame_feats.shape()));
  }
  return mean_rows(frame_feats);
}

Tensor fuse(const Tensor& q_l, const Tensor& q_v, const Tensor& w_que) {
  if (q_v.ndim() != 1) throw std::invalid_argument("fuse: Q_v must be a vector");
  const int k = q_l.rows();
  const int d = q_l.cols();
  if (w_que.rows() != d || w_que.cols() != d + q_v.size()) {
    throw std::invalid_argument("fuse: W_que " + shape_str(w_que.shape()) + " must be [" + std::to_string(d) +
                                "x" + std::to_string(d + q_v.size()) + "]");
  }
  Tensor joint = concat_cols({q_l, tile_rows(q_v, k)});
  return matmul_nt(joint, w_que);
}

Tensor unimodal_queries(const Tensor& q_l) { return q_l; }

}  // namespace msqnet
