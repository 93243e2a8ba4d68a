#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "msqnet/attention.hpp"
#include "msqnet/tensor.hpp"
#include "msqnet/video.hpp"

namespace msqnet {

// Deterministic stand-in for a pretrained text tower. Hashed mode maps a
// name to a seeded pseudo-random unit vector; compositional mode sums the
// hashed vectors of its '+'-separated tokens and renormalizes, so unseen
// classes built from seen tokens carry transferable structure.
struct TextEmbedder {
  enum class Mode { kHashed, kCompositional };
  Mode mode = Mode::kHashed;
  int dimension = 32;
  std::uint64_t seed = 0;

  std::vector<double> embed(const std::string& name) const;
};

// [K x D] matrix of per-class embeddings; names must be unique.
Tensor text_embed(const std::vector<std::string>& names, const TextEmbedder& embedder);

struct FrameEmbedderConfig {
  int patch = 8;
  int video_dim = 0;  // D''; 0 is resolved to half the model width
  int heads = 2;
  int ffn_width = 0;  // 0 -> 2 * video_dim
  int ffn() const { return ffn_width > 0 ? ffn_width : 2 * video_dim; }
};

// Small per-frame image encoder: linear patch projection, one pre-norm
// Transformer layer over the frame's patches, then mean pool.
struct FrameEmbedderParams {
  Tensor patch_proj;  // [D'' x 3P^2]
  Tensor pos;         // [N x D'']
  LayerNormParams ln_attn;
  AttentionParams attn;
  LayerNormParams ln_ffn;
  FfnParams ffn;
  static FrameEmbedderParams init(const FrameEmbedderConfig& cfg, int patches_per_frame, Rng& rng);
  void collect(const std::string& prefix, std::vector<ParamRef>& out) const;
  void set_trainable(bool trainable);
};

// [T x D'']: each row depends only on its own frame.
Tensor frame_embed(const Video& video, const FrameEmbedderParams& params,
                   const FrameEmbedderConfig& cfg);

// average pool over frames -> Q_v
Tensor video_embed(const Tensor& frame_feats);

// Q_0[k] = W_que . concat(Q_l[k], Q_v); W_que is [D x (D + D'')]
Tensor fuse(const Tensor& q_l, const Tensor& q_v, const Tensor& w_que);

// the no-video-cue ablation path
Tensor unimodal_queries(const Tensor& q_l);

}  // namespace msqnet
