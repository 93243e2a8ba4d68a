#pragma once

#include <string>
#include <vector>

#include "msqnet/attention.hpp"
#include "msqnet/tensor.hpp"
#include "msqnet/video.hpp"

namespace msqnet {

enum class AttentionMode { kJoint, kDivided };

struct EncoderConfig {
  int frames = 8;         // T
  int height = 16;        // H
  int width = 16;         // W
  int patch = 8;          // P
  int encoder_dim = 32;   // D'
  int encoder_layers = 2; // L_v
  int heads = 4;
  AttentionMode attention_mode = AttentionMode::kJoint;
  int model_dim = 32;     // D, width of the memory rows
  int ffn_width = 0;      // 0 -> 2 * encoder_dim

  int patches_per_frame() const { return (height / patch) * (width / patch); }
  int tokens() const { return frames * patches_per_frame() + 1; }
  int ffn() const { return ffn_width > 0 ? ffn_width : 2 * encoder_dim; }
  void validate() const;  // throws std::invalid_argument on bad geometry
};

// One pre-norm encoder layer. Joint mode uses `attn`; divided mode uses the
// temporal-then-spatial pair, each with its own projections.
struct EncoderLayerParams {
  LayerNormParams ln_attn;
  AttentionParams attn;
  LayerNormParams ln_time, ln_space;
  AttentionParams attn_time, attn_space;
  LayerNormParams ln_ffn;
  FfnParams ffn;
  static EncoderLayerParams init(const EncoderConfig& cfg, Rng& rng);
  void collect(const std::string& prefix, AttentionMode mode, std::vector<ParamRef>& out) const;
};

struct EncoderParams {
  Tensor patch_embed;   // W_emb [D' x 3P^2]
  Tensor pos_embed;     // e_pos [(T*N+1) x D']
  Tensor global_token;  // [D']
  std::vector<EncoderLayerParams> layers;
  Tensor out_proj;      // W_out [D x D']
  static EncoderParams init(const EncoderConfig& cfg, Rng& rng);
  void collect(AttentionMode mode, std::vector<ParamRef>& out) const;
};

// Memory sequence consumed by the decoder: row 0 is the projected global
// token, rows 1..T the per-frame representations. mem_pos is the learnable
// key-side position table shared across videos.
struct EncodedVideo {
  Tensor memory;   // [(T+1) x D]
  Tensor mem_pos;  // [(T+1) x D]
};

// Row-stochastic token-to-token maps retained for rollout. Joint mode emits
// one map per layer; divided mode emits two (temporal then spatial).
struct EncoderAttnCapture {
  int tokens = 0;
  std::vector<std::vector<double>> passes;  // each [tokens x tokens]
};

Tensor patchify(const Video& video, const EncoderConfig& cfg);  // [T x N x 3P^2]

Tensor embed_patches(const Tensor& patches, const Tensor& w_emb, const Tensor& e_pos,
                     const Tensor& global_token);  // [(T*N+1) x D']

Tensor encode(const Tensor& tokens, const EncoderConfig& cfg,
              const std::vector<EncoderLayerParams>& layers,
              EncoderAttnCapture* capture = nullptr);

EncodedVideo pool_project(const Tensor& encoded, const Tensor& w_out, const EncoderConfig& cfg,
                          const Tensor& mem_pos);

}  // namespace msqnet
