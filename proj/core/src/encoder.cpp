#include "msqnet/encoder.hpp"

#include <stdexcept>

namespace msqnet {

void EncoderConfig::validate() const {
  if (frames < 1) throw std::invalid_argument("encoder config: frames must be >= 1");
  if (encoder_layers < 1) throw std::invalid_argument("encoder config: encoder_layers must be >= 1");
  if (patch < 1 || height % patch != 0 || width % patch != 0) {
    throw std::invalid_argument("encoder config: height " + std::to_string(height) + " and width " +
                                std::to_string(width) + " must be divisible by patch " + std::to_string(patch));
  }
  if (heads < 1 || encoder_dim % heads != 0) {
    throw std::invalid_argument("encoder config: encoder_dim " + std::to_string(encoder_dim) +
                                " must be divisible by heads " + std::to_string(heads));
  }
}

EncoderLayerParams EncoderLayerParams::init(const EncoderConfig& cfg, Rng& rng) {
  EncoderLayerParams l;
  const int d = cfg.encoder_dim;
  if (cfg.attention_mode == AttentionMode::kJoint) {
    l.ln_attn = LayerNormParams::init(d);
    l.attn = AttentionParams::init(d, rng);
  } else {
    l.ln_time = LayerNormParams::init(d);
    l.attn_time = AttentionParams::init(d, rng);
    l.ln_space = LayerNormParams::init(d);
    l.attn_space = AttentionParams::init(d, rng);
  }
  l.ln_ffn = LayerNormParams::init(d);
  l.ffn = FfnParams::init(d, cfg.ffn(), rng);
  return l;
}

void EncoderLayerParams::collect(const std::string& prefix, AttentionMode mode,
                                 std::vector<ParamRef>& out) const {
  if (mode == AttentionMode::kJoint) {
    ln_attn.collect(prefix + ".ln_attn", out);
    attn.collect(prefix + ".attn", out);
  } else {
    ln_time.collect(prefix + ".ln_time", out);
    attn_time.collect(prefix + ".attn_time", out);
    ln_space.collect(prefix + ".ln_space", out);
    attn_space.collect(prefix + ".attn_space", out);
  }
  ln_ffn.collect(prefix + ".ln_ffn", out);
  ffn.collect(prefix + ".ffn", out);
}

EncoderParams EncoderParams::init(const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  EncoderParams p;
  const int patch_len = 3 * cfg.patch * cfg.patch;
  const double wstd = std::sqrt(2.0 / (patch_len + cfg.encoder_dim));
  p.patch_embed = Tensor::randn({cfg.encoder_dim, patch_len}, rng, wstd).set_requires_grad(true);
  p.pos_embed = Tensor::randn({cfg.tokens(), cfg.encoder_dim}, rng, 0.5).set_requires_grad(true);
  p.global_token = Tensor::randn({cfg.encoder_dim}, rng, 0.02).set_requires_grad(true);
  p.layers.reserve(static_cast<std::size_t>(cfg.encoder_layers));
  for (int i = 0; i < cfg.encoder_layers; ++i) p.layers.push_back(EncoderLayerParams::init(cfg, rng));
  const double ostd = std::sqrt(2.0 / (cfg.encoder_dim + cfg.model_dim));
  p.out_proj = Tensor::randn({cfg.model_dim, cfg.encoder_dim}, rng, ostd).set_requires_grad(true);
  return p;
}

void EncoderParams::collect(AttentionMode mode, std::vector<ParamRef>& out) const {
  out.push_back({"W_emb", patch_embed});
  out.push_back({"e_pos", pos_embed});
  out.push_back({"global_token", global_token});
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].collect("enc." + std::to_string(i), mode, out);
  }
  out.push_back({"W_out", out_proj});
}

Tensor patchify(const Video& video, const EncoderConfig& cfg) {
  cfg.validate();
  if (video.frames != cfg.frames || video.height != cfg.height || video.width != cfg.width) {
    throw std::invalid_argument("patchify: video geometry does not match config");
  }
  const int p = cfg.patch;
  const int grid_w = cfg.width / p;
  const int n = cfg.patches_per_frame();
  const int patch_len = 3 * p * p;
  NoGradGuard ng;  // pixels carry no gradient
  Tensor out({cfg.frames, n, patch_len});
  auto od = out.data();
  std::size_t w = 0;
  for (int t = 0; t < cfg.frames; ++t) {
    for (int pi = 0; pi < n; ++pi) {
      const int py = (pi / grid_w) * p;
      const int px = (pi % grid_w) * p;
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < p; ++y)
          for (int x = 0; x < p; ++x) od[w++] = video.at(t, c, py + y, px + x);
    }
  }
  return out;
}

Tensor embed_patches(const Tensor& patches, const Tensor& w_emb, const Tensor& e_pos,
                     const Tensor& global_token) {
  if (patches.ndim() != 3) {
    throw std::invalid_argument("embed_patches: expected [T x N x 3P^2] patches, got " +
                                shape_str(patches.shape()));
  }
  const int tn = patches.dim(0) * patches.dim(1);
  const int patch_len = patches.dim(2);
  const int d = w_emb.rows();
  if (w_emb.cols() != patch_len) {
    throw std::invalid_argument("embed_patches: W_emb " + shape_str(w_emb.shape()) +
                                " does not match patch length " + std::to_string(patch_len));
  }
  if (e_pos.rows() != tn + 1 || e_pos.cols() != d) {
    throw std::invalid_argument("embed_patches: e_pos " + shape_str(e_pos.shape()) + " must be [" +
                                std::to_string(tn + 1) + "x" + std::to_string(d) + "]");
  }
  Tensor flat = reshape(patches, {tn, patch_len});        // (t-major, p-minor) rows
  Tensor projected = matmul_nt(flat, w_emb);              // rows W_emb . x_(p,t)
  Tensor with_global = concat_rows({reshape(global_token, {1, d}), projected});
  return add(with_global, e_pos);
}

namespace {

void append_capture(EncoderAttnCapture* capture, std::vector<double> map) {
  if (capture) capture->passes.push_back(std::move(map));
}

// Grouped attention pass for divided mode. Each group is [global] + the
// member tokens; member outputs return to their positions, the global
// token's output is averaged over groups. Optionally assembles the
// equivalent full token-to-token attention map.
Tensor grouped_attention(const Tensor& x, const std::vector<std::vector<int>>& groups,
                         const LayerNormParams& ln, const AttentionParams& attn, int heads,
                         EncoderAttnCapture* capture) {
  const int s = x.rows();
  Tensor normed = apply_ln(x, ln);
  std::vector<Tensor> scattered;
  std::vector<Tensor> global_outs;
  std::vector<double> full_map;
  if (capture) full_map.assign(static_cast<std::size_t>(s) * s, 0.0);

  for (const auto& members : groups) {
    std::vector<int> idx;
    idx.reserve(members.size() + 1);
    idx.push_back(0);
    idx.insert(idx.end(), members.begin(), members.end());
    Tensor g = gather_rows(normed, idx);
    AttnWeights weights;
    Tensor out = multi_head_attention(g, g, g, attn, heads, capture ? &weights : nullptr);
    global_outs.push_back(slice_rows(out, 0, 1));
    scattered.push_back(scatter_rows(slice_rows(out, 1, static_cast<int>(idx.size())), members, s));
    if (capture) {
      const auto mean = weights.head_mean();
      const int gs = static_cast<int>(idx.size());
      for (int i = 1; i < gs; ++i)
        for (int j = 0; j < gs; ++j)
          full_map[static_cast<std::size_t>(idx[i]) * s + idx[j]] = mean[static_cast<std::size_t>(i) * gs + j];
      // the global token attends in every group; average its rows
      for (int j = 0; j < gs; ++j)
        full_map[static_cast<std::size_t>(idx[j])] += mean[static_cast<std::size_t>(j)] / groups.size();
    }
  }
  Tensor merged = scattered[0];
  for (std::size_t i = 1; i < scattered.size(); ++i) merged = add(merged, scattered[i]);
  Tensor global_avg = global_outs[0];
  for (std::size_t i = 1; i < global_outs.size(); ++i) global_avg = add(global_avg, global_outs[i]);
  global_avg = scale(global_avg, 1.0 / static_cast<double>(groups.size()));
  merged = add(merged, scatter_rows(global_avg, {0}, s));
  if (capture) append_capture(capture, std::move(full_map));
  return add(x, merged);
}

}  // namespace

Tensor encode(const Tensor& tokens, const EncoderConfig& cfg,
              const std::vector<EncoderLayerParams>& layers, EncoderAttnCapture* capture) {
  const int s = cfg.tokens();
  if (tokens.ndim() != 2 || tokens.rows() != s || tokens.cols() != cfg.encoder_dim) {
    throw std::invalid_argument("encode: tokens " + shape_str(tokens.shape()) + " must be [" +
                                std::to_string(s) + "x" + std::to_string(cfg.encoder_dim) + "]");
  }
  if (capture) {
    capture->tokens = s;
    capture->passes.clear();
  }
  const int n = cfg.patches_per_frame();
  Tensor x = tokens;
  for (const EncoderLayerParams& layer : layers) {
    if (cfg.attention_mode == AttentionMode::kJoint) {
      Tensor normed = apply_ln(x, layer.ln_attn);
      AttnWeights weights;
      Tensor out = multi_head_attention(normed, normed, normed, layer.attn, cfg.heads,
                                        capture ? &weights : nullptr);
      if (capture) append_capture(capture, weights.head_mean());
      x = add(x, out);
    } else {
      // temporal: tokens sharing spatial index p attend across t
      std::vector<std::vector<int>> time_groups;
      for (int p = 0; p < n; ++p) {
        std::vector<int> members;
        for (int t = 0; t < cfg.frames; ++t) members.push_back(1 + t * n + p);
        time_groups.push_back(std::move(members));
      }
      x = grouped_attention(x, time_groups, layer.ln_time, layer.attn_time, cfg.heads, capture);
      // spatial: tokens sharing frame t attend across p
      std::vector<std::vector<int>> space_groups;
      for (int t = 0; t < cfg.frames; ++t) {
        std::vector<int> members;
        for (int p = 0; p < n; ++p) members.push_back(1 + t * n + p);
        space_groups.push_back(std::move(members));
      }
      x = grouped_attention(x, space_groups, layer.ln_space, layer.attn_space, cfg.heads, capture);
    }
    x = add(x, ffn(apply_ln(x, layer.ln_ffn), layer.ffn));
  }
  return x;
}

EncodedVideo pool_project(const Tensor& encoded, const Tensor& w_out, const EncoderConfig& cfg,
                          const Tensor& mem_pos) {
  const int n = cfg.patches_per_frame();
  std::vector<Tensor> rows;
  rows.reserve(static_cast<std::size_t>(cfg.frames) + 1);
  rows.push_back(slice_rows(encoded, 0, 1));  // global token, pooled separately as row 0
  for (int t = 0; t < cfg.frames; ++t) {
    Tensor frame_tokens = slice_rows(encoded, 1 + t * n, 1 + (t + 1) * n);
    rows.push_back(reshape(mean_rows(frame_tokens), {1, cfg.encoder_dim}));
  }
  EncodedVideo ev;
  ev.memory = matmul_nt(concat_rows(rows), w_out);
  ev.mem_pos = mem_pos;
  return ev;
}

}  // namespace msqnet
