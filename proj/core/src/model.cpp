#include "msqnet/model.hpp"

#include <bit>
#include <cmath>
#include <stdexcept>

namespace msqnet {

void ModelConfig::validate() const {
  encoder.validate();
  decoder.validate();
  if (encoder.model_dim != decoder.model_dim) {
    throw std::invalid_argument("model config: encoder output width and decoder width disagree");
  }
  if (frame.video_dim < 1 || frame.video_dim % frame.heads != 0) {
    throw std::invalid_argument("model config: video_dim must be positive and divisible by frame heads");
  }
}

MsqnetModel MsqnetModel::init(const ModelConfig& cfg, std::vector<std::string> class_names,
                              std::uint64_t seed) {
  cfg.validate();
  if (class_names.empty()) throw std::invalid_argument("model: class vocabulary is empty");
  MsqnetModel m;
  m.cfg = cfg;
  m.class_names = std::move(class_names);
  const int k = m.num_classes();
  const int d = cfg.decoder.model_dim;
  const int dv = cfg.frame.video_dim;

  Rng rng(mix_seed(seed, 0x1217));
  m.encoder = EncoderParams::init(cfg.encoder, rng);
  m.frame_embedder =
      FrameEmbedderParams::init(cfg.frame, (cfg.encoder.height / cfg.frame.patch) * (cfg.encoder.width / cfg.frame.patch), rng);
  if (cfg.freeze_frame_embedder) m.frame_embedder.set_trainable(false);

  if (cfg.text_init) {
    m.label_queries = detach(text_embed(m.class_names, cfg.text_embedder()));
    m.label_queries.set_requires_grad(true);
  } else {
    m.label_queries = Tensor::randn({k, d}, rng, 0.02).set_requires_grad(true);
  }
  // near-identity fusion at init: the label block passes through unchanged
  // and the video block starts small, so the fused path begins where the
  // unimodal path begins and the video route grows under gradient pressure
  m.fuse_proj = Tensor::randn({d, d + dv}, rng, 0.02).set_requires_grad(true);
  for (int i = 0; i < d; ++i) m.fuse_proj.at(i, i) += 1.0;
  m.mem_pos = Tensor::randn({cfg.encoder.frames + 1, d}, rng, 0.5).set_requires_grad(true);
  m.decoder = DecoderParams::init(cfg.decoder, k, rng);
  m.head = ClassificationHead::init(k, d, cfg.shared_head, rng);
  return m;
}

std::vector<ParamRef> MsqnetModel::parameters() const {
  std::vector<ParamRef> out;
  encoder.collect(cfg.encoder.attention_mode, out);
  if (cfg.mmq) {
    if (!cfg.freeze_frame_embedder) frame_embedder.collect("frame", out);
    out.push_back({"W_que", fuse_proj});
  }
  out.push_back({"Q_l", label_queries});
  out.push_back({"mem_pos", mem_pos});
  decoder.collect(out);
  head.collect(out);
  return out;
}

std::vector<ParamRef> MsqnetModel::checkpoint_tensors() const {
  std::vector<ParamRef> out;
  encoder.collect(cfg.encoder.attention_mode, out);
  frame_embedder.collect("frame", out);
  out.push_back({"W_que", fuse_proj});
  out.push_back({"Q_l", label_queries});
  out.push_back({"mem_pos", mem_pos});
  decoder.collect(out);
  head.collect(out);
  return out;
}

MsqnetModel::Output MsqnetModel::forward(const Video& video, EncoderAttnCapture* enc_capture) const {
  Output out;

  Tensor patches = patchify(video, cfg.encoder);
  Tensor tokens = embed_patches(patches, encoder.patch_embed, encoder.pos_embed, encoder.global_token);
  Tensor encoded = encode(tokens, cfg.encoder, encoder.layers, enc_capture);
  out.memory = pool_project(encoded, encoder.out_proj, cfg.encoder, mem_pos);

  Tensor q0;
  if (cfg.mmq) {
    Tensor frame_feats = frame_embed(video, frame_embedder, cfg.frame);
    q0 = fuse(label_queries, video_embed(frame_feats), fuse_proj);
  } else {
    q0 = unimodal_queries(label_queries);
  }

  out.trace = decode(q0, out.memory, cfg.decoder, decoder);
  out.final_queries = apply_ln(out.trace.final_state(), decoder.final_ln);
  out.logits = class_logits(out.final_queries, head);
  out.video_feature = mean_rows(slice_rows(out.memory.memory, 1, cfg.encoder.frames + 1));
  return out;
}

MsqnetModel MsqnetModel::with_classes(std::vector<std::string> names, std::uint64_t reinit_seed) const {
  MsqnetModel view = *this;  // tensors are shared handles
  view.class_names = std::move(names);
  const int k = view.num_classes();
  const int d = cfg.decoder.model_dim;

  Rng rng(mix_seed(reinit_seed, 0xc1a55));
  if (cfg.text_init) {
    view.label_queries = detach(text_embed(view.class_names, cfg.text_embedder()));
    view.label_queries.set_requires_grad(true);
  } else {
    view.label_queries = Tensor::randn({k, d}, rng, 0.02).set_requires_grad(true);
  }
  view.decoder.query_pos = Tensor::randn({k, d}, rng, 0.02).set_requires_grad(true);
  if (!cfg.shared_head) {
    view.head = ClassificationHead::init(k, d, false, rng);
  }
  return view;
}

std::uint64_t parameter_checksum(const std::vector<ParamRef>& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const ParamRef& p : params) {
    h = fnv1a64(p.name, h);
    for (double v : p.value.data()) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      for (int i = 0; i < 8; ++i) {
        h ^= (bits >> (8 * i)) & 0xff;
        h *= 0x100000001b3ULL;
      }
    }
  }
  return h;
}

}  // namespace msqnet
