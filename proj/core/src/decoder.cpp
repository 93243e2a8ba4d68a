#include "msqnet/decoder.hpp"

#include <cmath>
#include <stdexcept>

namespace msqnet {

void DecoderConfig::validate() const {
  if (layers < 1) throw std::invalid_argument("decoder config: layers must be >= 1");
  if (heads < 1 || model_dim % heads != 0) {
    throw std::invalid_argument("decoder config: model_dim " + std::to_string(model_dim) +
                                " must be divisible by heads " + std::to_string(heads));
  }
}

DecoderLayerParams DecoderLayerParams::init(const DecoderConfig& cfg, Rng& rng) {
  DecoderLayerParams l;
  l.ln_self = LayerNormParams::init(cfg.model_dim);
  l.self_attn = AttentionParams::init(cfg.model_dim, rng);
  l.ln_cross = LayerNormParams::init(cfg.model_dim);
  l.cross_attn = AttentionParams::init(cfg.model_dim, rng);
  l.ln_ffn = LayerNormParams::init(cfg.model_dim);
  l.ffn = FfnParams::init(cfg.model_dim, cfg.ffn(), rng);
  return l;
}

void DecoderLayerParams::collect(const std::string& prefix, std::vector<ParamRef>& out) const {
  ln_self.collect(prefix + ".ln_self", out);
  self_attn.collect(prefix + ".self_attn", out);
  ln_cross.collect(prefix + ".ln_cross", out);
  cross_attn.collect(prefix + ".cross_attn", out);
  ln_ffn.collect(prefix + ".ln_ffn", out);
  ffn.collect(prefix + ".ffn", out);
}

DecoderParams DecoderParams::init(const DecoderConfig& cfg, int num_classes, Rng& rng) {
  cfg.validate();
  DecoderParams p;
  p.layers.reserve(static_cast<std::size_t>(cfg.layers));
  for (int i = 0; i < cfg.layers; ++i) p.layers.push_back(DecoderLayerParams::init(cfg, rng));
  p.query_pos = Tensor::randn({num_classes, cfg.model_dim}, rng, 0.02).set_requires_grad(true);
  p.final_ln = LayerNormParams::init(cfg.model_dim);
  return p;
}

void DecoderParams::collect(std::vector<ParamRef>& out) const {
  for (std::size_t i = 0; i < layers.size(); ++i) layers[i].collect("dec." + std::to_string(i), out);
  out.push_back({"query_pos", query_pos});
  final_ln.collect("dec.final_ln", out);
}

Tensor decoder_layer(const Tensor& q_prev, const EncodedVideo& memory, const Tensor& query_pos,
                     const DecoderLayerParams& params, int heads, AttnWeights* capture) {
  if (q_prev.shape() != query_pos.shape()) {
    throw std::invalid_argument("decoder_layer: query_pos " + shape_str(query_pos.shape()) +
                                " does not match queries " + shape_str(q_prev.shape()));
  }
  if (memory.memory.cols() != q_prev.cols()) {
    throw std::invalid_argument("decoder_layer: memory width " + shape_str(memory.memory.shape()) +
                                " does not match query width " + shape_str(q_prev.shape()));
  }
  Tensor x = q_prev;

  Tensor n1 = apply_ln(x, params.ln_self);
  Tensor qk = add(n1, query_pos);
  x = add(x, multi_head_attention(qk, qk, n1, params.self_attn, heads));

  Tensor n2 = apply_ln(x, params.ln_cross);
  Tensor q2 = add(n2, query_pos);
  Tensor keys = add(memory.memory, memory.mem_pos);
  x = add(x, multi_head_attention(q2, keys, memory.memory, params.cross_attn, heads, capture));

  x = add(x, ffn(apply_ln(x, params.ln_ffn), params.ffn));
  return x;
}

DecoderTrace decode(const Tensor& q0, const EncodedVideo& memory, const DecoderConfig& cfg,
                    const DecoderParams& params) {
  DecoderTrace trace;
  Tensor q = q0;
  for (const DecoderLayerParams& layer : params.layers) {
    AttnWeights weights;
    q = decoder_layer(q, memory, params.query_pos, layer, cfg.heads, &weights);
    trace.layer_queries.push_back(q);
    trace.cross_attn.push_back(std::move(weights));
  }
  return trace;
}

ClassificationHead ClassificationHead::init(int num_classes, int dim, bool shared, Rng& rng) {
  ClassificationHead h;
  h.shared = shared;
  const int rows = shared ? 1 : num_classes;
  h.W = Tensor::randn({rows, dim}, rng, 1.0 / std::sqrt(static_cast<double>(dim))).set_requires_grad(true);
  h.b = Tensor({rows}).set_requires_grad(true);
  return h;
}

void ClassificationHead::collect(std::vector<ParamRef>& out) const {
  out.push_back({"W", W});
  out.push_back({"b", b});
}

Tensor class_logits(const Tensor& q_final, const ClassificationHead& head) {
  if (head.shared) {
    return reshape(add_row(matmul_nt(q_final, head.W), head.b), {q_final.rows()});
  }
  if (q_final.rows() != head.W.rows()) {
    throw std::invalid_argument("class_logits: head rows " + shape_str(head.W.shape()) +
                                " do not match query count " + shape_str(q_final.shape()));
  }
  return add(rowwise_dot(q_final, head.W), head.b);
}

Tensor classify(const Tensor& q_final, const ClassificationHead& head, TaskMode mode) {
  Tensor logits = class_logits(q_final, head);
  return mode == TaskMode::kSingleLabel ? softmax(logits, 0) : sigmoid(logits);
}

Tensor classification_loss(const Tensor& logits, const Tensor& targets, TaskMode mode) {
  if (logits.shape() != targets.shape()) {
    throw std::invalid_argument("classification_loss: logits " + shape_str(logits.shape()) +
                                " vs targets " + shape_str(targets.shape()));
  }
  if (mode == TaskMode::kSingleLabel) {
    for (int i = 0; i < targets.rows(); ++i) {
      int positives = 0;
      for (int j = 0; j < targets.cols(); ++j) positives += targets.at(i, j) != 0.0 ? 1 : 0;
      if (positives != 1) {
        throw std::invalid_argument("classification_loss: single-label contract violated, row " +
                                    std::to_string(i) + " has " + std::to_string(positives) + " positives");
      }
    }
    return softmax_xent_mean(logits, targets);
  }
  return bce_with_logits_mean(logits, targets);
}

}  // namespace msqnet
