#pragma once

#include <string>
#include <vector>

#include "msqnet/attention.hpp"
#include "msqnet/encoder.hpp"
#include "msqnet/tensor.hpp"

namespace msqnet {

enum class TaskMode { kSingleLabel, kMultiLabel };

struct DecoderConfig {
  int layers = 2;  // L
  int heads = 4;
  int model_dim = 32;  // D
  int ffn_width = 0;   // 0 -> 2 * model_dim
  TaskMode task_mode = TaskMode::kMultiLabel;

  int ffn() const { return ffn_width > 0 ? ffn_width : 2 * model_dim; }
  void validate() const;
};

struct DecoderLayerParams {
  LayerNormParams ln_self, ln_cross, ln_ffn;
  AttentionParams self_attn, cross_attn;
  FfnParams ffn;
  static DecoderLayerParams init(const DecoderConfig& cfg, Rng& rng);
  void collect(const std::string& prefix, std::vector<ParamRef>& out) const;
};

struct DecoderParams {
  std::vector<DecoderLayerParams> layers;
  Tensor query_pos;         // [K x D], added to queries/keys, never to values
  LayerNormParams final_ln; // applied to Q_L before the head
  static DecoderParams init(const DecoderConfig& cfg, int num_classes, Rng& rng);
  void collect(std::vector<ParamRef>& out) const;
};

// Per-layer query states and cross-attention maps (heads x K x (T+1)).
struct DecoderTrace {
  std::vector<Tensor> layer_queries;
  std::vector<AttnWeights> cross_attn;
  const Tensor& final_state() const { return layer_queries.back(); }
};

// One decoder layer: self-attention over position-encoded queries, cross-
// attention against position-encoded memory keys with raw memory values,
// then the FFN; pre-norm and residual around each sublayer.
Tensor decoder_layer(const Tensor& q_prev, const EncodedVideo& memory, const Tensor& query_pos,
                     const DecoderLayerParams& params, int heads, AttnWeights* capture = nullptr);

DecoderTrace decode(const Tensor& q0, const EncodedVideo& memory, const DecoderConfig& cfg,
                    const DecoderParams& params);

// Per-class linear readout: logit_k = W_k . Q[k] + b_k. When `shared` the
// same row (and bias) reads every class, which lets a trained head transfer
// to a disjoint class vocabulary.
struct ClassificationHead {
  Tensor W;  // [K x D], or [1 x D] when shared
  Tensor b;  // [K], or [1] when shared
  bool shared = false;
  static ClassificationHead init(int num_classes, int dim, bool shared, Rng& rng);
  void collect(std::vector<ParamRef>& out) const;
};

Tensor class_logits(const Tensor& q_final, const ClassificationHead& head);
// softmax over classes for single-label, per-class sigmoid for multi-label
Tensor classify(const Tensor& q_final, const ClassificationHead& head, TaskMode mode);

// Batched objective from logits: cross-entropy for single-label rows
// (exactly one positive each), mean binary cross-entropy otherwise.
Tensor classification_loss(const Tensor& logits, const Tensor& targets, TaskMode mode);

}  // namespace msqnet
