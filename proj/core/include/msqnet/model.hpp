#pragma once

#include <string>
#include <vector>

#include "msqnet/decoder.hpp"
#include "msqnet/encoder.hpp"
#include "msqnet/query.hpp"
#include "msqnet/tensor.hpp"
#include "msqnet/video.hpp"

namespace msqnet {

struct ModelConfig {
  EncoderConfig encoder;
  DecoderConfig decoder;
  FrameEmbedderConfig frame;
  TextEmbedder::Mode text_mode = TextEmbedder::Mode::kHashed;
  std::uint64_t text_seed = 0;
  bool text_init = true;   // initialize Q_l from class-name embeddings
  bool mmq = true;         // fuse the video embedding into the queries
  bool freeze_frame_embedder = false;
  bool shared_head = false;  // one readout row for all classes (transfers across vocabularies)
  void validate() const;
  TextEmbedder text_embedder() const {
    return TextEmbedder{text_mode, decoder.model_dim, text_seed};
  }
};

// Full model: video encoder, query encoder, decoder, classification head.
struct MsqnetModel {
  ModelConfig cfg;
  std::vector<std::string> class_names;
  EncoderParams encoder;
  FrameEmbedderParams frame_embedder;
  Tensor label_queries;  // Q_l [K x D]
  Tensor fuse_proj;      // W_que [D x (D + D'')]
  Tensor mem_pos;        // [(T+1) x D]
  DecoderParams decoder;
  ClassificationHead head;

  static MsqnetModel init(const ModelConfig& cfg, std::vector<std::string> class_names,
                          std::uint64_t seed);

  int num_classes() const { return static_cast<int>(class_names.size()); }

  // Trainable parameters in a stable order. Skips the frame embedder and
  // fusion when the multi-modal query path is disabled, and the frame
  // embedder when frozen.
  std::vector<ParamRef> parameters() const;
  // Every tensor, for checkpointing; a superset of parameters().
  std::vector<ParamRef> checkpoint_tensors() const;

  struct Output {
    EncodedVideo memory;
    DecoderTrace trace;
    Tensor final_queries;  // [K x D], after the final norm
    Tensor logits;         // [K]
    Tensor video_feature;  // [D], mean of the frame memory rows (pre-decoder)
  };

  Output forward(const Video& video, EncoderAttnCapture* enc_capture = nullptr) const;

  // Evaluation view over a different class vocabulary: encoder, decoder and
  // head tensors are shared; label queries come from the text embedder (or a
  // fresh seeded init when text_init is off) and the query position table is
  // re-drawn from its init law. A non-shared head is re-drawn too, since its
  // per-class rows cannot transfer across vocabularies.
  MsqnetModel with_classes(std::vector<std::string> names, std::uint64_t reinit_seed) const;
};

std::uint64_t parameter_checksum(const std::vector<ParamRef>& params);

}  // namespace msqnet
