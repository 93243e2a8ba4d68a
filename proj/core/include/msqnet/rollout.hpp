#pragma once

#include <string>
#include <vector>

#include "msqnet/data.hpp"
#include "msqnet/decoder.hpp"
#include "msqnet/encoder.hpp"
#include "msqnet/model.hpp"

namespace msqnet {

// Per-class attention heat. memory_heat covers the T+1 memory positions;
// spatial maps (one per class per frame over the N patches) exist only when
// encoder attentions were retained. All maps are min-max normalized to
// [0,1]; a constant map normalizes to all ones.
struct RolloutMap {
  int frames = 0;
  int grid_h = 0, grid_w = 0;  // patch grid of a frame
  std::vector<std::string> class_names;
  std::vector<std::vector<double>> memory_heat;                // [class][T+1]
  std::vector<std::vector<std::vector<double>>> spatial;       // [class][frame][patch]
};

// Head-averaged cross-attention rows, combined across decoder layers by
// elementwise averaging (decoder layers share a fixed memory axis, so the
// matrix-product form of rollout does not apply). Pre-normalization values.
std::vector<std::vector<double>> decoder_heat(const DecoderTrace& trace);

// Token-to-token encoder rollout: the ordered product of
// row_normalize(0.5 * A + 0.5 * I) over the retained passes. Returns a
// row-major [tokens x tokens] matrix.
std::vector<double> encoder_rollout(const EncoderAttnCapture& capture);

RolloutMap attention_rollout(const DecoderTrace& trace, const EncoderAttnCapture* encoder_attns,
                             const EncoderConfig& cfg, const std::vector<std::string>& class_names);

// One PGM (P5, maxval 255) per class per frame from the spatial maps, or a
// 1 x (T+1) strip per class when only memory heat exists, plus index.txt.
void export_heatmap(const RolloutMap& map, const std::string& dir);

// Parses a P5 PGM back; used as the round-trip oracle.
std::vector<int> read_pgm(const std::string& path, int& width, int& height);

// Fig.-6-style dump: one row per video with the pre-decoder pooled video
// embedding (kind "a"), and one row per (video, positive class) with that
// class's post-decoder query state (kind "b").
void export_embeddings(const MsqnetModel& model, const Dataset& dataset, const std::string& path);

}  // namespace msqnet
