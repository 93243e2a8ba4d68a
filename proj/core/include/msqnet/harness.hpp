#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "msqnet/data.hpp"
#include "msqnet/metrics.hpp"
#include "msqnet/model.hpp"

namespace msqnet {

// Raised on NaN losses and non-finite gradients; the CLI maps it to exit 3.
struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::int64_t step = 0;
  std::vector<std::vector<double>> m, v;
  static AdamState init(const std::vector<ParamRef>& params);
};

// Standard bias-corrected Adam update from the parameters' current grads.
// Throws numeric_error naming the parameter on a non-finite gradient.
void adam_step(const std::vector<ParamRef>& params, AdamState& state, double lr,
               const AdamConfig& cfg = {});

// lr0 * 0.5 * (1 + cos(pi * step / total_steps))
double cosine_lr(std::int64_t step, std::int64_t total_steps, double lr0);

double global_grad_norm(const std::vector<ParamRef>& params);
void clip_gradients(const std::vector<ParamRef>& params, double max_norm);
void zero_gradients(const std::vector<ParamRef>& params);

struct TrainConfig {
  int epochs = 100;
  double lr0 = 1e-3;
  int batch_size = 8;
  std::uint64_t seed = 0;
  double grad_clip = 1.0;
  double stop_loss = 0.0;  // > 0 stops once the epoch train loss drops below
  int eval_every = 1;      // epochs between evaluations; <= 0 disables
  // label-preserving training augmentation (never applied at eval):
  // seeded circular spatial shifts and fresh additive pixel noise
  bool augment_shift = false;
  double augment_noise = 0.0;
  std::uint64_t config_hash = 0;
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  std::vector<std::pair<std::string, double>> metrics;  // empty on non-eval epochs
};

struct RunRecord {
  std::vector<EpochRecord> epochs;
  std::vector<std::pair<std::string, double>> final_metrics;
  double wall_seconds = 0.0;
  std::uint64_t config_hash = 0;
  std::uint64_t param_checksum = 0;
  // sorted key=value header lines, then `epoch,loss,metric=value,...` rows
  std::string serialize(const std::map<std::string, std::string>& config_echo) const;
};

// Probability scores for a dataset under the model's task mode.
EvalBatch score_dataset(const MsqnetModel& model, const Dataset& dataset);

// Task-appropriate metrics: mAP + multilabel accuracy for multi-label,
// top-1 accuracy for single-label.
std::vector<std::pair<std::string, double>> evaluate(const MsqnetModel& model, const Dataset& eval_set);

// Minibatch Adam training with the cosine schedule; deterministic in
// cfg.seed. Evaluates on eval_set per eval_every and once at the end.
RunRecord train(MsqnetModel& model, const Dataset& train_set, const Dataset& eval_set,
                const TrainConfig& cfg);

}  // namespace msqnet
