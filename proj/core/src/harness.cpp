#include "msqnet/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace msqnet {

AdamState AdamState::init(const std::vector<ParamRef>& params) {
  AdamState s;
  s.m.reserve(params.size());
  s.v.reserve(params.size());
  for (const ParamRef& p : params) {
    s.m.emplace_back(static_cast<std::size_t>(p.value.size()), 0.0);
    s.v.emplace_back(static_cast<std::size_t>(p.value.size()), 0.0);
  }
  return s;
}

void adam_step(const std::vector<ParamRef>& params, AdamState& state, double lr,
               const AdamConfig& cfg) {
  if (state.m.size() != params.size()) {
    throw std::invalid_argument("adam_step: state does not match parameter list");
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor t = params[pi].value;
    auto grad = t.grad_mut();
    auto data = t.data();
    auto& m = state.m[pi];
    auto& v = state.v[pi];
    if (grad.size() != data.size()) {
      throw std::invalid_argument("adam_step: parameter '" + params[pi].name + "' has no gradient buffer");
    }
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double g = grad[i];
      if (!std::isfinite(g)) {
        throw numeric_error("adam_step: non-finite gradient in parameter '" + params[pi].name + "' at index " +
                            std::to_string(i));
      }
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      data[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

double cosine_lr(std::int64_t step, std::int64_t total_steps, double lr0) {
  if (step < 0 || step > total_steps || total_steps < 1) {
    throw std::invalid_argument("cosine_lr: step must lie in [0, total_steps]");
  }
  return lr0 * 0.5 * (1.0 + std::cos(3.141592653589793 * static_cast<double>(step) / static_cast<double>(total_steps)));
}

double global_grad_norm(const std::vector<ParamRef>& params) {
  double total = 0.0;
  for (const ParamRef& p : params) {
    for (double g : p.value.grad()) total += g * g;
  }
  return std::sqrt(total);
}

void clip_gradients(const std::vector<ParamRef>& params, double max_norm) {
  if (max_norm <= 0.0) return;
  const double norm = global_grad_norm(params);
  if (norm <= max_norm) return;
  const double scale = max_norm / norm;
  for (const ParamRef& p : params) {
    Tensor t = p.value;
    for (double& g : t.grad_mut()) g *= scale;
  }
}

void zero_gradients(const std::vector<ParamRef>& params) {
  for (const ParamRef& p : params) {
    Tensor t = p.value;
    t.zero_grad();
  }
}

std::string RunRecord::serialize(const std::map<std::string, std::string>& config_echo) const {
  std::string out;
  for (const auto& [key, value] : config_echo) out += "# " + key + "=" + value + "\n";
  out += "# config_hash=" + std::to_string(config_hash) + "\n";
  out += "# param_checksum=" + std::to_string(param_checksum) + "\n";
  char buf[64];
  for (const EpochRecord& e : epochs) {
    std::snprintf(buf, sizeof buf, "%d,%.9f", e.epoch, e.loss);
    out += buf;
    for (const auto& [name, value] : e.metrics) {
      std::snprintf(buf, sizeof buf, ",%s=%.6f", name.c_str(), value);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

EvalBatch score_dataset(const MsqnetModel& model, const Dataset& dataset) {
  NoGradGuard ng;
  const int m = static_cast<int>(dataset.videos.size());
  const int k = model.num_classes();
  EvalBatch batch{Tensor({m, k}), Tensor({m, k})};
  for (int i = 0; i < m; ++i) {
    const SyntheticVideo& v = dataset.videos[static_cast<std::size_t>(i)];
    auto out = model.forward(v.pixels);
    Tensor p = model.cfg.decoder.task_mode == TaskMode::kSingleLabel ? softmax(out.logits, 0)
                                                                     : sigmoid(out.logits);
    for (int c = 0; c < k; ++c) {
      batch.scores.at(i, c) = p.at(c);
      batch.truth.at(i, c) = v.labels[static_cast<std::size_t>(c)];
    }
  }
  return batch;
}

std::vector<std::pair<std::string, double>> evaluate(const MsqnetModel& model, const Dataset& eval_set) {
  if (eval_set.videos.empty()) throw std::invalid_argument("evaluate: empty evaluation set");
  EvalBatch batch = score_dataset(model, eval_set);
  std::vector<std::pair<std::string, double>> metrics;
  if (model.cfg.decoder.task_mode == TaskMode::kSingleLabel) {
    metrics.emplace_back("top1_accuracy", top1_accuracy(batch));
  } else {
    metrics.emplace_back("map", mean_ap(batch));
    metrics.emplace_back("multilabel_accuracy", multilabel_accuracy(batch));
  }
  return metrics;
}

namespace {

Video augment_video(const Video& in, Rng& rng, const TrainConfig& cfg) {
  Video out = in;
  if (cfg.augment_shift) {
    const int dy = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(in.height)));
    const int dx = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(in.width)));
    for (int t = 0; t < in.frames; ++t)
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < in.height; ++y)
          for (int x = 0; x < in.width; ++x)
            out.at(t, c, y, x) = in.at(t, c, (y + dy) % in.height, (x + dx) % in.width);
  }
  if (cfg.augment_noise > 0.0) {
    for (double& p : out.pixels) p = std::clamp(p + rng.normal(0.0, cfg.augment_noise), 0.0, 1.0);
  }
  return out;
}

}  // namespace

RunRecord train(MsqnetModel& model, const Dataset& train_set, const Dataset& eval_set,
                const TrainConfig& cfg) {
  if (cfg.epochs < 0 || cfg.batch_size < 1) throw std::invalid_argument("train: bad epochs/batch_size");
  const auto t0 = std::chrono::steady_clock::now();
  RunRecord record;
  record.config_hash = cfg.config_hash;

  std::vector<ParamRef> params = model.parameters();
  AdamState state = AdamState::init(params);
  const int n = static_cast<int>(train_set.videos.size());
  const int k = model.num_classes();
  const std::int64_t batches_per_epoch = n == 0 ? 0 : (n + cfg.batch_size - 1) / cfg.batch_size;
  const std::int64_t total_steps = std::max<std::int64_t>(1, batches_per_epoch * cfg.epochs);

  std::int64_t global_step = 0;
  for (int epoch = 0; epoch < cfg.epochs && n > 0; ++epoch) {
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    Rng shuffle(mix_seed(cfg.seed, 0xe90c + static_cast<std::uint64_t>(epoch)));
    for (int i = n - 1; i > 0; --i) {
      const int j = static_cast<int>(shuffle.uniform_int(static_cast<std::uint64_t>(i + 1)));
      std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }

    double epoch_loss = 0.0;
    for (std::int64_t b = 0; b < batches_per_epoch; ++b) {
      const int lo = static_cast<int>(b) * cfg.batch_size;
      const int hi = std::min(n, lo + cfg.batch_size);
      std::vector<Tensor> logit_rows;
      Tensor targets({hi - lo, k});
      const bool augment = cfg.augment_shift || cfg.augment_noise > 0.0;
      for (int i = lo; i < hi; ++i) {
        const int vid = order[static_cast<std::size_t>(i)];
        const SyntheticVideo& v = train_set.videos[static_cast<std::size_t>(vid)];
        if (augment) {
          Rng arng(mix_seed(cfg.seed, 0xa06 + (static_cast<std::uint64_t>(epoch) << 20) +
                                          static_cast<std::uint64_t>(vid)));
          auto out = model.forward(augment_video(v.pixels, arng, cfg));
          logit_rows.push_back(reshape(out.logits, {1, k}));
        } else {
          auto out = model.forward(v.pixels);
          logit_rows.push_back(reshape(out.logits, {1, k}));
        }
        for (int c = 0; c < k; ++c) targets.at(i - lo, c) = v.labels[static_cast<std::size_t>(c)];
      }
      Tensor loss = classification_loss(concat_rows(logit_rows), targets, model.cfg.decoder.task_mode);
      const double loss_value = loss.value();
      if (!std::isfinite(loss_value)) {
        throw numeric_error("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(b) + ", first video seed " +
                            std::to_string(train_set.videos[static_cast<std::size_t>(order[static_cast<std::size_t>(lo)])].seed));
      }
      loss.backward();
      clip_gradients(params, cfg.grad_clip);
      adam_step(params, state, cosine_lr(global_step, total_steps, cfg.lr0));
      zero_gradients(params);
      epoch_loss += loss_value * (hi - lo);
      ++global_step;
    }
    epoch_loss /= n;

    EpochRecord er;
    er.epoch = epoch;
    er.loss = epoch_loss;
    const bool last = epoch == cfg.epochs - 1 || (cfg.stop_loss > 0.0 && epoch_loss < cfg.stop_loss);
    if (!eval_set.videos.empty() && cfg.eval_every > 0 && (epoch % cfg.eval_every == 0 || last)) {
      er.metrics = evaluate(model, eval_set);
    }
    record.epochs.push_back(std::move(er));
    if (cfg.stop_loss > 0.0 && epoch_loss < cfg.stop_loss) break;
  }

  if (!eval_set.videos.empty()) {
    record.final_metrics = !record.epochs.empty() && !record.epochs.back().metrics.empty()
                               ? record.epochs.back().metrics
                               : evaluate(model, eval_set);
  }
  record.param_checksum = parameter_checksum(model.checkpoint_tensors());
  record.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return record;
}

}  // namespace msqnet
