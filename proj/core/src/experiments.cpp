#include "msqnet/experiments.hpp"

#include <algorithm>
#include <cmath>

namespace msqnet {

SupervisedRun run_supervised(const Config& cfg) {
  SplitSpec sup;
  auto [train_set, eval_set] = build_dataset(sup, cfg.classes, cfg.train_videos, cfg.eval_videos,
                                             cfg.data, cfg.data_seed());
  MsqnetModel model = MsqnetModel::init(cfg.model, cfg.classes, cfg.init_seed());
  RunRecord record = train(model, train_set, eval_set, cfg.train);
  return {std::move(model), std::move(record), std::move(train_set), std::move(eval_set)};
}

std::string variant_name(ZeroShotVariant v) {
  switch (v) {
    case ZeroShotVariant::kVanilla: return "vanilla";
    case ZeroShotVariant::kTextInit: return "text_init";
    case ZeroShotVariant::kFull: return "full";
  }
  return "?";
}

namespace {

double percentile95(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const std::size_t idx = static_cast<std::size_t>(
      std::ceil(0.95 * static_cast<double>(values.size()))) - 1;
  return values[std::min(idx, values.size() - 1)];
}

}  // namespace

ZeroShotReport run_zero_shot(const Config& cfg, ZeroShotVariant variant, int null_resamples) {
  ZeroShotReport report;
  report.variant = variant;

  ModelConfig mc = cfg.model;
  mc.shared_head = true;  // per-class readout rows cannot transfer to unseen classes
  switch (variant) {
    case ZeroShotVariant::kVanilla:
      mc.text_init = false;
      mc.mmq = false;
      break;
    case ZeroShotVariant::kTextInit:
      mc.text_init = true;
      mc.mmq = false;
      break;
    case ZeroShotVariant::kFull:
      mc.text_init = true;
      mc.mmq = true;
      break;
  }

  const int k = static_cast<int>(cfg.classes.size());
  auto splits = make_zero_shot_splits(k, cfg.seen_fraction, cfg.n_splits, mix_seed(cfg.seed, 0x5711));

  for (int si = 0; si < static_cast<int>(splits.size()); ++si) {
    const SplitSpec& split = splits[static_cast<std::size_t>(si)];
    auto [train_set, eval_set] =
        build_dataset(split, cfg.classes, cfg.train_videos, cfg.eval_videos, cfg.data,
                      mix_seed(cfg.data_seed(), static_cast<std::uint64_t>(si)));

    MsqnetModel model =
        MsqnetModel::init(mc, train_set.class_names, mix_seed(cfg.init_seed(), static_cast<std::uint64_t>(si)));
    TrainConfig tc = cfg.train;
    tc.eval_every = 0;  // unseen metrics are computed after training only
    train(model, train_set, Dataset{}, tc);

    MsqnetModel eval_view = model.with_classes(
        eval_set.class_names, mix_seed(cfg.seed, 0xeea1 + static_cast<std::uint64_t>(si)));
    EvalBatch batch = score_dataset(eval_view, eval_set);

    ZeroShotSplitResult result;
    result.split_index = si;
    result.unseen_classes = eval_set.class_names;
    result.map = mean_ap(batch);

    // label-permutation null: shuffle the video-to-labelset assignment
    const int m = batch.truth.rows(), kc = batch.truth.cols();
    Rng null_rng(mix_seed(cfg.seed, 0x9011 + static_cast<std::uint64_t>(si)));
    std::vector<double> null_maps;
    null_maps.reserve(static_cast<std::size_t>(null_resamples));
    std::vector<int> order(static_cast<std::size_t>(m));
    for (int r = 0; r < null_resamples; ++r) {
      for (int i = 0; i < m; ++i) order[static_cast<std::size_t>(i)] = i;
      for (int i = m - 1; i > 0; --i) {
        const int j = static_cast<int>(null_rng.uniform_int(static_cast<std::uint64_t>(i + 1)));
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
      }
      EvalBatch null_batch{batch.scores, Tensor({m, kc})};
      for (int i = 0; i < m; ++i)
        for (int c = 0; c < kc; ++c)
          null_batch.truth.at(i, c) = batch.truth.at(order[static_cast<std::size_t>(i)], c);
      null_maps.push_back(mean_ap(null_batch));
    }
    result.null95 = percentile95(std::move(null_maps));
    result.above_null = result.map > result.null95;
    report.above_null_count += result.above_null ? 1 : 0;
    report.splits.push_back(std::move(result));
  }

  double total = 0.0;
  for (const auto& s : report.splits) total += s.map;
  report.mean_map = total / static_cast<double>(report.splits.size());
  double var = 0.0;
  for (const auto& s : report.splits) var += (s.map - report.mean_map) * (s.map - report.mean_map);
  report.std_map = std::sqrt(var / static_cast<double>(report.splits.size()));
  return report;
}

namespace {

double primary_metric(const RunRecord& record) {
  for (const auto& [name, value] : record.final_metrics) {
    if (name == "map" || name == "top1_accuracy") return value;
  }
  throw std::runtime_error("ablation: run record carries no primary metric");
}

AblationCell summarize(std::string name, std::vector<double> values) {
  AblationCell cell;
  cell.name = std::move(name);
  cell.per_seed = std::move(values);
  for (double v : cell.per_seed) cell.mean += v;
  cell.mean /= static_cast<double>(cell.per_seed.size());
  double var = 0.0;
  for (double v : cell.per_seed) var += (v - cell.mean) * (v - cell.mean);
  cell.stddev = std::sqrt(var / static_cast<double>(cell.per_seed.size()));
  return cell;
}

}  // namespace

AblationReport ablation_suite(const Config& base, int n_seeds) {
  if (n_seeds < 1) throw std::invalid_argument("ablation_suite: n_seeds must be >= 1");
  AblationReport report;

  struct QueryCell {
    const char* name;
    bool mmq, text_init;
  };
  const QueryCell query_grid[] = {
      {"mmq_on_text_on", true, true},
      {"mmq_on_text_off", true, false},
      {"mmq_off_text_on", false, true},
      {"mmq_off_text_off", false, false},
  };
  for (const QueryCell& qc : query_grid) {
    std::vector<double> values;
    for (int s = 0; s < n_seeds; ++s) {
      Config cfg = base;
      cfg.model.mmq = qc.mmq;
      cfg.model.text_init = qc.text_init;
      cfg.seed = mix_seed(base.seed, static_cast<std::uint64_t>(s));
      cfg.train.seed = cfg.seed;
      values.push_back(primary_metric(run_supervised(cfg).record));
    }
    report.cells.push_back(summarize(qc.name, std::move(values)));
  }

  for (int frames : {8, 10, 16}) {
    std::vector<double> values;
    for (int s = 0; s < n_seeds; ++s) {
      Config cfg = base;
      cfg.model.encoder.frames = frames;
      cfg.data.frames = frames;
      cfg.seed = mix_seed(base.seed, static_cast<std::uint64_t>(s));
      cfg.train.seed = cfg.seed;
      values.push_back(primary_metric(run_supervised(cfg).record));
    }
    report.cells.push_back(summarize("frames_" + std::to_string(frames), std::move(values)));
  }
  return report;
}

std::string AblationReport::render() const {
  std::string out = "cell,mean,std,per_seed\n";
  char buf[64];
  for (const AblationCell& c : cells) {
    out += c.name;
    std::snprintf(buf, sizeof buf, ",%.6f,%.6f", c.mean, c.stddev);
    out += buf;
    for (double v : c.per_seed) {
      std::snprintf(buf, sizeof buf, ",%.6f", v);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

}  // namespace msqnet
