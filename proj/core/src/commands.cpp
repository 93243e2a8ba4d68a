#include "msqnet/commands.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "msqnet/checkpoint.hpp"
#include "msqnet/experiments.hpp"
#include "msqnet/rollout.hpp"

namespace msqnet {

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir = "out";
  std::int64_t seed = -1;  // < 0 keeps the config's seed
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "JSON experiment config");
  cmd->add_option("--seed", args.seed, "override the config seed");
  cmd->add_option("--out", args.out_dir, "output directory");
}

Config load_config(const CommonArgs& args) {
  Config cfg = args.config_path.empty() ? Config::from_json(nlohmann::json::object())
                                        : Config::from_file(args.config_path);
  if (args.seed >= 0) {
    cfg.seed = static_cast<std::uint64_t>(args.seed);
    cfg.train.seed = cfg.seed;
    cfg.train.config_hash = cfg.canonical_hash();
  }
  return cfg;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write '" + path + "'");
  os << text;
}

std::map<std::string, std::string> config_echo(const Config& cfg) {
  std::map<std::string, std::string> echo;
  const nlohmann::json j = cfg.to_json();
  for (const auto& [key, value] : j.items()) echo[key] = value.dump();
  return echo;
}

Dataset eval_dataset(const Config& cfg) {
  SplitSpec sup;
  return build_dataset(sup, cfg.classes, 0, cfg.eval_videos, cfg.data, cfg.data_seed()).second;
}

int cmd_train(const CommonArgs& args) {
  Config cfg = load_config(args);
  SupervisedRun run = run_supervised(cfg);
  std::filesystem::create_directories(args.out_dir);
  write_text(args.out_dir + "/run_log.txt", run.record.serialize(config_echo(cfg)));
  write_text(args.out_dir + "/metrics.txt", format_metric_report(run.record.final_metrics));
  write_text(args.out_dir + "/config.json", cfg.to_json().dump(2) + "\n");
  save_checkpoint(args.out_dir + "/model.msqk", run.model.checkpoint_tensors());
  std::cout << format_metric_report(run.record.final_metrics);
  return kExitOk;
}

int cmd_eval(const CommonArgs& args, const std::string& checkpoint) {
  Config cfg = load_config(args);
  MsqnetModel model = MsqnetModel::init(cfg.model, cfg.classes, cfg.init_seed());
  load_checkpoint(checkpoint, model.checkpoint_tensors());
  auto metrics = evaluate(model, eval_dataset(cfg));
  std::filesystem::create_directories(args.out_dir);
  write_text(args.out_dir + "/metrics.txt", format_metric_report(metrics));
  std::cout << format_metric_report(metrics);
  return kExitOk;
}

int cmd_zeroshot(const CommonArgs& args, double seen, int splits, const std::string& variant) {
  Config cfg = load_config(args);
  if (seen > 0.0) cfg.seen_fraction = seen;
  if (splits > 0) cfg.n_splits = splits;
  cfg.validate();

  std::vector<ZeroShotVariant> variants;
  if (variant == "ladder") {
    variants = {ZeroShotVariant::kVanilla, ZeroShotVariant::kTextInit, ZeroShotVariant::kFull};
  } else if (variant == "vanilla") {
    variants = {ZeroShotVariant::kVanilla};
  } else if (variant == "text_init") {
    variants = {ZeroShotVariant::kTextInit};
  } else if (variant == "full") {
    variants = {ZeroShotVariant::kFull};
  } else {
    throw config_error("zeroshot: unknown variant '" + variant + "'");
  }

  std::filesystem::create_directories(args.out_dir);
  std::string summary = "variant,mean_map,std_map,above_null\n";
  char buf[96];
  for (ZeroShotVariant v : variants) {
    ZeroShotReport report = run_zero_shot(cfg, v);
    for (const ZeroShotSplitResult& s : report.splits) {
      std::snprintf(buf, sizeof buf, "%s/split_%s_%02d.txt", args.out_dir.c_str(),
                    variant_name(v).c_str(), s.split_index);
      write_text(buf, format_metric_report({{"map", s.map}, {"null95", s.null95},
                                            {"above_null", s.above_null ? 1.0 : 0.0}}));
    }
    std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%d/%zu\n", variant_name(v).c_str(), report.mean_map,
                  report.std_map, report.above_null_count, report.splits.size());
    summary += buf;
  }
  write_text(args.out_dir + "/summary.txt", summary);
  std::cout << summary;
  return kExitOk;
}

int cmd_ablate(const CommonArgs& args, int seeds) {
  Config cfg = load_config(args);
  const int n = seeds > 0 ? seeds : cfg.ablation_seeds;
  AblationReport report = ablation_suite(cfg, n);
  std::filesystem::create_directories(args.out_dir);
  write_text(args.out_dir + "/ablation.csv", report.render());
  std::cout << report.render();
  return kExitOk;
}

int cmd_rollout(const CommonArgs& args, const std::string& checkpoint, int video_index) {
  Config cfg = load_config(args);
  MsqnetModel model = MsqnetModel::init(cfg.model, cfg.classes, cfg.init_seed());
  if (!checkpoint.empty()) load_checkpoint(checkpoint, model.checkpoint_tensors());
  Dataset eval = eval_dataset(cfg);
  if (video_index < 0 || video_index >= static_cast<int>(eval.videos.size())) {
    throw config_error("rollout: video index out of range");
  }
  NoGradGuard ng;
  EncoderAttnCapture capture;
  auto out = model.forward(eval.videos[static_cast<std::size_t>(video_index)].pixels, &capture);
  RolloutMap map = attention_rollout(out.trace, &capture, cfg.model.encoder, model.class_names);
  export_heatmap(map, args.out_dir);
  std::cout << "wrote " << map.memory_heat.size() * static_cast<std::size_t>(map.frames)
            << " heatmaps to " << args.out_dir << "\n";
  return kExitOk;
}

int cmd_export_embeddings(const CommonArgs& args, const std::string& checkpoint) {
  Config cfg = load_config(args);
  MsqnetModel model = MsqnetModel::init(cfg.model, cfg.classes, cfg.init_seed());
  if (!checkpoint.empty()) load_checkpoint(checkpoint, model.checkpoint_tensors());
  std::filesystem::create_directories(args.out_dir);
  const std::string path = args.out_dir + "/embeddings.csv";
  export_embeddings(model, eval_dataset(cfg), path);
  std::cout << "wrote " << path << "\n";
  return kExitOk;
}

int cmd_gradcheck(const CommonArgs& args) {
  Config cfg = load_config(args);
  GradCheckReport report = model_grad_check(cfg);
  std::printf("max_rel_err=%.3e worst=%s[%d] coords=%zu tol=%.1e\n", report.max_rel_err,
              report.worst_param.c_str(), report.worst_index, report.coords_checked, report.tol);
  return report.passed() ? kExitOk : 1;
}

}  // namespace

GradCheckReport model_grad_check(const Config& cfg, int batch_videos) {
  SplitSpec sup;
  auto [train_set, eval_set] = build_dataset(sup, cfg.classes, batch_videos, 0, cfg.data, cfg.data_seed());
  MsqnetModel model = MsqnetModel::init(cfg.model, cfg.classes, cfg.init_seed());
  const int k = model.num_classes();

  Tensor targets({batch_videos, k});
  for (int i = 0; i < batch_videos; ++i)
    for (int c = 0; c < k; ++c) targets.at(i, c) = train_set.videos[static_cast<std::size_t>(i)].labels[static_cast<std::size_t>(c)];

  auto loss = [&] {
    std::vector<Tensor> rows;
    for (int i = 0; i < batch_videos; ++i) {
      rows.push_back(reshape(model.forward(train_set.videos[static_cast<std::size_t>(i)].pixels).logits, {1, k}));
    }
    return classification_loss(concat_rows(rows), targets, cfg.model.decoder.task_mode);
  };
  return grad_check(loss, model.parameters(), cfg.gradcheck_h, cfg.gradcheck_tol);
}

int run_command(const std::vector<std::string>& args) {
  CLI::App app{"MSQNet-style multi-label action recognizer on synthetic video"};
  app.require_subcommand(1);

  CommonArgs train_args, eval_args, zs_args, ab_args, ro_args, ex_args, gc_args;
  std::string eval_ckpt, ro_ckpt, ex_ckpt;
  double zs_seen = -1.0;
  int zs_splits = -1, ab_seeds = -1, ro_video = 0;
  std::string zs_variant = "full";

  CLI::App* train_cmd = app.add_subcommand("train", "train a model and save a checkpoint");
  add_common(train_cmd, train_args);
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the eval split");
  add_common(eval_cmd, eval_args);
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint to load")->required();
  CLI::App* zs_cmd = app.add_subcommand("zeroshot", "disjoint-class splits with a permutation null");
  add_common(zs_cmd, zs_args);
  zs_cmd->add_option("--seen", zs_seen, "seen class fraction (0.5 or 0.75)");
  zs_cmd->add_option("--splits", zs_splits, "number of random splits");
  zs_cmd->add_option("--variant", zs_variant, "vanilla | text_init | full | ladder");
  CLI::App* ab_cmd = app.add_subcommand("ablate", "query-fusion and frame-count grids");
  add_common(ab_cmd, ab_args);
  ab_cmd->add_option("--seeds", ab_seeds, "seeds per ablation cell");
  CLI::App* ro_cmd = app.add_subcommand("rollout", "export attention rollout heatmaps");
  add_common(ro_cmd, ro_args);
  ro_cmd->add_option("--checkpoint", ro_ckpt, "checkpoint to load (fresh init otherwise)");
  ro_cmd->add_option("--video", ro_video, "eval video index to visualize");
  CLI::App* ex_cmd = app.add_subcommand("export-embeddings", "dump pre/post-decoder embeddings as CSV");
  add_common(ex_cmd, ex_args);
  ex_cmd->add_option("--checkpoint", ex_ckpt, "checkpoint to load (fresh init otherwise)");
  CLI::App* gc_cmd = app.add_subcommand("gradcheck", "compare tape gradients with central differences");
  add_common(gc_cmd, gc_args);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(train_args);
    if (eval_cmd->parsed()) return cmd_eval(eval_args, eval_ckpt);
    if (zs_cmd->parsed()) return cmd_zeroshot(zs_args, zs_seen, zs_splits, zs_variant);
    if (ab_cmd->parsed()) return cmd_ablate(ab_args, ab_seeds);
    if (ro_cmd->parsed()) return cmd_rollout(ro_args, ro_ckpt, ro_video);
    if (ex_cmd->parsed()) return cmd_export_embeddings(ex_args, ex_ckpt);
    if (gc_cmd->parsed()) return cmd_gradcheck(gc_args);
  } catch (const config_error& e) {
    std::cerr << e.what() << "\n";
    return kExitConfig;
  } catch (const numeric_error& e) {
    std::cerr << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
  return kExitConfig;
}

}  // namespace msqnet
