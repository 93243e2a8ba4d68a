#include "msqnet/config.hpp"

#include <fstream>

namespace msqnet {

namespace {

[[noreturn]] void bad(const std::string& msg) { throw config_error("config: " + msg); }

template <typename T>
T get_as(const nlohmann::json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception&) {
    bad("field '" + key + "' has the wrong type");
  }
}

}  // namespace

Config Config::from_json(const nlohmann::json& j) {
  if (!j.is_object()) bad("top level must be a JSON object");
  Config c;
  c.model.encoder.frames = 16;  // paper-default frame count
  c.data.frames = 16;
  std::string class_file;

  for (const auto& [key, value] : j.items()) {
    if (key == "frames") {
      c.model.encoder.frames = get_as<int>(value, key);
      c.data.frames = c.model.encoder.frames;
    } else if (key == "height") {
      c.model.encoder.height = get_as<int>(value, key);
      c.data.height = c.model.encoder.height;
    } else if (key == "width") {
      c.model.encoder.width = get_as<int>(value, key);
      c.data.width = c.model.encoder.width;
    } else if (key == "patch") {
      c.model.encoder.patch = get_as<int>(value, key);
      c.model.frame.patch = c.model.encoder.patch;
    } else if (key == "encoder_dim") {
      c.model.encoder.encoder_dim = get_as<int>(value, key);
    } else if (key == "encoder_layers") {
      c.model.encoder.encoder_layers = get_as<int>(value, key);
    } else if (key == "encoder_heads") {
      c.model.encoder.heads = get_as<int>(value, key);
    } else if (key == "attention_mode") {
      const std::string mode = get_as<std::string>(value, key);
      if (mode == "joint") {
        c.model.encoder.attention_mode = AttentionMode::kJoint;
      } else if (mode == "divided") {
        c.model.encoder.attention_mode = AttentionMode::kDivided;
      } else {
        bad("attention_mode must be 'joint' or 'divided', got '" + mode + "'");
      }
    } else if (key == "model_dim") {
      c.model.encoder.model_dim = get_as<int>(value, key);
      c.model.decoder.model_dim = c.model.encoder.model_dim;
    } else if (key == "decoder_layers") {
      c.model.decoder.layers = get_as<int>(value, key);
    } else if (key == "decoder_heads") {
      c.model.decoder.heads = get_as<int>(value, key);
    } else if (key == "ffn_width") {
      c.model.encoder.ffn_width = get_as<int>(value, key);
      c.model.decoder.ffn_width = c.model.encoder.ffn_width;
      c.model.frame.ffn_width = c.model.encoder.ffn_width;
    } else if (key == "video_dim") {
      c.model.frame.video_dim = get_as<int>(value, key);
    } else if (key == "frame_heads") {
      c.model.frame.heads = get_as<int>(value, key);
    } else if (key == "task_mode") {
      const std::string mode = get_as<std::string>(value, key);
      if (mode == "multi_label") {
        c.model.decoder.task_mode = TaskMode::kMultiLabel;
      } else if (mode == "single_label") {
        c.model.decoder.task_mode = TaskMode::kSingleLabel;
      } else {
        bad("task_mode must be 'multi_label' or 'single_label', got '" + mode + "'");
      }
    } else if (key == "text_mode") {
      const std::string mode = get_as<std::string>(value, key);
      if (mode == "hashed") {
        c.model.text_mode = TextEmbedder::Mode::kHashed;
      } else if (mode == "compositional") {
        c.model.text_mode = TextEmbedder::Mode::kCompositional;
      } else {
        bad("text_mode must be 'hashed' or 'compositional', got '" + mode + "'");
      }
    } else if (key == "text_seed") {
      c.model.text_seed = get_as<std::uint64_t>(value, key);
    } else if (key == "text_init") {
      c.model.text_init = get_as<bool>(value, key);
    } else if (key == "mmq") {
      c.model.mmq = get_as<bool>(value, key);
    } else if (key == "freeze_frame_embedder") {
      c.model.freeze_frame_embedder = get_as<bool>(value, key);
    } else if (key == "shared_head") {
      c.model.shared_head = get_as<bool>(value, key);
    } else if (key == "classes") {
      c.classes = get_as<std::vector<std::string>>(value, key);
    } else if (key == "class_file") {
      class_file = get_as<std::string>(value, key);
    } else if (key == "noise_std") {
      c.data.noise_std = get_as<double>(value, key);
    } else if (key == "amplitude") {
      c.data.amplitude = get_as<double>(value, key);
    } else if (key == "label_size_weights") {
      c.data.label_size_weights = get_as<std::vector<double>>(value, key);
    } else if (key == "exclusive_groups") {
      c.data.exclusive_groups = get_as<std::vector<std::vector<std::string>>>(value, key);
    } else if (key == "train_videos") {
      c.train_videos = get_as<int>(value, key);
    } else if (key == "eval_videos") {
      c.eval_videos = get_as<int>(value, key);
    } else if (key == "epochs") {
      c.train.epochs = get_as<int>(value, key);
    } else if (key == "lr0") {
      c.train.lr0 = get_as<double>(value, key);
    } else if (key == "batch_size") {
      c.train.batch_size = get_as<int>(value, key);
    } else if (key == "grad_clip") {
      c.train.grad_clip = get_as<double>(value, key);
    } else if (key == "stop_loss") {
      c.train.stop_loss = get_as<double>(value, key);
    } else if (key == "eval_every") {
      c.train.eval_every = get_as<int>(value, key);
    } else if (key == "augment_shift") {
      c.train.augment_shift = get_as<bool>(value, key);
    } else if (key == "augment_noise") {
      c.train.augment_noise = get_as<double>(value, key);
    } else if (key == "seed") {
      c.seed = get_as<std::uint64_t>(value, key);
      c.train.seed = c.seed;
    } else if (key == "seen_fraction") {
      c.seen_fraction = get_as<double>(value, key);
    } else if (key == "n_splits") {
      c.n_splits = get_as<int>(value, key);
    } else if (key == "ablation_seeds") {
      c.ablation_seeds = get_as<int>(value, key);
    } else if (key == "gradcheck_h") {
      c.gradcheck_h = get_as<double>(value, key);
    } else if (key == "gradcheck_tol") {
      c.gradcheck_tol = get_as<double>(value, key);
    } else {
      bad("unknown key '" + key + "'");
    }
  }

  if (!class_file.empty()) {
    if (!c.classes.empty()) bad("give either 'classes' or 'class_file', not both");
    try {
      c.classes = read_class_file(class_file);
    } catch (const std::exception& e) {
      bad(e.what());
    }
  }
  if (c.classes.empty()) c.classes = primitive_library();
  if (c.model.frame.video_dim == 0) c.model.frame.video_dim = c.model.decoder.model_dim / 2;
  c.train.seed = c.seed;
  c.validate();
  c.train.config_hash = c.canonical_hash();
  return c;
}

Config Config::from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw config_error("config: cannot open '" + path + "'");
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw config_error("config: invalid JSON in '" + path + "': " + e.what());
  }
  return from_json(j);
}

nlohmann::json Config::to_json() const {
  nlohmann::json j;
  j["frames"] = model.encoder.frames;
  j["height"] = model.encoder.height;
  j["width"] = model.encoder.width;
  j["patch"] = model.encoder.patch;
  j["encoder_dim"] = model.encoder.encoder_dim;
  j["encoder_layers"] = model.encoder.encoder_layers;
  j["encoder_heads"] = model.encoder.heads;
  j["attention_mode"] = model.encoder.attention_mode == AttentionMode::kJoint ? "joint" : "divided";
  j["model_dim"] = model.decoder.model_dim;
  j["decoder_layers"] = model.decoder.layers;
  j["decoder_heads"] = model.decoder.heads;
  j["ffn_width"] = model.decoder.ffn_width;
  j["video_dim"] = model.frame.video_dim;
  j["frame_heads"] = model.frame.heads;
  j["task_mode"] = model.decoder.task_mode == TaskMode::kMultiLabel ? "multi_label" : "single_label";
  j["text_mode"] = model.text_mode == TextEmbedder::Mode::kHashed ? "hashed" : "compositional";
  j["text_seed"] = model.text_seed;
  j["text_init"] = model.text_init;
  j["mmq"] = model.mmq;
  j["freeze_frame_embedder"] = model.freeze_frame_embedder;
  j["shared_head"] = model.shared_head;
  j["classes"] = classes;
  j["noise_std"] = data.noise_std;
  j["amplitude"] = data.amplitude;
  j["label_size_weights"] = data.label_size_weights;
  j["exclusive_groups"] = data.exclusive_groups;
  j["train_videos"] = train_videos;
  j["eval_videos"] = eval_videos;
  j["epochs"] = train.epochs;
  j["lr0"] = train.lr0;
  j["batch_size"] = train.batch_size;
  j["grad_clip"] = train.grad_clip;
  j["stop_loss"] = train.stop_loss;
  j["eval_every"] = train.eval_every;
  j["augment_shift"] = train.augment_shift;
  j["augment_noise"] = train.augment_noise;
  j["seed"] = seed;
  j["seen_fraction"] = seen_fraction;
  j["n_splits"] = n_splits;
  j["ablation_seeds"] = ablation_seeds;
  j["gradcheck_h"] = gradcheck_h;
  j["gradcheck_tol"] = gradcheck_tol;
  return j;
}

std::uint64_t Config::canonical_hash() const {
  // nlohmann::json orders object keys, so the dump is insensitive to the
  // field order of the source file
  return fnv1a64(to_json().dump());
}

void Config::validate() const {
  try {
    model.validate();
  } catch (const std::invalid_argument& e) {
    bad(e.what());
  }
  if (data.frames != model.encoder.frames || data.height != model.encoder.height ||
      data.width != model.encoder.width) {
    bad("data geometry does not match the encoder geometry");
  }
  if (classes.empty()) bad("class vocabulary is empty");
  if (train_videos < 0 || eval_videos < 0) bad("train_videos/eval_videos must be nonnegative");
  if (train.epochs < 0 || train.batch_size < 1) bad("epochs must be >= 0 and batch_size >= 1");
  if (train.lr0 < 0.0) bad("lr0 must be nonnegative");
  if (seen_fraction <= 0.0 || seen_fraction >= 1.0) bad("seen_fraction must lie in (0, 1)");
  if (n_splits < 1) bad("n_splits must be >= 1");
  if (gradcheck_h < 1e-6 || gradcheck_h > 1e-4) bad("gradcheck_h must lie in [1e-6, 1e-4]");
}

}  // namespace msqnet
