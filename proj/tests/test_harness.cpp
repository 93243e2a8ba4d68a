#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <msqnet/harness.hpp>

#include <cmath>

#include "support.hpp"

using namespace msqnet;

namespace {

ModelConfig probe_config() {
  ModelConfig cfg;
  cfg.encoder.frames = 4;
  cfg.encoder.height = cfg.encoder.width = 8;
  cfg.encoder.patch = 4;
  cfg.encoder.encoder_dim = 12;
  cfg.encoder.encoder_layers = 1;
  cfg.encoder.heads = 2;
  cfg.encoder.model_dim = 12;
  cfg.decoder.model_dim = 12;
  cfg.decoder.layers = 1;
  cfg.decoder.heads = 2;
  cfg.frame.patch = 4;
  cfg.frame.video_dim = 6;
  cfg.frame.heads = 2;
  return cfg;
}

std::vector<std::string> probe_classes() {
  return {"translate-left", "translate-right", "blink", "grow"};
}

std::pair<Dataset, Dataset> probe_data(const ModelConfig& mc, int n_train, int n_eval,
                                       std::uint64_t seed) {
  DataConfig dc;
  dc.frames = mc.encoder.frames;
  dc.height = mc.encoder.height;
  dc.width = mc.encoder.width;
  SplitSpec sup;
  return build_dataset(sup, probe_classes(), n_train, n_eval, dc, seed);
}

}  // namespace

TEST_CASE("adam leaves parameters untouched under zero gradients") {
  Rng rng(71);
  Tensor p = testsupport::random_tensor({5}, rng).set_requires_grad(true);
  std::vector<double> before(p.data().begin(), p.data().end());
  std::vector<ParamRef> params{{"p", p}};
  AdamState state = AdamState::init(params);
  for (int s = 0; s < 7; ++s) adam_step(params, state, 0.01);
  for (int i = 0; i < 5; ++i) CHECK(p.at(i) == before[static_cast<std::size_t>(i)]);
}

TEST_CASE("first adam step moves against the gradient sign by about lr") {
  Tensor p({3}, {1.0, -2.0, 0.5});
  p.set_requires_grad(true);
  std::vector<ParamRef> params{{"p", p}};
  AdamState state = AdamState::init(params);
  auto g = p.grad_mut();
  g[0] = 0.3;
  g[1] = -4.0;
  g[2] = 1e-3;
  adam_step(params, state, 0.01);
  CHECK(p.at(0) == doctest::Approx(1.0 - 0.01).epsilon(1e-4));
  CHECK(p.at(1) == doctest::Approx(-2.0 + 0.01).epsilon(1e-4));
  CHECK(p.at(2) == doctest::Approx(0.5 - 0.01).epsilon(1e-3));
}

TEST_CASE("adam matches an independent scalar oracle on a quadratic bowl") {
  // f(x) = (x - 3)^2, grad = 2(x - 3)
  Tensor x({1}, {0.0});
  x.set_requires_grad(true);
  std::vector<ParamRef> params{{"x", x}};
  AdamState state = AdamState::init(params);

  // oracle replay with its own arithmetic
  double ox = 0.0, om = 0.0, ov = 0.0;
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8, lr = 0.1;
  for (int step = 1; step <= 10; ++step) {
    const double g = 2.0 * (x.at(0) - 3.0);
    x.grad_mut()[0] = g;
    adam_step(params, state, lr);
    x.zero_grad();

    const double og = 2.0 * (ox - 3.0);
    om = b1 * om + (1 - b1) * og;
    ov = b2 * ov + (1 - b2) * og * og;
    const double mhat = om / (1 - std::pow(b1, step));
    const double vhat = ov / (1 - std::pow(b2, step));
    ox -= lr * mhat / (std::sqrt(vhat) + eps);
    CHECK(std::abs(x.at(0) - ox) <= 1e-12);
  }
}

TEST_CASE("adam rejects non-finite gradients naming the parameter") {
  Tensor p({2});
  p.set_requires_grad(true);
  std::vector<ParamRef> params{{"W_que", p}};
  AdamState state = AdamState::init(params);
  p.grad_mut()[1] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_WITH_AS(adam_step(params, state, 0.1), doctest::Contains("W_que"), numeric_error);
}

TEST_CASE("cosine schedule endpoints and midpoint") {
  CHECK(cosine_lr(0, 100, 0.5) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(cosine_lr(100, 100, 0.5) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(cosine_lr(50, 100, 0.5) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK_THROWS_AS(cosine_lr(5, 4, 0.1), std::invalid_argument);
}

TEST_CASE("gradient clipping rescales to the target norm") {
  Tensor p({2});
  p.set_requires_grad(true);
  p.grad_mut()[0] = 3.0;
  p.grad_mut()[1] = 4.0;
  std::vector<ParamRef> params{{"p", p}};
  CHECK(global_grad_norm(params) == doctest::Approx(5.0));
  clip_gradients(params, 1.0);
  CHECK(global_grad_norm(params) == doctest::Approx(1.0).epsilon(1e-12));
  clip_gradients(params, 10.0);  // below the cap: untouched
  CHECK(global_grad_norm(params) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("training at lr 0 keeps parameters bit identical") {
  ModelConfig mc = probe_config();
  MsqnetModel model = MsqnetModel::init(mc, probe_classes(), 5);
  const std::uint64_t before = parameter_checksum(model.checkpoint_tensors());
  auto [train_set, eval_set] = probe_data(mc, 8, 4, 2);
  TrainConfig tc;
  tc.epochs = 2;
  tc.lr0 = 0.0;
  tc.batch_size = 4;
  RunRecord record = train(model, train_set, eval_set, tc);
  CHECK(parameter_checksum(model.checkpoint_tensors()) == before);
  CHECK(record.epochs.size() == 2);
}

TEST_CASE("identically seeded runs produce identical parameters") {
  ModelConfig mc = probe_config();
  auto [train_set, eval_set] = probe_data(mc, 12, 4, 3);
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 4;
  tc.seed = 77;

  MsqnetModel a = MsqnetModel::init(mc, probe_classes(), 5);
  RunRecord ra = train(a, train_set, eval_set, tc);
  MsqnetModel b = MsqnetModel::init(mc, probe_classes(), 5);
  RunRecord rb = train(b, train_set, eval_set, tc);
  CHECK(ra.param_checksum == rb.param_checksum);
  CHECK(ra.epochs.back().loss == rb.epochs.back().loss);
}

TEST_CASE("zero epochs yields empty loss history and an initial-parameter eval") {
  ModelConfig mc = probe_config();
  MsqnetModel model = MsqnetModel::init(mc, probe_classes(), 5);
  auto [train_set, eval_set] = probe_data(mc, 4, 4, 4);
  TrainConfig tc;
  tc.epochs = 0;
  RunRecord record = train(model, train_set, eval_set, tc);
  CHECK(record.epochs.empty());
  CHECK_FALSE(record.final_metrics.empty());
}

TEST_CASE("overfit probe memorizes a tiny dataset") {
  ModelConfig mc = probe_config();
  MsqnetModel model = MsqnetModel::init(mc, probe_classes(), 5);
  auto [train_set, eval_set] = probe_data(mc, 8, 4, 6);
  TrainConfig tc;
  tc.epochs = 300;
  tc.lr0 = 3e-3;
  tc.batch_size = 8;
  tc.seed = 1;
  tc.eval_every = 0;
  RunRecord record = train(model, train_set, eval_set, tc);

  CHECK(record.epochs.back().loss < 0.05);

  // loss is nonincreasing across >= 90% of epochs
  int nonincreasing = 0;
  for (std::size_t e = 1; e < record.epochs.size(); ++e) {
    if (record.epochs[e].loss <= record.epochs[e - 1].loss + 1e-12) ++nonincreasing;
  }
  CHECK(nonincreasing >= static_cast<int>(0.9 * (record.epochs.size() - 1)));
}

TEST_CASE("run record serialization carries the config echo") {
  RunRecord r;
  r.config_hash = 42;
  r.param_checksum = 7;
  r.epochs.push_back({0, 0.5, {{"map", 0.25}}});
  std::string text = r.serialize({{"epochs", "1"}, {"lr0", "0.001"}});
  CHECK(text.find("# epochs=1\n") != std::string::npos);
  CHECK(text.find("# lr0=0.001\n") != std::string::npos);
  CHECK(text.find("0,0.500000000,map=0.250000\n") != std::string::npos);
}
