#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <msqnet/query.hpp>

#include <cmath>
#include <stdexcept>

#include "support.hpp"

using namespace msqnet;
using testsupport::max_abs_diff;
using testsupport::random_tensor;

TEST_CASE("text embeddings are deterministic in (name, seed)") {
  TextEmbedder e{TextEmbedder::Mode::kHashed, 24, 7};
  auto a = e.embed("translate-left");
  auto b = e.embed("translate-left");
  CHECK(a == b);

  TextEmbedder other{TextEmbedder::Mode::kHashed, 24, 8};
  CHECK(e.embed("blink") != other.embed("blink"));
}

TEST_CASE("compositional embedding is the normalized token sum") {
  TextEmbedder comp{TextEmbedder::Mode::kCompositional, 16, 3};
  TextEmbedder hashed{TextEmbedder::Mode::kHashed, 16, 3};
  auto a = hashed.embed("grow");
  auto b = hashed.embed("blink");
  auto ab = comp.embed("grow+blink");
  double norm2 = 0.0;
  for (int i = 0; i < 16; ++i) {
    const double s = a[static_cast<std::size_t>(i)] + b[static_cast<std::size_t>(i)];
    norm2 += s * s;
  }
  for (int i = 0; i < 16; ++i) {
    const double expect = (a[static_cast<std::size_t>(i)] + b[static_cast<std::size_t>(i)]) / std::sqrt(norm2);
    CHECK(ab[static_cast<std::size_t>(i)] == doctest::Approx(expect).epsilon(1e-12));
  }
  // a single-token compositional name reduces to its hashed vector
  CHECK(comp.embed("grow") == hashed.embed("grow"));
}

TEST_CASE("hashed embeddings of distinct names are nearly orthogonal") {
  const int d = 64;
  TextEmbedder e{TextEmbedder::Mode::kHashed, d, 11};
  std::vector<std::vector<double>> vs;
  for (int i = 0; i < 100; ++i) vs.push_back(e.embed("class-" + std::to_string(i)));
  double total = 0.0;
  int count = 0;
  for (int i = 0; i < 100; ++i)
    for (int j = i + 1; j < 100; ++j) {
      double dot = 0.0;
      for (int k = 0; k < d; ++k) dot += vs[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] * vs[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)];
      total += std::abs(dot);
      ++count;
    }
  CHECK(total / count < 3.0 / std::sqrt(static_cast<double>(d)));
}

TEST_CASE("text_embed rejects duplicates and empty lists") {
  TextEmbedder e{TextEmbedder::Mode::kHashed, 8, 0};
  CHECK_THROWS_AS(text_embed({"a", "b", "a"}, e), std::invalid_argument);
  CHECK_THROWS_AS(text_embed({}, e), std::invalid_argument);
  Tensor q = text_embed({"a", "b"}, e);
  CHECK(q.shape() == std::vector<int>{2, 8});
}

namespace {

Video random_video(int t, int h, int w, Rng& rng) {
  Video v = Video::zeros(t, h, w);
  for (double& p : v.pixels) p = rng.uniform();
  return v;
}

}  // namespace

TEST_CASE("frame_embed is per-frame independent and equivariant") {
  FrameEmbedderConfig cfg;
  cfg.patch = 4;
  cfg.video_dim = 8;
  cfg.heads = 2;
  Rng rng(31);
  FrameEmbedderParams params = FrameEmbedderParams::init(cfg, 4, rng);

  Video a = random_video(3, 8, 8, rng);
  Video b = random_video(3, 8, 8, rng);
  // make frame 1 identical
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) b.at(1, c, y, x) = a.at(1, c, y, x);
  Tensor fa = frame_embed(a, params, cfg);
  Tensor fb = frame_embed(b, params, cfg);
  for (int j = 0; j < cfg.video_dim; ++j) CHECK(fa.at(1, j) == fb.at(1, j));

  // permuting frames permutes rows identically
  Video perm = Video::zeros(3, 8, 8);
  const int order[3] = {2, 0, 1};
  for (int t = 0; t < 3; ++t)
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) perm.at(t, c, y, x) = a.at(order[t], c, y, x);
  Tensor fp = frame_embed(perm, params, cfg);
  for (int t = 0; t < 3; ++t)
    for (int j = 0; j < cfg.video_dim; ++j) CHECK(fp.at(t, j) == fa.at(order[t], j));

  // loop-over-frames oracle: single-frame videos produce the same rows
  for (int t = 0; t < 3; ++t) {
    Video single = Video::zeros(1, 8, 8);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) single.at(0, c, y, x) = a.at(t, c, y, x);
    Tensor fs = frame_embed(single, params, cfg);
    for (int j = 0; j < cfg.video_dim; ++j) CHECK(fs.at(0, j) == fa.at(t, j));
  }
}

TEST_CASE("video_embed averages frame features") {
  Rng rng(32);
  SUBCASE("identical rows pass through") {
    Tensor u = random_tensor({6}, rng);
    Tensor feats({4, 6});
    for (int t = 0; t < 4; ++t)
      for (int j = 0; j < 6; ++j) feats.at(t, j) = u.at(j);
    CHECK(max_abs_diff(video_embed(feats), u) == 0.0);
  }
  SUBCASE("single frame is the identity") {
    Tensor feats = random_tensor({1, 5}, rng);
    Tensor v = video_embed(feats);
    for (int j = 0; j < 5; ++j) CHECK(v.at(j) == feats.at(0, j));
  }
  SUBCASE("random input matches elementwise mean oracle") {
    Tensor feats = random_tensor({4, 8}, rng);
    Tensor v = video_embed(feats);
    for (int j = 0; j < 8; ++j) {
      double acc = 0.0;
      for (int t = 0; t < 4; ++t) acc += feats.at(t, j);
      CHECK(std::abs(v.at(j) - acc / 4) <= 1e-12);
    }
  }
}

TEST_CASE("fuse projects the concatenated query") {
  Rng rng(33);
  const int k = 5, d = 64, dv = 32;
  Tensor q_l = random_tensor({k, d}, rng);
  Tensor q_v = random_tensor({dv}, rng);

  SUBCASE("identity-block projection recovers Q_l") {
    Tensor w({d, d + dv});
    for (int i = 0; i < d; ++i) w.at(i, i) = 1.0;
    CHECK(max_abs_diff(fuse(q_l, q_v, w), q_l) == 0.0);
  }
  SUBCASE("zero projection gives zero queries") {
    Tensor w({d, d + dv});
    Tensor out = fuse(q_l, q_v, w);
    for (int i = 0; i < out.size(); ++i) CHECK(out.at(i) == 0.0);
  }
  SUBCASE("random inputs match the concat-then-matmul oracle") {
    Tensor w = random_tensor({d, d + dv}, rng);
    Tensor out = fuse(q_l, q_v, w);
    for (int r = 0; r < k; ++r)
      for (int i = 0; i < d; ++i) {
        double acc = 0.0;
        for (int j = 0; j < d; ++j) acc += w.at(i, j) * q_l.at(r, j);
        for (int j = 0; j < dv; ++j) acc += w.at(i, d + j) * q_v.at(j);
        CHECK(std::abs(out.at(r, i) - acc) <= 1e-12);
      }
  }
  SUBCASE("fuse is jointly linear") {
    Tensor w = random_tensor({d, d + dv}, rng);
    const double alpha = 1.75;
    Tensor lhs = fuse(scale(q_l, alpha), scale(q_v, alpha), w);
    Tensor rhs = scale(fuse(q_l, q_v, w), alpha);
    CHECK(max_abs_diff(lhs, rhs) <= 1e-12);
  }
  SUBCASE("class permutation is equivariant") {
    Tensor w = random_tensor({d, d + dv}, rng);
    const int perm[5] = {3, 1, 4, 0, 2};
    Tensor q_p({k, d});
    for (int r = 0; r < k; ++r)
      for (int j = 0; j < d; ++j) q_p.at(r, j) = q_l.at(perm[r], j);
    Tensor out = fuse(q_l, q_v, w);
    Tensor out_p = fuse(q_p, q_v, w);
    for (int r = 0; r < k; ++r)
      for (int j = 0; j < d; ++j) CHECK(out_p.at(r, j) == out.at(perm[r], j));
  }
}

TEST_CASE("unimodal_queries is the identity and keeps trainability") {
  Rng rng(34);
  Tensor q_l = random_tensor({3, 4}, rng).set_requires_grad(true);
  Tensor out = unimodal_queries(q_l);
  CHECK(max_abs_diff(out, q_l) == 0.0);
  mean_all(mul(out, out)).backward();
  double gnorm = 0.0;
  for (double g : q_l.grad()) gnorm += g * g;
  CHECK(gnorm > 0.0);
  q_l.zero_grad();
}

TEST_CASE("gradients flow through the multi-modal query path") {
  FrameEmbedderConfig cfg;
  cfg.patch = 4;
  cfg.video_dim = 6;
  cfg.heads = 2;
  Rng rng(35);
  FrameEmbedderParams params = FrameEmbedderParams::init(cfg, 4, rng);
  Video video = random_video(2, 8, 8, rng);
  const int k = 3, d = 8;
  Tensor q_l = random_tensor({k, d}, rng).set_requires_grad(true);
  Tensor w_que = random_tensor({d, d + cfg.video_dim}, rng).set_requires_grad(true);

  std::vector<ParamRef> refs{{"Q_l", q_l}, {"W_que", w_que}};
  params.collect("frame", refs);
  auto loss = [&] {
    Tensor feats = frame_embed(video, params, cfg);
    Tensor q0 = fuse(q_l, video_embed(feats), w_que);
    return mean_all(mul(q0, q0));
  };
  GradCheckReport report = grad_check(loss, refs, 1e-5, 1e-4);
  INFO("worst " << report.worst_param << " rel " << report.max_rel_err);
  CHECK(report.passed());
}

TEST_CASE("frozen frame embedder stops gradient recording") {
  FrameEmbedderConfig cfg;
  cfg.patch = 4;
  cfg.video_dim = 6;
  cfg.heads = 2;
  Rng rng(36);
  FrameEmbedderParams params = FrameEmbedderParams::init(cfg, 4, rng);
  params.set_trainable(false);
  Rng vr(37);
  Video video = random_video(2, 8, 8, vr);
  Tensor feats = frame_embed(video, params, cfg);
  CHECK_FALSE(feats.requires_grad());
  params.set_trainable(true);
  Tensor feats2 = frame_embed(video, params, cfg);
  CHECK(feats2.requires_grad());
}
