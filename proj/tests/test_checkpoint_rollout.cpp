#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <msqnet/checkpoint.hpp>
#include <msqnet/rollout.hpp>

#include <filesystem>
#include <fstream>

#include "support.hpp"

using namespace msqnet;
using testsupport::random_tensor;

namespace {

struct TempDir {
  std::string path;
  explicit TempDir(std::string p) : path(std::move(p)) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

std::vector<char> slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("checkpoint round trip is bit exact") {
  TempDir dir("ckpt_test_dir");
  Rng rng(81);
  std::vector<ParamRef> tensors{
      {"W_que", random_tensor({16, 24}, rng)},
      {"Q_l", random_tensor({4, 16}, rng)},
      {"b", random_tensor({4}, rng)},
  };
  const std::string path = dir.path + "/model.msqk";
  save_checkpoint(path, tensors);
  save_checkpoint(dir.path + "/again.msqk", tensors);
  CHECK(slurp(path) == slurp(dir.path + "/again.msqk"));  // byte-stable writer

  auto loaded = read_checkpoint(path);
  REQUIRE(loaded.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(loaded[i].name == tensors[i].name);
    CHECK(loaded[i].value.shape() == tensors[i].value.shape());
    for (int e = 0; e < loaded[i].value.size(); ++e) {
      CHECK(loaded[i].value.at(e) == tensors[i].value.at(e));
    }
  }

  // loading back into live tensors is exact as well
  std::vector<ParamRef> dst{
      {"W_que", Tensor({16, 24})}, {"Q_l", Tensor({4, 16})}, {"b", Tensor({4})}};
  load_checkpoint(path, dst);
  for (std::size_t i = 0; i < 3; ++i)
    for (int e = 0; e < dst[i].value.size(); ++e) CHECK(dst[i].value.at(e) == tensors[i].value.at(e));
}

TEST_CASE("checkpoint loader rejects corruption without applying state") {
  TempDir dir("ckpt_corrupt_dir");
  Rng rng(82);
  std::vector<ParamRef> tensors{{"W_que", random_tensor({4, 6}, rng)}};
  const std::string path = dir.path + "/model.msqk";
  save_checkpoint(path, tensors);

  SUBCASE("bad magic") {
    auto bytes = slurp(path);
    bytes[0] = 'X';
    std::ofstream(dir.path + "/bad.msqk", std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    CHECK_THROWS_WITH_AS(read_checkpoint(dir.path + "/bad.msqk"), doctest::Contains("magic"), std::runtime_error);
  }
  SUBCASE("truncated payload leaves the target untouched") {
    auto bytes = slurp(path);
    bytes.resize(bytes.size() - 9);
    std::ofstream(dir.path + "/trunc.msqk", std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    std::vector<ParamRef> dst{{"W_que", Tensor({4, 6}, 7.0)}};
    CHECK_THROWS_WITH_AS(load_checkpoint(dir.path + "/trunc.msqk", dst), doctest::Contains("truncated"),
                         std::runtime_error);
    for (int i = 0; i < dst[0].value.size(); ++i) CHECK(dst[0].value.at(i) == 7.0);
  }
  SUBCASE("shape mismatch names the offending tensor") {
    std::vector<ParamRef> dst{{"W_que", Tensor({4, 3})}};  // wrong width
    CHECK_THROWS_WITH_AS(load_checkpoint(path, dst), doctest::Contains("W_que"), std::runtime_error);
  }
  SUBCASE("missing and extra tensors are rejected") {
    std::vector<ParamRef> dst{{"W_out", Tensor({4, 6})}};
    CHECK_THROWS_AS(load_checkpoint(path, dst), std::runtime_error);
    std::vector<ParamRef> extra{{"W_que", Tensor({4, 6})}, {"b", Tensor({2})}};
    CHECK_THROWS_AS(load_checkpoint(path, extra), std::runtime_error);
  }
}

TEST_CASE("encoder rollout fixed point under identity attention") {
  EncoderAttnCapture capture;
  capture.tokens = 5;
  for (int layer = 0; layer < 3; ++layer) {
    std::vector<double> eye(25, 0.0);
    for (int i = 0; i < 5; ++i) eye[static_cast<std::size_t>(i) * 5 + i] = 1.0;
    capture.passes.push_back(std::move(eye));
  }
  auto rollout = encoder_rollout(capture);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j)
      CHECK(rollout[static_cast<std::size_t>(i) * 5 + j] == doctest::Approx(i == j ? 1.0 : 0.0));
}

TEST_CASE("decoder heat aggregation") {
  DecoderTrace trace;
  SUBCASE("empty trace demands retention") {
    CHECK_THROWS_WITH_AS(decoder_heat(trace), doctest::Contains("retention"), std::invalid_argument);
  }
  SUBCASE("single layer returns its head-averaged rows") {
    AttnWeights w;
    w.heads = 2;
    w.sq = 2;
    w.sk = 3;
    w.w = {0.2, 0.3, 0.5, 0.1, 0.8, 0.1,    // head 0
           0.6, 0.2, 0.2, 0.3, 0.3, 0.4};   // head 1
    trace.cross_attn.push_back(w);
    auto heat = decoder_heat(trace);
    CHECK(heat[0][0] == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(heat[0][1] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(heat[1][2] == doctest::Approx(0.25).epsilon(1e-12));
  }
  SUBCASE("two layers average elementwise") {
    AttnWeights a;
    a.heads = 1;
    a.sq = 1;
    a.sk = 2;
    a.w = {0.9, 0.1};
    AttnWeights b = a;
    b.w = {0.5, 0.5};
    trace.cross_attn = {a, b};
    auto heat = decoder_heat(trace);
    CHECK(heat[0][0] == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(heat[0][1] == doctest::Approx(0.3).epsilon(1e-12));
  }
}

TEST_CASE("rollout maps normalize to [0,1] and hit both ends") {
  DecoderTrace trace;
  AttnWeights w;
  w.heads = 1;
  w.sq = 2;
  w.sk = 3;
  w.w = {0.2, 0.3, 0.5, 0.1, 0.8, 0.1};
  trace.cross_attn.push_back(w);
  EncoderConfig cfg;
  cfg.frames = 2;
  cfg.height = cfg.width = 16;
  cfg.patch = 8;
  RolloutMap map = attention_rollout(trace, nullptr, cfg, {"a", "b"});
  for (const auto& row : map.memory_heat) {
    double lo = 1e300, hi = -1e300;
    for (double v : row) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    CHECK(lo == doctest::Approx(0.0));
    CHECK(hi == doctest::Approx(1.0));
  }
}

TEST_CASE("heatmap PGM export round trips") {
  TempDir dir("pgm_test_dir");
  RolloutMap map;
  map.frames = 1;
  map.grid_h = map.grid_w = 2;
  map.class_names = {"only"};
  map.memory_heat = {{1.0, 0.0}};
  map.spatial = {{{1.0, 0.0, 0.0, 0.0}}};
  export_heatmap(map, dir.path);

  int w = 0, h = 0;
  auto pixels = read_pgm(dir.path + "/class_00_frame_00.pgm", w, h);
  CHECK(w == 2);
  CHECK(h == 2);
  CHECK(pixels == std::vector<int>{255, 0, 0, 0});

  std::ifstream index(dir.path + "/index.txt");
  std::string header, row;
  std::getline(index, header);
  std::getline(index, row);
  CHECK(header == "class_id,class_name,frame,file");
  CHECK(row == "0,only,0,class_00_frame_00.pgm");

  SUBCASE("uniform map exports as all 255 by the constant-map convention") {
    RolloutMap flat;
    flat.frames = 1;
    flat.grid_h = flat.grid_w = 2;
    flat.class_names = {"flat"};
    // normalization happens in attention_rollout; a constant map becomes all ones
    flat.memory_heat = {{1.0}};
    flat.spatial = {{{1.0, 1.0, 1.0, 1.0}}};
    export_heatmap(flat, dir.path);
    auto px = read_pgm(dir.path + "/class_00_frame_00.pgm", w, h);
    CHECK(px == std::vector<int>{255, 255, 255, 255});
  }
}

TEST_CASE("exact rollout values survive the PGM rounding oracle") {
  TempDir dir("pgm_round_dir");
  RolloutMap map;
  map.frames = 1;
  map.grid_h = 1;
  map.grid_w = 4;
  map.class_names = {"c"};
  map.memory_heat = {{0.0, 1.0}};
  map.spatial = {{{0.1, 0.5, 0.9, 1.0}}};
  export_heatmap(map, dir.path);
  int w = 0, h = 0;
  auto px = read_pgm(dir.path + "/class_00_frame_00.pgm", w, h);
  for (int i = 0; i < 4; ++i) {
    CHECK(px[static_cast<std::size_t>(i)] ==
          static_cast<int>(std::lround(255.0 * map.spatial[0][0][static_cast<std::size_t>(i)])));
  }
}
