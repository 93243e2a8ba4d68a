#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <msqnet/rng.hpp>
#include <msqnet/tensor.hpp>

#include <cmath>
#include <stdexcept>

#include "support.hpp"

using namespace msqnet;
using testsupport::max_abs_diff;
using testsupport::random_tensor;

namespace {

// independent triple-loop product used as the matmul oracle
Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor c({a.rows(), b.cols()});
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (int k = 0; k < a.cols(); ++k) acc += a.at(i, k) * b.at(k, j);
      c.at(i, j) = acc;
    }
  return c;
}

}  // namespace

TEST_CASE("matmul identity and annihilator") {
  Rng rng(1);
  Tensor a = random_tensor({2, 2}, rng);
  Tensor eye({2, 2});
  eye.at(0, 0) = eye.at(1, 1) = 1.0;
  CHECK(max_abs_diff(matmul(a, eye), a) == 0.0);

  Tensor b = random_tensor({3, 3}, rng);
  Tensor zero({3, 3});
  Tensor prod = matmul(b, zero);
  for (int i = 0; i < prod.size(); ++i) CHECK(prod.at(i) == 0.0);
}

TEST_CASE("matmul matches triple-loop oracle") {
  Rng rng(2);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({4, 2}, rng);
  CHECK(max_abs_diff(matmul(a, b), naive_matmul(a, b)) <= 1e-12);
}

TEST_CASE("matmul rejects mismatched shapes naming both") {
  Tensor a({2, 3});
  Tensor b({4, 2});
  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[2x3]"), std::invalid_argument);
  try {
    matmul(a, b);
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("[4x2]") != std::string::npos);
  }
}

TEST_CASE("matmul is bilinear") {
  Rng rng(3);
  Tensor a = random_tensor({3, 3}, rng);
  Tensor b = random_tensor({3, 3}, rng);
  const double alpha = 2.75;
  Tensor lhs = matmul(scale(a, alpha), b);
  Tensor rhs = scale(matmul(a, b), alpha);
  CHECK(max_abs_diff(lhs, rhs) <= 1e-12);
}

TEST_CASE("matmul gradient flows to both inputs") {
  Rng rng(4);
  Tensor a = random_tensor({2, 3}, rng).set_requires_grad(true);
  Tensor b = random_tensor({3, 2}, rng).set_requires_grad(true);
  sum_all(matmul(a, b)).backward();
  // d sum(AB) / dA[i,k] = sum_j B[k,j]
  for (int i = 0; i < 2; ++i)
    for (int k = 0; k < 3; ++k) {
      double expect = 0.0;
      for (int j = 0; j < 2; ++j) expect += b.at(k, j);
      CHECK(a.grad()[static_cast<std::size_t>(i * 3 + k)] == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("softmax symmetry and shift invariance") {
  Tensor x({3}, {0.0, 0.0, 0.0});
  Tensor s = softmax(x, 0);
  for (int i = 0; i < 3; ++i) CHECK(s.at(i) == doctest::Approx(1.0 / 3).epsilon(1e-12));

  Rng rng(5);
  Tensor y = random_tensor({4}, rng);
  Tensor shifted = add_scalar(y, 7.25);
  CHECK(max_abs_diff(softmax(y, 0), softmax(shifted, 0)) <= 1e-12);
}

TEST_CASE("softmax matches high-precision normalization") {
  Tensor x({3}, {1.0, 2.0, 3.0});
  Tensor s = softmax(x, 0);
  // reference values from direct e^x / sum normalization
  const double den = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  for (int i = 0; i < 3; ++i) {
    CHECK(std::abs(s.at(i) - std::exp(1.0 + i) / den) <= 1e-12);
  }
}

TEST_CASE("softmax rows sum to one and stay positive") {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = random_tensor({5, 7}, rng, -30.0, 30.0);
    Tensor s = softmax(x, 1);
    for (int i = 0; i < 5; ++i) {
      double sum = 0.0;
      for (int j = 0; j < 7; ++j) {
        CHECK(s.at(i, j) > 0.0);
        sum += s.at(i, j);
      }
      CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("softmax along axis 0") {
  Rng rng(7);
  Tensor x = random_tensor({4, 3}, rng);
  Tensor s = softmax(x, 0);
  for (int j = 0; j < 3; ++j) {
    double sum = 0.0;
    for (int i = 0; i < 4; ++i) sum += s.at(i, j);
    CHECK(std::abs(sum - 1.0) <= 1e-12);
  }
}

TEST_CASE("layer_norm degenerate and fixed-point cases") {
  Tensor gain({4}, {1.0, 1.0, 1.0, 1.0});
  Tensor bias({4});

  Tensor constant({1, 4}, {3.5, 3.5, 3.5, 3.5});
  Tensor out = layer_norm(constant, gain, bias);
  for (int i = 0; i < 4; ++i) CHECK(out.at(i) == 0.0);

  // an exactly standardized vector should pass through within O(eps)
  Tensor z({1, 4}, {-1.0, 1.0, -1.0, 1.0});
  Tensor kept = layer_norm(z, gain, bias, 1e-5);
  CHECK(max_abs_diff(kept, z) <= 1e-4);
}

TEST_CASE("layer_norm matches direct mean/variance oracle") {
  Rng rng(8);
  Tensor x = random_tensor({1, 8}, rng);
  Tensor gain = random_tensor({8}, rng);
  Tensor bias = random_tensor({8}, rng);
  const double eps = 1e-5;
  Tensor out = layer_norm(x, gain, bias, eps);

  double mean = 0.0;
  for (int j = 0; j < 8; ++j) mean += x.at(j);
  mean /= 8;
  double var = 0.0;
  for (int j = 0; j < 8; ++j) var += (x.at(j) - mean) * (x.at(j) - mean);
  var /= 8;
  for (int j = 0; j < 8; ++j) {
    const double expect = gain.at(j) * (x.at(j) - mean) / std::sqrt(var + eps) + bias.at(j);
    CHECK(std::abs(out.at(j) - expect) <= 1e-12);
  }
}

TEST_CASE("gradient accumulates when a tensor is used twice") {
  // f = sum(x*x + 3x); df/dx = 2x + 3, hand-computed
  Tensor x({3}, {1.0, -2.0, 0.5});
  x.set_requires_grad(true);
  Tensor f = sum_all(add(mul(x, x), scale(x, 3.0)));
  f.backward();
  for (int i = 0; i < 3; ++i) {
    CHECK(x.grad()[static_cast<std::size_t>(i)] == doctest::Approx(2.0 * x.at(i) + 3.0).epsilon(1e-12));
  }
}

TEST_CASE("grad_check on linear and constant functions") {
  Tensor x({5}, {0.3, -0.4, 0.9, 0.1, -0.8});
  x.set_requires_grad(true);

  auto report = grad_check([&] { return sum_all(x); }, {{"x", x}});
  CHECK(report.max_rel_err <= 1e-9);
  // analytic gradient of sum is exactly ones
  x.zero_grad();
  sum_all(x).backward();
  for (int i = 0; i < 5; ++i) CHECK(x.grad()[static_cast<std::size_t>(i)] == 1.0);

  // constant function: gradient exactly zero
  x.zero_grad();
  auto creport = grad_check([&] { return Tensor::scalar(4.25); }, {{"x", x}});
  CHECK(creport.max_rel_err == 0.0);
  x.zero_grad();
}

TEST_CASE("every differentiable op passes finite differences") {
  Rng rng(9);
  // scalar loss built per op; params drawn from [-1, 1]
  auto run = [&](const char* name, auto make_loss, std::vector<ParamRef> params) {
    auto report = grad_check(make_loss, params, 1e-5, 1e-4);
    INFO(name << " worst " << report.worst_param << "[" << report.worst_index << "] rel "
              << report.max_rel_err);
    CHECK(report.passed());
  };

  {
    Tensor a = random_tensor({3, 4}, rng).set_requires_grad(true);
    Tensor b = random_tensor({4, 2}, rng).set_requires_grad(true);
    run("matmul", [&] { return mean_all(mul(matmul(a, b), matmul(a, b))); }, {{"a", a}, {"b", b}});
  }
  {
    Tensor a = random_tensor({3, 4}, rng).set_requires_grad(true);
    Tensor b = random_tensor({2, 4}, rng).set_requires_grad(true);
    run("matmul_nt", [&] { return mean_all(gelu(matmul_nt(a, b))); }, {{"a", a}, {"b", b}});
  }
  {
    Tensor x = random_tensor({2, 5}, rng).set_requires_grad(true);
    run("softmax", [&] { return mean_all(mul(softmax(x, 1), x)); }, {{"x", x}});
  }
  {
    Tensor x = random_tensor({3, 6}, rng).set_requires_grad(true);
    Tensor g = random_tensor({6}, rng).set_requires_grad(true);
    Tensor b = random_tensor({6}, rng).set_requires_grad(true);
    run("layer_norm", [&] { return mean_all(mul(layer_norm(x, g, b), x)); },
        {{"x", x}, {"g", g}, {"b", b}});
  }
  {
    Tensor x = random_tensor({7}, rng).set_requires_grad(true);
    run("gelu+sigmoid", [&] { return mean_all(sigmoid(gelu(x))); }, {{"x", x}});
  }
  {
    Tensor m = random_tensor({4, 3}, rng).set_requires_grad(true);
    Tensor v = random_tensor({3}, rng).set_requires_grad(true);
    run("add_row+mean_rows", [&] { return sum_all(mul(mean_rows(add_row(m, v)), v)); },
        {{"m", m}, {"v", v}});
  }
  {
    Tensor a = random_tensor({4, 5}, rng).set_requires_grad(true);
    run("slices+concat", [&] {
      Tensor left = slice_cols(a, 0, 2);
      Tensor right = slice_cols(a, 2, 5);
      Tensor back = concat_cols({left, right});
      Tensor top = slice_rows(back, 0, 2);
      Tensor bottom = slice_rows(back, 2, 4);
      return mean_all(mul(concat_rows({top, bottom}), a));
    }, {{"a", a}});
  }
  {
    Tensor v = random_tensor({4}, rng).set_requires_grad(true);
    run("tile_rows", [&] { return mean_all(mul(tile_rows(v, 3), tile_rows(v, 3))); }, {{"v", v}});
  }
  {
    Tensor q = random_tensor({3, 4}, rng).set_requires_grad(true);
    Tensor w = random_tensor({3, 4}, rng).set_requires_grad(true);
    run("rowwise_dot", [&] { return mean_all(sigmoid(rowwise_dot(q, w))); }, {{"q", q}, {"w", w}});
  }
  {
    Tensor z = random_tensor({3, 4}, rng).set_requires_grad(true);
    Tensor y({3, 4});
    Rng lr(10);
    for (double& t : y.data()) t = lr.uniform() < 0.5 ? 0.0 : 1.0;
    run("bce_with_logits", [&] { return bce_with_logits_mean(z, y); }, {{"z", z}});
  }
  {
    Tensor z = random_tensor({3, 4}, rng).set_requires_grad(true);
    Tensor y({3, 4});
    Rng lr(11);
    for (int i = 0; i < 3; ++i) y.at(i, static_cast<int>(lr.uniform_int(4))) = 1.0;
    run("softmax_xent", [&] { return softmax_xent_mean(z, y); }, {{"z", z}});
  }
  {
    Tensor x = random_tensor({6}, rng).set_requires_grad(true);
    run("transpose+reshape", [&] {
      Tensor m = reshape(x, {2, 3});
      return mean_all(mul(transpose(m), transpose(m)));
    }, {{"x", x}});
  }
}

TEST_CASE("no-grad mode records nothing") {
  Tensor x({3}, {1.0, 2.0, 3.0});
  x.set_requires_grad(true);
  {
    NoGradGuard ng;
    Tensor y = scale(x, 2.0);
    CHECK_FALSE(y.requires_grad());
  }
  Tensor z = scale(x, 2.0);
  CHECK(z.requires_grad());
}

TEST_CASE("tensor invariants") {
  Tensor t({2, 3, 4});
  CHECK(t.size() == 24);
  t.set_requires_grad(true);
  CHECK(t.grad().size() == 24);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1.0}), std::invalid_argument);
}
