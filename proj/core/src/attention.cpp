#include "msqnet/attention.hpp"

#include <cmath>
#include <stdexcept>

namespace msqnet {

LinearLayer LinearLayer::init(int out, int in, Rng& rng) {
  LinearLayer l;
  const double std = std::sqrt(2.0 / (in + out));
  l.W = Tensor::randn({out, in}, rng, std).set_requires_grad(true);
  l.b = Tensor({out}).set_requires_grad(true);
  return l;
}

void LinearLayer::collect(const std::string& prefix, std::vector<ParamRef>& out) const {
  out.push_back({prefix + ".W", W});
  out.push_back({prefix + ".b", b});
}

Tensor linear(const Tensor& x, const LinearLayer& l) { return add_row(matmul_nt(x, l.W), l.b); }

LayerNormParams LayerNormParams::init(int dim) {
  LayerNormParams ln;
  ln.gain = Tensor({dim}, 1.0).set_requires_grad(true);
  ln.bias = Tensor({dim}).set_requires_grad(true);
  return ln;
}

void LayerNormParams::collect(const std::string& prefix, std::vector<ParamRef>& out) const {
  out.push_back({prefix + ".gain", gain});
  out.push_back({prefix + ".bias", bias});
}

Tensor apply_ln(const Tensor& x, const LayerNormParams& ln) { return layer_norm(x, ln.gain, ln.bias); }

FfnParams FfnParams::init(int dim, int hidden, Rng& rng) {
  FfnParams f;
  f.in = LinearLayer::init(hidden, dim, rng);
  f.out = LinearLayer::init(dim, hidden, rng);
  return f;
}

void FfnParams::collect(const std::string& prefix, std::vector<ParamRef>& o) const {
  in.collect(prefix + ".in", o);
  out.collect(prefix + ".out", o);
}

Tensor ffn(const Tensor& x, const FfnParams& f) { return linear(gelu(linear(x, f.in)), f.out); }

AttentionParams AttentionParams::init(int dim, Rng& rng) {
  AttentionParams p;
  p.q = LinearLayer::init(dim, dim, rng);
  p.k = LinearLayer::init(dim, dim, rng);
  p.v = LinearLayer::init(dim, dim, rng);
  p.o = LinearLayer::init(dim, dim, rng);
  return p;
}

void AttentionParams::collect(const std::string& prefix, std::vector<ParamRef>& out) const {
  q.collect(prefix + ".q", out);
  k.collect(prefix + ".k", out);
  v.collect(prefix + ".v", out);
  o.collect(prefix + ".o", out);
}

std::vector<double> AttnWeights::head_mean() const {
  std::vector<double> m(static_cast<std::size_t>(sq) * sk, 0.0);
  for (int h = 0; h < heads; ++h)
    for (int i = 0; i < sq; ++i)
      for (int j = 0; j < sk; ++j) m[static_cast<std::size_t>(i) * sk + j] += at(h, i, j) / heads;
  return m;
}

Tensor multi_head_attention(const Tensor& q_in, const Tensor& k_in, const Tensor& v_in,
                            const AttentionParams& p, int heads, AttnWeights* capture) {
  const int dim = p.q.W.rows();
  if (dim % heads != 0) {
    throw std::invalid_argument("multi_head_attention: dim " + std::to_string(dim) +
                                " not divisible by heads " + std::to_string(heads));
  }
  if (k_in.rows() != v_in.rows()) {
    throw std::invalid_argument("multi_head_attention: key/value length mismatch");
  }
  const int dh = dim / heads;
  const int sq = q_in.rows(), sk = k_in.rows();

  Tensor Q = linear(q_in, p.q);
  Tensor K = linear(k_in, p.k);
  Tensor V = linear(v_in, p.v);

  if (capture) {
    capture->heads = heads;
    capture->sq = sq;
    capture->sk = sk;
    capture->w.assign(static_cast<std::size_t>(heads) * sq * sk, 0.0);
  }

  std::vector<Tensor> head_outs;
  head_outs.reserve(static_cast<std::size_t>(heads));
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int h = 0; h < heads; ++h) {
    Tensor Qh = slice_cols(Q, h * dh, (h + 1) * dh);
    Tensor Kh = slice_cols(K, h * dh, (h + 1) * dh);
    Tensor Vh = slice_cols(V, h * dh, (h + 1) * dh);
    Tensor weights = softmax(scale(matmul_nt(Qh, Kh), inv_sqrt_dh), 1);
    if (capture) {
      auto dst = capture->w.begin() + static_cast<std::ptrdiff_t>(h) * sq * sk;
      std::copy(weights.data().begin(), weights.data().end(), dst);
    }
    head_outs.push_back(matmul(weights, Vh));
  }
  Tensor merged = heads == 1 ? head_outs[0] : concat_cols(head_outs);
  return linear(merged, p.o);
}

}  // namespace msqnet
