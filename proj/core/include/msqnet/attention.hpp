#pragma once

#include <vector>

#include "msqnet/rng.hpp"
#include "msqnet/tensor.hpp"

namespace msqnet {

// y = x . W^T + b, with W stored [out x in]
struct LinearLayer {
  Tensor W;
  Tensor b;
  static LinearLayer init(int out, int in, Rng& rng);
  void collect(const std::string& prefix, std::vector<ParamRef>& out) const;
};

Tensor linear(const Tensor& x, const LinearLayer& l);

struct LayerNormParams {
  Tensor gain;
  Tensor bias;
  static LayerNormParams init(int dim);
  void collect(const std::string& prefix, std::vector<ParamRef>& out) const;
};

Tensor apply_ln(const Tensor& x, const LayerNormParams& ln);

// expand -> gelu -> contract
struct FfnParams {
  LinearLayer in, out;
  static FfnParams init(int dim, int hidden, Rng& rng);
  void collect(const std::string& prefix, std::vector<ParamRef>& o) const;
};

Tensor ffn(const Tensor& x, const FfnParams& f);

struct AttentionParams {
  LinearLayer q, k, v, o;
  static AttentionParams init(int dim, Rng& rng);
  void collect(const std::string& prefix, std::vector<ParamRef>& out) const;
};

// Captured attention weights for one call: heads x Sq x Sk, plain values.
struct AttnWeights {
  int heads = 0, sq = 0, sk = 0;
  std::vector<double> w;
  double at(int h, int i, int j) const {
    return w[(static_cast<std::size_t>(h) * sq + static_cast<std::size_t>(i)) * sk + static_cast<std::size_t>(j)];
  }
  // mean over heads -> row-stochastic [sq x sk]
  std::vector<double> head_mean() const;
};

// Scaled dot-product multi-head attention. Position encodings, when used,
// are already added to q_in/k_in by the caller; v_in stays raw.
Tensor multi_head_attention(const Tensor& q_in, const Tensor& k_in, const Tensor& v_in,
                            const AttentionParams& p, int heads, AttnWeights* capture = nullptr);

}  // namespace msqnet
