#pragma once

#include <msqnet/rng.hpp>
#include <msqnet/tensor.hpp>

#include <cmath>
#include <vector>

namespace testsupport {

inline msqnet::Tensor random_tensor(std::vector<int> shape, msqnet::Rng& rng, double lo = -1.0,
                                    double hi = 1.0) {
  msqnet::Tensor t(shape);
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

inline double max_abs_diff(const msqnet::Tensor& a, const msqnet::Tensor& b) {
  double m = 0.0;
  for (int i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.at(i) - b.at(i)));
  return m;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace testsupport
