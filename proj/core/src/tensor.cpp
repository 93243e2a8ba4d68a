#include "msqnet/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cassert>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "msqnet/rng.hpp"

namespace msqnet {

namespace {

thread_local bool g_grad_enabled = true;
std::atomic<std::uint64_t> g_seq{1};

std::size_t shape_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor: nonpositive extent in shape " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

#ifndef NDEBUG
void check_finite(const std::vector<double>& v, const char* op) {
  for (double x : v) {
    if (!std::isfinite(x)) throw std::runtime_error(std::string("non-finite value produced by ") + op);
  }
}
#define MSQ_CHECK_FINITE(vec, op) check_finite(vec, op)
#else
#define MSQ_CHECK_FINITE(vec, op) ((void)0)
#endif

// ---- raw matmul kernels (row-major, ikj order keeps the inner loop contiguous) ----

void mm_nn(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    double* ci = c + static_cast<std::ptrdiff_t>(i) * n;
    const double* ai = a + static_cast<std::ptrdiff_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double aip = ai[p];
      if (aip == 0.0) continue;
      const double* bp = b + static_cast<std::ptrdiff_t>(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

// c[m x n] += a[m x k] . b[n x k]^T
void mm_nt(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<std::ptrdiff_t>(i) * k;
    double* ci = c + static_cast<std::ptrdiff_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* bj = b + static_cast<std::ptrdiff_t>(j) * k;
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] += acc;
    }
  }
}

// c[m x n] += a[k x m]^T . b[k x n]
void mm_tn(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int p = 0; p < k; ++p) {
    const double* ap = a + static_cast<std::ptrdiff_t>(p) * m;
    const double* bp = b + static_cast<std::ptrdiff_t>(p) * n;
    for (int i = 0; i < m; ++i) {
      const double api = ap[i];
      if (api == 0.0) continue;
      double* ci = c + static_cast<std::ptrdiff_t>(i) * n;
      for (int j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
}

void require_2d(const Tensor& a, const char* op) {
  if (a.ndim() != 2) throw std::invalid_argument(std::string(op) + ": expected 2-d tensor, got " + shape_str(a.shape()));
}

}  // namespace

bool GradMode::enabled() { return g_grad_enabled; }
void GradMode::set(bool on) { g_grad_enabled = on; }

Tensor::Tensor(std::vector<int> shape, double fill) {
  std::size_t n = shape_numel(shape);
  node_ = std::make_shared<TensorNode>();
  node_->shape = std::move(shape);
  node_->data.assign(n, fill);
  node_->seq = g_seq.fetch_add(1, std::memory_order_relaxed);
}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data) {
  if (shape_numel(shape) != data.size()) {
    throw std::invalid_argument("tensor: shape " + shape_str(shape) + " does not match data length " +
                                std::to_string(data.size()));
  }
  node_ = std::make_shared<TensorNode>();
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->seq = g_seq.fetch_add(1, std::memory_order_relaxed);
}

Tensor Tensor::scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

Tensor Tensor::randn(std::vector<int> shape, Rng& rng, double std) {
  Tensor t(std::move(shape));
  for (double& x : t.node_->data) x = rng.normal(0.0, std);
  return t;
}

double Tensor::at(int i, int j, int k) const {
  return node_->data[static_cast<std::size_t>((i * dim(1) + j) * dim(2) + k)];
}

double Tensor::value() const {
  if (size() != 1) throw std::invalid_argument("value(): tensor is not a scalar, shape " + shape_str(shape()));
  return node_->data[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
  node_->requires_grad = on;
  if (on) {
    node_->grad.assign(node_->data.size(), 0.0);
  } else {
    node_->grad.clear();
  }
  return *this;
}

void Tensor::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor make_op(std::vector<int> shape, std::vector<double> data, std::vector<Tensor> parents,
               std::function<void(TensorNode&)> backward) {
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->seq = g_seq.fetch_add(1, std::memory_order_relaxed);
  if (GradMode::enabled()) {
    bool needs = false;
    for (const Tensor& p : parents) {
      if (p.node()->requires_grad) {
        needs = true;
        break;
      }
    }
    if (needs) {
      node->requires_grad = true;
      node->grad.assign(node->data.size(), 0.0);
      node->parents.reserve(parents.size());
      for (const Tensor& p : parents) node->parents.push_back(p.node());
      node->backward_fn = std::move(backward);
    }
  }
  return Tensor(std::move(node));
}

void Tensor::backward() const {
  if (size() != 1) throw std::invalid_argument("backward(): root must be scalar, shape " + shape_str(shape()));
  if (!node_->requires_grad) return;

  // Collect reachable grad-requiring nodes, then replay in decreasing
  // execution order. Parents are always created before children, so this is
  // a topological order and every op runs exactly once.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  std::vector<TensorNode*> stack{node_.get()};
  seen.insert(node_.get());
  while (!stack.empty()) {
    TensorNode* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const NodePtr& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  std::sort(order.begin(), order.end(),
            [](const TensorNode* a, const TensorNode* b) { return a->seq > b->seq; });

  node_->grad[0] += 1.0;
  for (TensorNode* n : order) {
    if (n->backward_fn) n->backward_fn(*n);
  }
}

std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------------------
// elementwise / structural
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.data().begin(), a.data().end());
  for (int i = 0; i < b.size(); ++i) out[static_cast<std::size_t>(i)] += b.at(i);
  MSQ_CHECK_FINITE(out, "add");
  return make_op(a.shape(), std::move(out), {a, b}, [](TensorNode& n) {
    for (int side = 0; side < 2; ++side) {
      TensorNode& p = *n.parents[static_cast<std::size_t>(side)];
      if (!p.requires_grad) continue;
      for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.data().begin(), a.data().end());
  for (int i = 0; i < b.size(); ++i) out[static_cast<std::size_t>(i)] -= b.at(i);
  MSQ_CHECK_FINITE(out, "sub");
  return make_op(a.shape(), std::move(out), {a, b}, [](TensorNode& n) {
    TensorNode& pa = *n.parents[0];
    TensorNode& pb = *n.parents[1];
    if (pa.requires_grad)
      for (std::size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i];
    if (pb.requires_grad)
      for (std::size_t i = 0; i < n.grad.size(); ++i) pb.grad[i] -= n.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(static_cast<std::size_t>(a.size()));
  for (int i = 0; i < a.size(); ++i) out[static_cast<std::size_t>(i)] = a.at(i) * b.at(i);
  MSQ_CHECK_FINITE(out, "mul");
  return make_op(a.shape(), std::move(out), {a, b}, [](TensorNode& n) {
    TensorNode& pa = *n.parents[0];
    TensorNode& pb = *n.parents[1];
    if (pa.requires_grad)
      for (std::size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i] * pb.data[i];
    if (pb.requires_grad)
      for (std::size_t i = 0; i < n.grad.size(); ++i) pb.grad[i] += n.grad[i] * pa.data[i];
  });
}

Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(static_cast<std::size_t>(a.size()));
  for (int i = 0; i < a.size(); ++i) out[static_cast<std::size_t>(i)] = a.at(i) * c;
  MSQ_CHECK_FINITE(out, "scale");
  return make_op(a.shape(), std::move(out), {a}, [c](TensorNode& n) {
    TensorNode& p = *n.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i] * c;
  });
}

Tensor add_scalar(const Tensor& a, double c) {
  std::vector<double> out(static_cast<std::size_t>(a.size()));
  for (int i = 0; i < a.size(); ++i) out[static_cast<std::size_t>(i)] = a.at(i) + c;
  return make_op(a.shape(), std::move(out), {a}, [](TensorNode& n) {
    TensorNode& p = *n.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i];
  });
}

Tensor add_row(const Tensor& m, const Tensor& v) {
  require_2d(m, "add_row");
  if (v.ndim() != 1 || v.size() != m.cols()) {
    throw std::invalid_argument("add_row: vector " + shape_str(v.shape()) + " does not match trailing dim of " +
                                shape_str(m.shape()));
  }
  const int rows = m.rows(), cols = m.cols();
  std::vector<double> out(m.data().begin(), m.data().end());
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) out[static_cast<std::size_t>(i * cols + j)] += v.at(j);
  MSQ_CHECK_FINITE(out, "add_row");
  return make_op(m.shape(), std::move(out), {m, v}, [rows, cols](TensorNode& n) {
    TensorNode& pm = *n.parents[0];
    TensorNode& pv = *n.parents[1];
    if (pm.requires_grad)
      for (std::size_t i = 0; i < n.grad.size(); ++i) pm.grad[i] += n.grad[i];
    if (pv.requires_grad)
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) pv.grad[static_cast<std::size_t>(j)] += n.grad[static_cast<std::size_t>(i * cols + j)];
  });
}

Tensor reshape(const Tensor& a, std::vector<int> shape) {
  if (shape_numel(shape) != static_cast<std::size_t>(a.size())) {
    throw std::invalid_argument("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return make_op(std::move(shape), std::move(out), {a}, [](TensorNode& n) {
    TensorNode& p = *n.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i];
  });
}

Tensor transpose(const Tensor& a) {
  require_2d(a, "transpose");
  const int r = a.rows(), c = a.cols();
  std::vector<double> out(static_cast<std::size_t>(r * c));
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out[static_cast<std::size_t>(j * r + i)] = a.at(i, j);
  return make_op({c, r}, std::move(out), {a}, [r, c](TensorNode& n) {
    TensorNode& p = *n.parents[0];
    if (!p.requires_grad) return;
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) p.grad[static_cast<std::size_t>(i * c + j)] += n.grad[static_cast<std::size_t>(j * r + i)];
  });
}

Tensor slice_rows(const Tensor& a, int r0, int r1) {
  require_2d(a, "slice_rows");
  if (r0 < 0 || r1 > a.rows() || r0 >= r1) throw std::invalid_argument("slice_rows: bad range");
  const int c = a.cols();
  std::vector<double> out(a.data().begin() + static_cast<std::ptrdiff_t>(r0) * c,
                          a.data().begin() + static_cast<std::ptrdiff_t>(r1) * c);
  return make_op({r1 - r0, c}, std::move(out), {a}, [r0, c](TensorNode& n) {
    TensorNode& p = *n.parents[0];
    if (!p.requires_grad) return;
    const std::size_t off = static_cast<std::size_t>(r0) * static_cast<std::size_t>(c);
    for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[off + i] += n.grad[i];
  });
}

Tensor slice_cols(const Tensor& a, int c0, int c1) {
  require_2d(a, "slice_cols");
  if (c0 < 0 || c1 > a.cols() || c0 >= c1) throw std::invalid_argument("slice_cols: bad range");
  const int r = a.rows(), c = a.cols(), w = c1 - c0;
  std::vector<double> out(static_cast<std::size_t>(r * w));
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < w; ++j) out[static_cast<std::size_t>(i * w + j)] = a.at(i, c0 + j);
  return make_op({r, w}, std::move(out), {a}, [r, c, c0, w](TensorNode& n) {
    TensorNode& p = *n.parents[0];
    if (!p.requires_grad) return;
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < w; ++j)
        p.grad[static_cast<std::size_t>(i * c + c0 + j)] += n.grad[static_cast<std::size_t>(i * w + j)];
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: empty list");
  const int c = parts[0].cols();
  int r = 0;
  for (const Tensor& p : parts) {
    require_2d(p, "concat_rows");
    if (p.cols() != c) throw std::invalid_argument("concat_rows: column mismatch");
    r += p.rows();
  }
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(r * c));
  for (const Tensor& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  std::vector<int> sizes;
  for (const Tensor& p : parts) sizes.push_back(p.size());
  return make_op({r, c}, std::move(out), parts, [sizes](TensorNode& n) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < n.parents.size(); ++k) {
      TensorNode& p = *n.parents[k];
      const std::size_t len = static_cast<std::size_t>(sizes[k]);
      if (p.requires_grad)
        for (std::size_t i = 0; i < len; ++i) p.grad[i] += n.grad[off + i];
      off += len;
    }
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty list");
  const int r = parts[0].rows();
  int c = 0;
  for (const Tensor& p : parts) {
    require_2d(p, "concat_cols");
    if (p.rows() != r) throw std::invalid_argument("concat_cols: row mismatch");
    c += p.cols();
  }
  std::vector<double> out(static_cast<std::size_t>(r * c));
  int off = 0;
  for (const Tensor& p : parts) {
    const int w = p.cols();
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < w; ++j) out[static_cast<std::size_t>(i * c + off + j)] = p.at(i, j);
    off += w;
  }
  std::vector<int> widths;
  for (const Tensor& p : parts) widths.push_back(p.cols());
  return make_op({r, c}, std::move(out), parts, [r, c, widths](TensorNode& n) {
    int off2 = 0;
    for (std::size_t k = 0; k < n.parents.size(); ++k) {
      TensorNode& p = *n.parents[k];
      const int w = widths[k];
      if (p.requires_grad)
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < w; ++j)
            p.grad[static_cast<std::size_t>(i * w + j)] += n.grad[static_cast<std::size_t>(i * c + off2 + j)];
      off2 += w;
    }
  });
}

Tensor tile_rows(const Tensor& v, int n) {
  if (v.ndim() != 1) throw std::invalid_argument("tile_rows: expected vector, got " + shape_str(v.shape()));
  const int c = v.size();
  std::vector<double> out(static_cast<std::size_t>(n * c));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) out[static_cast<std::size_t>(i * c + j)] = v.at(j);
  return make_op({n, c}, std::move(out), {v}, [n, c](TensorNode& nd) {
    TensorNode& p = *nd.parents[0];
    if (!p.requires_grad) return;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < c; ++j) p.grad[static_cast<std::size_t>(j)] += nd.grad[static_cast<std::size_t>(i * c + j)];
  });
}

Tensor gather_rows(const Tensor& a, std::vector<int> idx) {
  require_2d(a, "gather_rows");
  const int c = a.cols();
  std::vector<double> out;
  out.reserve(idx.size() * static_cast<std::size_t>(c));
  for (int r : idx) {
    if (r < 0 || r >= a.rows()) throw std::invalid_argument("gather_rows: row index out of range");
    out.insert(out.end(), a.data().begin() + static_cast<std::ptrdiff_t>(r) * c,
               a.data().begin() + static_cast<std::ptrdiff_t>(r + 1) * c);
  }
  const int n = static_cast<int>(idx.size());
  return make_op({n, c}, std::move(out), {a}, [idx = std::move(idx), c](TensorNode& nd) {
    TensorNode& p = *nd.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const std::size_t dst = static_cast<std::size_t>(idx[k]) * static_cast<std::size_t>(c);
      const std::size_t src = k * static_cast<std::size_t>(c);
      for (int j = 0; j < c; ++j) p.grad[dst + static_cast<std::size_t>(j)] += nd.grad[src + static_cast<std::size_t>(j)];
    }
  });
}

Tensor scatter_rows(const Tensor& a, std::vector<int> idx, int total_rows) {
  require_2d(a, "scatter_rows");
  if (static_cast<int>(idx.size()) != a.rows()) throw std::invalid_argument("scatter_rows: index count mismatch");
  const int c = a.cols();
  std::vector<double> out(static_cast<std::size_t>(total_rows) * c, 0.0);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const int r = idx[k];
    if (r < 0 || r >= total_rows) throw std::invalid_argument("scatter_rows: row index out of range");
    for (int j = 0; j < c; ++j)
      out[static_cast<std::size_t>(r) * c + static_cast<std::size_t>(j)] = a.at(static_cast<int>(k), j);
  }
  return make_op({total_rows, c}, std::move(out), {a}, [idx = std::move(idx), c](TensorNode& nd) {
    TensorNode& p = *nd.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const std::size_t src = static_cast<std::size_t>(idx[k]) * static_cast<std::size_t>(c);
      const std::size_t dst = k * static_cast<std::size_t>(c);
      for (int j = 0; j < c; ++j) p.grad[dst + static_cast<std::size_t>(j)] += nd.grad[src + static_cast<std::size_t>(j)];
    }
  });
}

Tensor detach(const Tensor& a) {
  NoGradGuard ng;
  return Tensor(a.shape(), std::vector<double>(a.data().begin(), a.data().end()));
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: inner dimensions disagree: " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
  const int m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(static_cast<std::size_t>(m * n), 0.0);
  mm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  MSQ_CHECK_FINITE(out, "matmul");
  return make_op({m, n}, std::move(out), {a, b}, [m, k, n](TensorNode& nd) {
    TensorNode& pa = *nd.parents[0];
    TensorNode& pb = *nd.parents[1];
    if (pa.requires_grad) mm_nt(nd.grad.data(), pb.data.data(), pa.grad.data(), m, n, k);
    if (pb.requires_grad) mm_tn(pa.data.data(), nd.grad.data(), pb.grad.data(), k, m, n);
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul_nt");
  require_2d(b, "matmul_nt");
  if (a.cols() != b.cols()) {
    throw std::invalid_argument("matmul_nt: inner dimensions disagree: " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()) + " transposed");
  }
  const int m = a.rows(), k = a.cols(), n = b.rows();
  std::vector<double> out(static_cast<std::size_t>(m * n), 0.0);
  mm_nt(a.data().data(), b.data().data(), out.data(), m, k, n);
  MSQ_CHECK_FINITE(out, "matmul_nt");
  return make_op({m, n}, std::move(out), {a, b}, [m, k, n](TensorNode& nd) {
    TensorNode& pa = *nd.parents[0];
    TensorNode& pb = *nd.parents[1];
    // C = A . B^T: dA = dC . B, dB = dC^T . A
    if (pa.requires_grad) mm_nn(nd.grad.data(), pb.data.data(), pa.grad.data(), m, n, k);
    if (pb.requires_grad) mm_tn(nd.grad.data(), pa.data.data(), pb.grad.data(), n, m, k);
  });
}

Tensor rowwise_dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "rowwise_dot");
  require_2d(a, "rowwise_dot");
  const int r = a.rows(), c = a.cols();
  std::vector<double> out(static_cast<std::size_t>(r), 0.0);
  for (int i = 0; i < r; ++i) {
    double acc = 0.0;
    for (int j = 0; j < c; ++j) acc += a.at(i, j) * b.at(i, j);
    out[static_cast<std::size_t>(i)] = acc;
  }
  return make_op({r}, std::move(out), {a, b}, [r, c](TensorNode& nd) {
    TensorNode& pa = *nd.parents[0];
    TensorNode& pb = *nd.parents[1];
    for (int i = 0; i < r; ++i) {
      const double g = nd.grad[static_cast<std::size_t>(i)];
      for (int j = 0; j < c; ++j) {
        const std::size_t ij = static_cast<std::size_t>(i * c + j);
        if (pa.requires_grad) pa.grad[ij] += g * pb.data[ij];
        if (pb.requires_grad) pb.grad[ij] += g * pa.data[ij];
      }
    }
  });
}

// ---------------------------------------------------------------------------
// nonlinearities and reductions
// ---------------------------------------------------------------------------

namespace {

// iterate slices of `shape` along `axis`: outer x inner layout
struct AxisIter {
  int outer, extent, inner;
  AxisIter(const std::vector<int>& shape, int axis) {
    if (axis < 0 || axis >= static_cast<int>(shape.size())) throw std::invalid_argument("softmax: bad axis");
    outer = 1;
    for (int i = 0; i < axis; ++i) outer *= shape[static_cast<std::size_t>(i)];
    extent = shape[static_cast<std::size_t>(axis)];
    inner = 1;
    for (int i = axis + 1; i < static_cast<int>(shape.size()); ++i) inner *= shape[static_cast<std::size_t>(i)];
  }
};

}  // namespace

Tensor softmax(const Tensor& x, int axis) {
  AxisIter it(x.shape(), axis);
  std::vector<double> out(static_cast<std::size_t>(x.size()));
  const auto xd = x.data();
  for (int o = 0; o < it.outer; ++o) {
    for (int in = 0; in < it.inner; ++in) {
      const std::size_t base = static_cast<std::size_t>(o) * it.extent * it.inner + static_cast<std::size_t>(in);
      double mx = -1e300;
      for (int e = 0; e < it.extent; ++e) mx = std::max(mx, xd[base + static_cast<std::size_t>(e) * it.inner]);
      double den = 0.0;
      for (int e = 0; e < it.extent; ++e) {
        const double v = std::exp(xd[base + static_cast<std::size_t>(e) * it.inner] - mx);
        out[base + static_cast<std::size_t>(e) * it.inner] = v;
        den += v;
      }
      for (int e = 0; e < it.extent; ++e) out[base + static_cast<std::size_t>(e) * it.inner] /= den;
    }
  }
  MSQ_CHECK_FINITE(out, "softmax");
  return make_op(x.shape(), std::move(out), {x}, [it](TensorNode& nd) {
    TensorNode& p = *nd.parents[0];
    if (!p.requires_grad) return;
    for (int o = 0; o < it.outer; ++o) {
      for (int in = 0; in < it.inner; ++in) {
        const std::size_t base = static_cast<std::size_t>(o) * it.extent * it.inner + static_cast<std::size_t>(in);
        double dot = 0.0;
        for (int e = 0; e < it.extent; ++e) {
          const std::size_t idx = base + static_cast<std::size_t>(e) * it.inner;
          dot += nd.grad[idx] * nd.data[idx];
        }
        for (int e = 0; e < it.extent; ++e) {
          const std::size_t idx = base + static_cast<std::size_t>(e) * it.inner;
          p.grad[idx] += (nd.grad[idx] - dot) * nd.data[idx];
        }
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const int d = x.dim(x.ndim() - 1);
  if (gain.ndim() != 1 || gain.size() != d || bias.ndim() != 1 || bias.size() != d) {
    throw std::invalid_argument("layer_norm: gain/bias must be vectors of length " + std::to_string(d));
  }
  if (eps <= 0.0) throw std::invalid_argument("layer_norm: eps must be positive");
  const int rows = x.size() / d;
  std::vector<double> out(static_cast<std::size_t>(x.size()));
  std::vector<double> inv_std(static_cast<std::size_t>(rows));
  std::vector<double> xhat(static_cast<std::size_t>(x.size()));
  const auto xd = x.data();
  for (int i = 0; i < rows; ++i) {
    const std::size_t off = static_cast<std::size_t>(i) * d;
    double mean = 0.0;
    for (int j = 0; j < d; ++j) mean += xd[off + static_cast<std::size_t>(j)];
    mean /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) {
      const double c = xd[off + static_cast<std::size_t>(j)] - mean;
      var += c * c;
    }
    var /= d;
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(i)] = is;
    for (int j = 0; j < d; ++j) {
      const double h = (xd[off + static_cast<std::size_t>(j)] - mean) * is;
      xhat[off + static_cast<std::size_t>(j)] = h;
      out[off + static_cast<std::size_t>(j)] = gain.at(j) * h + bias.at(j);
    }
  }
  MSQ_CHECK_FINITE(out, "layer_norm");
  return make_op(x.shape(), std::move(out), {x, gain, bias},
                 [rows, d, inv_std = std::move(inv_std), xhat = std::move(xhat)](TensorNode& nd) {
                   TensorNode& px = *nd.parents[0];
                   TensorNode& pg = *nd.parents[1];
                   TensorNode& pb = *nd.parents[2];
                   for (int i = 0; i < rows; ++i) {
                     const std::size_t off = static_cast<std::size_t>(i) * d;
                     double sum_dg = 0.0, sum_dgx = 0.0;
                     for (int j = 0; j < d; ++j) {
                       const std::size_t idx = off + static_cast<std::size_t>(j);
                       const double dg = nd.grad[idx] * pg.data[static_cast<std::size_t>(j)];
                       sum_dg += dg;
                       sum_dgx += dg * xhat[idx];
                       if (pg.requires_grad) pg.grad[static_cast<std::size_t>(j)] += nd.grad[idx] * xhat[idx];
                       if (pb.requires_grad) pb.grad[static_cast<std::size_t>(j)] += nd.grad[idx];
                     }
                     if (!px.requires_grad) continue;
                     const double is = inv_std[static_cast<std::size_t>(i)];
                     for (int j = 0; j < d; ++j) {
                       const std::size_t idx = off + static_cast<std::size_t>(j);
                       const double dg = nd.grad[idx] * pg.data[static_cast<std::size_t>(j)];
                       px.grad[idx] += is * (dg - sum_dg / d - xhat[idx] * sum_dgx / d);
                     }
                   }
                 });
}

namespace {
constexpr double kInvSqrt2 = 0.7071067811865476;
constexpr double kInvSqrt2Pi = 0.3989422804014327;
}  // namespace

Tensor gelu(const Tensor& x) {
  std::vector<double> out(static_cast<std::size_t>(x.size()));
  for (int i = 0; i < x.size(); ++i) {
    const double v = x.at(i);
    out[static_cast<std::size_t>(i)] = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
  }
  MSQ_CHECK_FINITE(out, "gelu");
  return make_op(x.shape(), std::move(out), {x}, [](TensorNode& nd) {
    TensorNode& p = *nd.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t i = 0; i < nd.grad.size(); ++i) {
      const double v = p.data[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
      p.grad[i] += nd.grad[i] * (cdf + v * pdf);
    }
  });
}

Tensor sigmoid(const Tensor& x) {
  std::vector<double> out(static_cast<std::size_t>(x.size()));
  for (int i = 0; i < x.size(); ++i) {
    const double v = x.at(i);
    out[static_cast<std::size_t>(i)] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  return make_op(x.shape(), std::move(out), {x}, [](TensorNode& nd) {
    TensorNode& p = *nd.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t i = 0; i < nd.grad.size(); ++i) {
      const double y = nd.data[i];
      p.grad[i] += nd.grad[i] * y * (1.0 - y);
    }
  });
}

Tensor mean_rows(const Tensor& m) {
  require_2d(m, "mean_rows");
  const int r = m.rows(), c = m.cols();
  std::vector<double> out(static_cast<std::size_t>(c), 0.0);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out[static_cast<std::size_t>(j)] += m.at(i, j);
  for (double& v : out) v /= r;
  return make_op({c}, std::move(out), {m}, [r, c](TensorNode& nd) {
    TensorNode& p = *nd.parents[0];
    if (!p.requires_grad) return;
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) p.grad[static_cast<std::size_t>(i * c + j)] += nd.grad[static_cast<std::size_t>(j)] / r;
  });
}

Tensor sum_all(const Tensor& a) {
  double acc = 0.0;
  for (int i = 0; i < a.size(); ++i) acc += a.at(i);
  return make_op({1}, {acc}, {a}, [](TensorNode& nd) {
    TensorNode& p = *nd.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += nd.grad[0];
  });
}

Tensor mean_all(const Tensor& a) {
  double acc = 0.0;
  for (int i = 0; i < a.size(); ++i) acc += a.at(i);
  const int n = a.size();
  return make_op({1}, {acc / n}, {a}, [n](TensorNode& nd) {
    TensorNode& p = *nd.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += nd.grad[0] / n;
  });
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

namespace {
double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }
double sigmoid_scalar(double z) { return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }
}  // namespace

Tensor bce_with_logits_mean(const Tensor& logits, const Tensor& targets) {
  require_same_shape(logits, targets, "bce_with_logits_mean");
  const int n = logits.size();
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = logits.at(i);
    const double y = targets.at(i);
    // y*softplus(-z) + (1-y)*softplus(z) == softplus(z) - y*z
    acc += softplus(z) - y * z;
  }
  return make_op({1}, {acc / n}, {logits, targets}, [n](TensorNode& nd) {
    TensorNode& pz = *nd.parents[0];
    TensorNode& py = *nd.parents[1];
    if (!pz.requires_grad) return;
    const double g = nd.grad[0] / n;
    for (std::size_t i = 0; i < pz.grad.size(); ++i) {
      pz.grad[i] += g * (sigmoid_scalar(pz.data[i]) - py.data[i]);
    }
  });
}

Tensor softmax_xent_mean(const Tensor& logits, const Tensor& onehot) {
  require_same_shape(logits, onehot, "softmax_xent_mean");
  require_2d(logits, "softmax_xent_mean");
  const int rows = logits.rows(), k = logits.cols();
  for (int i = 0; i < rows; ++i) {
    double s = 0.0;
    for (int j = 0; j < k; ++j) s += onehot.at(i, j);
    if (std::abs(s - 1.0) > 1e-9) {
      throw std::invalid_argument("softmax_xent_mean: row " + std::to_string(i) + " is not one-hot");
    }
  }
  std::vector<double> probs(static_cast<std::size_t>(rows * k));
  double acc = 0.0;
  for (int i = 0; i < rows; ++i) {
    double mx = -1e300;
    for (int j = 0; j < k; ++j) mx = std::max(mx, logits.at(i, j));
    double den = 0.0;
    for (int j = 0; j < k; ++j) den += std::exp(logits.at(i, j) - mx);
    const double logden = std::log(den) + mx;
    for (int j = 0; j < k; ++j) {
      probs[static_cast<std::size_t>(i * k + j)] = std::exp(logits.at(i, j) - logden);
      acc -= onehot.at(i, j) * (logits.at(i, j) - logden);
    }
  }
  return make_op({1}, {acc / rows}, {logits, onehot},
                 [rows, k, probs = std::move(probs)](TensorNode& nd) {
                   TensorNode& pz = *nd.parents[0];
                   TensorNode& py = *nd.parents[1];
                   if (!pz.requires_grad) return;
                   const double g = nd.grad[0] / rows;
                   for (std::size_t i = 0; i < pz.grad.size(); ++i) {
                     pz.grad[i] += g * (probs[i] - py.data[i]);
                   }
                 });
}

// ---------------------------------------------------------------------------
// gradient checking
// ---------------------------------------------------------------------------

GradCheckReport grad_check(const std::function<Tensor()>& f, const std::vector<ParamRef>& params,
                           double h, double tol) {
  GradCheckReport report;
  report.tol = tol;

  // analytic gradients from one taped pass
  for (const ParamRef& p : params) {
    if (!p.value.requires_grad()) {
      throw std::invalid_argument("grad_check: parameter '" + p.name + "' does not require grad");
    }
    Tensor t = p.value;  // handles share the node
    t.zero_grad();
  }
  Tensor loss = f();
  loss.backward();

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const ParamRef& p : params) analytic.emplace_back(p.value.grad().begin(), p.value.grad().end());

  // central differences, gradients off
  NoGradGuard ng;
  constexpr double kFloor = 1e-3;  // magnitude floor for the relative error
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor t = params[pi].value;
    auto d = t.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double orig = d[i];
      d[i] = orig + h;
      const double fp = f().value();
      d[i] = orig - h;
      const double fm = f().value();
      d[i] = orig;
      const double fd = (fp - fm) / (2.0 * h);
      const double an = analytic[pi][i];
      const double rel = std::abs(an - fd) / std::max({kFloor, std::abs(an), std::abs(fd)});
      ++report.coords_checked;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = params[pi].name;
        report.worst_index = static_cast<int>(i);
      }
      if (rel > tol) {
        report.violations.push_back(params[pi].name + "[" + std::to_string(i) + "]: analytic=" +
                                    std::to_string(an) + " fd=" + std::to_string(fd));
      }
    }
  }
  return report;
}

}  // namespace msqnet
