// Minimal dense tensor with reverse-mode automatic differentiation.
// Row-major storage, dynamic tape built during the forward pass. Matrix
// products are delegated to Eigen; everything else is plain loops so the
// results are bit-reproducible on a single thread.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace transrppg {

namespace detail {

inline std::string shape_str(const std::vector<size_t>& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

template <typename T>
struct Node {
  std::vector<size_t> shape;
  std::vector<T> data;
  std::vector<T> grad;  // allocated lazily, same length as data
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node<T>>> inputs;
  std::function<void()> backprop;  // accumulates into input grads
  const char* op = "leaf";

  size_t size() const { return data.size(); }

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }
};

template <typename T>
void check_finite(const std::vector<T>& v, const char* op) {
  for (const T& x : v) {
    if (!std::isfinite(static_cast<double>(x))) {
      throw std::runtime_error(std::string("non-finite value produced by op '") + op + "'");
    }
  }
}

template <typename T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Map = Eigen::Map<EMat<T>>;
template <typename T>
using CMap = Eigen::Map<const EMat<T>>;

}  // namespace detail

template <typename T>
class Tensor {
 public:
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() = default;
  explicit Tensor(NodePtr n) : n_(std::move(n)) {}

  static Tensor zeros(std::vector<size_t> shape, bool requires_grad = false) {
    return filled(std::move(shape), T(0), requires_grad);
  }

  static Tensor filled(std::vector<size_t> shape, T value, bool requires_grad = false) {
    auto n = std::make_shared<detail::Node<T>>();
    size_t total = 1;
    for (size_t e : shape) {
      if (e == 0) throw std::invalid_argument("tensor extents must be positive");
      total *= e;
    }
    n->shape = std::move(shape);
    n->data.assign(total, value);
    n->requires_grad = requires_grad;
    return Tensor(n);
  }

  static Tensor from_data(std::vector<size_t> shape, std::vector<T> data,
                          bool requires_grad = false) {
    size_t total = 1;
    for (size_t e : shape) total *= e;
    if (total != data.size())
      throw std::invalid_argument("data length " + std::to_string(data.size()) +
                                  " does not match shape " + detail::shape_str(shape));
    auto n = std::make_shared<detail::Node<T>>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    n->requires_grad = requires_grad;
    return Tensor(n);
  }

  static Tensor scalar(T v, bool requires_grad = false) {
    return from_data({1}, {v}, requires_grad);
  }

  bool valid() const { return n_ != nullptr; }
  const std::vector<size_t>& shape() const { return n_->shape; }
  size_t rank() const { return n_->shape.size(); }
  size_t size() const { return n_->data.size(); }
  size_t extent(size_t axis) const { return n_->shape.at(axis); }

  std::vector<T>& data() { return n_->data; }
  const std::vector<T>& data() const { return n_->data; }
  T item() const {
    if (size() != 1) throw std::invalid_argument("item() on non-scalar tensor");
    return n_->data[0];
  }

  bool requires_grad() const { return n_->requires_grad; }
  void set_requires_grad(bool v) { n_->requires_grad = v; }

  bool has_grad() const { return n_->grad.size() == n_->data.size(); }
  const std::vector<T>& grad() const {
    if (!has_grad()) throw std::runtime_error("gradient not populated");
    return n_->grad;
  }
  std::vector<T>& grad_mutable() {
    n_->ensure_grad();
    return n_->grad;
  }
  void zero_grad() {
    n_->grad.assign(n_->data.size(), T(0));
  }

  // Reverse-mode sweep from a scalar root, in exact reverse topological
  // order of forward construction.
  void backward() const {
    if (size() != 1) throw std::invalid_argument("backward() requires a scalar root");
    std::vector<detail::Node<T>*> order;
    std::unordered_set<detail::Node<T>*> seen;
    std::vector<std::pair<detail::Node<T>*, size_t>> stack;
    stack.push_back({n_.get(), 0});
    seen.insert(n_.get());
    while (!stack.empty()) {
      auto& [node, idx] = stack.back();
      if (idx < node->inputs.size()) {
        detail::Node<T>* child = node->inputs[idx++].get();
        if (seen.insert(child).second) stack.push_back({child, 0});
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
    n_->ensure_grad();
    n_->grad[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      if ((*it)->backprop && (*it)->requires_grad) (*it)->backprop();
    }
  }

  NodePtr node() const { return n_; }

 private:
  NodePtr n_;
};

namespace detail {

template <typename T>
std::shared_ptr<Node<T>> make_out(std::vector<size_t> shape, const char* op) {
  auto n = std::make_shared<Node<T>>();
  size_t total = 1;
  for (size_t e : shape) total *= e;
  n->shape = std::move(shape);
  n->data.resize(total);
  n->op = op;
  return n;
}

template <typename T>
void wire(const std::shared_ptr<Node<T>>& out,
          std::vector<std::shared_ptr<Node<T>>> inputs, std::function<void()> backprop) {
  bool req = false;
  for (auto& in : inputs) req = req || in->requires_grad;
  out->requires_grad = req;
  if (req) {
    out->inputs = std::move(inputs);
    out->backprop = std::move(backprop);
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Forward ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(0))
    throw std::invalid_argument("matmul shape mismatch: " + detail::shape_str(a.shape()) +
                                " x " + detail::shape_str(b.shape()));
  const size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  auto out = detail::make_out<T>({m, n}, "matmul");
  detail::CMap<T> A(a.data().data(), m, k), B(b.data().data(), k, n);
  detail::Map<T>(out->data.data(), m, n).noalias() = A * B;
  detail::check_finite(out->data, "matmul");
  auto an = a.node(), bn = b.node();
  detail::Node<T>* o = out.get();
  detail::wire<T>(out, {an, bn}, [o, an, bn, m, k, n]() {
    detail::CMap<T> dC(o->grad.data(), m, n);
    if (an->requires_grad) {
      an->ensure_grad();
      detail::CMap<T> B(bn->data.data(), k, n);
      detail::Map<T>(an->grad.data(), m, k).noalias() += dC * B.transpose();
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      detail::CMap<T> A(an->data.data(), m, k);
      detail::Map<T>(bn->grad.data(), k, n).noalias() += A.transpose() * dC;
    }
  });
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("add shape mismatch: " + detail::shape_str(a.shape()) +
                                " vs " + detail::shape_str(b.shape()));
  auto out = detail::make_out<T>(a.shape(), "add");
  const auto& av = a.data();
  const auto& bv = b.data();
  for (size_t i = 0; i < av.size(); ++i) out->data[i] = av[i] + bv[i];
  detail::check_finite(out->data, "add");
  auto an = a.node(), bn = b.node();
  detail::Node<T>* o = out.get();
  detail::wire<T>(out, {an, bn}, [o, an, bn]() {
    for (auto* in : {an.get(), bn.get()}) {
      if (!in->requires_grad) continue;
      in->ensure_grad();
      for (size_t i = 0; i < o->grad.size(); ++i) in->grad[i] += o->grad[i];
    }
  });
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("mul shape mismatch: " + detail::shape_str(a.shape()) +
                                " vs " + detail::shape_str(b.shape()));
  auto out = detail::make_out<T>(a.shape(), "mul");
  for (size_t i = 0; i < a.size(); ++i) out->data[i] = a.data()[i] * b.data()[i];
  detail::check_finite(out->data, "mul");
  auto an = a.node(), bn = b.node();
  detail::Node<T>* o = out.get();
  detail::wire<T>(out, {an, bn}, [o, an, bn]() {
    if (an->requires_grad) {
      an->ensure_grad();
      for (size_t i = 0; i < o->grad.size(); ++i) an->grad[i] += o->grad[i] * bn->data[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (size_t i = 0; i < o->grad.size(); ++i) bn->grad[i] += o->grad[i] * an->data[i];
    }
  });
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c) {
  auto out = detail::make_out<T>(a.shape(), "scale");
  for (size_t i = 0; i < a.size(); ++i) out->data[i] = a.data()[i] * c;
  detail::check_finite(out->data, "scale");
  auto an = a.node();
  detail::Node<T>* o = out.get();
  detail::wire<T>(out, {an}, [o, an, c]() {
    an->ensure_grad();
    for (size_t i = 0; i < o->grad.size(); ++i) an->grad[i] += o->grad[i] * c;
  });
  return Tensor<T>(out);
}

// x (r x c) + bias (c), broadcast over rows.
template <typename T>
Tensor<T> add_bias_row(const Tensor<T>& x, const Tensor<T>& bias) {
  if (x.rank() != 2 || bias.size() != x.extent(1))
    throw std::invalid_argument("add_bias_row shape mismatch: " +
                                detail::shape_str(x.shape()) + " + " +
                                detail::shape_str(bias.shape()));
  const size_t r = x.extent(0), c = x.extent(1);
  auto out = detail::make_out<T>({r, c}, "add_bias_row");
  for (size_t i = 0; i < r; ++i)
    for (size_t j = 0; j < c; ++j) out->data[i * c + j] = x.data()[i * c + j] + bias.data()[j];
  detail::check_finite(out->data, "add_bias_row");
  auto xn = x.node(), bn = bias.node();
  detail::Node<T>* o = out.get();
  detail::wire<T>(out, {xn, bn}, [o, xn, bn, r, c]() {
    if (xn->requires_grad) {
      xn->ensure_grad();
      for (size_t i = 0; i < r * c; ++i) xn->grad[i] += o->grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (size_t i = 0; i < r; ++i)
        for (size_t j = 0; j < c; ++j) bn->grad[j] += o->grad[i * c + j];
    }
  });
  return Tensor<T>(out);
}

// Numerically stable softmax along an arbitrary axis.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, size_t axis) {
  if (axis >= x.rank()) throw std::invalid_argument("softmax axis out of range");
  size_t outer = 1, inner = 1;
  const size_t n = x.extent(axis);
  for (size_t i = 0; i < axis; ++i) outer *= x.extent(i);
  for (size_t i = axis + 1; i < x.rank(); ++i) inner *= x.extent(i);
  auto out = detail::make_out<T>(x.shape(), "softmax");
  const auto& xv = x.data();
  for (size_t a = 0; a < outer; ++a) {
    for (size_t b = 0; b < inner; ++b) {
      const size_t base = a * n * inner + b;
      T mx = xv[base];
      for (size_t k = 1; k < n; ++k) mx = std::max(mx, xv[base + k * inner]);
      T sum = T(0);
      for (size_t k = 0; k < n; ++k) {
        T e = std::exp(xv[base + k * inner] - mx);
        out->data[base + k * inner] = e;
        sum += e;
      }
      for (size_t k = 0; k < n; ++k) out->data[base + k * inner] /= sum;
    }
  }
  detail::check_finite(out->data, "softmax");
  auto xn = x.node();
  detail::Node<T>* o = out.get();
  detail::wire<T>(out, {xn}, [o, xn, outer, inner, n]() {
    xn->ensure_grad();
    for (size_t a = 0; a < outer; ++a) {
      for (size_t b = 0; b < inner; ++b) {
        const size_t base = a * n * inner + b;
        T dot = T(0);
        for (size_t k = 0; k < n; ++k)
          dot += o->grad[base + k * inner] * o->data[base + k * inner];
        for (size_t k = 0; k < n; ++k) {
          const size_t idx = base + k * inner;
          xn->grad[idx] += o->data[idx] * (o->grad[idx] - dot);
        }
      }
    }
  });
  return Tensor<T>(out);
}

// Layer normalization over the last dimension: y = gain * (x-mu)/sqrt(var+eps) + bias.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                     T eps = T(1e-6)) {
  const size_t d = x.extent(x.rank() - 1);
  if (gain.size() != d || bias.size() != d)
    throw std::invalid_argument("layer_norm gain/bias must have length " + std::to_string(d));
  const size_t rows = x.size() / d;
  auto out = detail::make_out<T>(x.shape(), "layer_norm");
  // saved inverse stddev and normalized values for backward
  auto inv_std = std::make_shared<std::vector<T>>(rows);
  auto xhat = std::make_shared<std::vector<T>>(x.size());
  const auto& xv = x.data();
  for (size_t i = 0; i < rows; ++i) {
    T mu = T(0);
    for (size_t j = 0; j < d; ++j) mu += xv[i * d + j];
    mu /= T(d);
    T var = T(0);
    for (size_t j = 0; j < d; ++j) {
      T c = xv[i * d + j] - mu;
      var += c * c;
    }
    var /= T(d);
    T inv = T(1) / std::sqrt(var + eps);
    (*inv_std)[i] = inv;
    for (size_t j = 0; j < d; ++j) {
      T h = (xv[i * d + j] - mu) * inv;
      (*xhat)[i * d + j] = h;
      out->data[i * d + j] = gain.data()[j] * h + bias.data()[j];
    }
  }
  detail::check_finite(out->data, "layer_norm");
  auto xn = x.node(), gn = gain.node(), bn = bias.node();
  detail::Node<T>* o = out.get();
  detail::wire<T>(out, {xn, gn, bn}, [o, xn, gn, bn, inv_std, xhat, rows, d]() {
    if (gn->requires_grad) gn->ensure_grad();
    if (bn->requires_grad) bn->ensure_grad();
    if (xn->requires_grad) xn->ensure_grad();
    for (size_t i = 0; i < rows; ++i) {
      T mean_dh = T(0), mean_dh_h = T(0);
      for (size_t j = 0; j < d; ++j) {
        const size_t idx = i * d + j;
        T dy = o->grad[idx];
        if (gn->requires_grad) gn->grad[j] += dy * (*xhat)[idx];
        if (bn->requires_grad) bn->grad[j] += dy;
        T dh = dy * gn->data[j];
        mean_dh += dh;
        mean_dh_h += dh * (*xhat)[idx];
      }
      if (!xn->requires_grad) continue;
      mean_dh /= T(d);
      mean_dh_h /= T(d);
      for (size_t j = 0; j < d; ++j) {
        const size_t idx = i * d + j;
        T dh = o->grad[idx] * gn->data[j];
        xn->grad[idx] += (*inv_std)[i] * (dh - mean_dh - (*xhat)[idx] * mean_dh_h);
      }
    }
  });
  return Tensor<T>(out);
}

// Exact erf-based GELU: x * Phi(x).
template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  auto out = detail::make_out<T>(x.shape(), "gelu");
  for (size_t i = 0; i < x.size(); ++i) {
    T v = x.data()[i];
    out->data[i] = v * T(0.5) * std::erfc(-v * T(0.7071067811865475244));
  }
  detail::check_finite(out->data, "gelu");
  auto xn = x.node();
  detail::Node<T>* o = out.get();
  detail::wire<T>(out, {xn}, [o, xn]() {
    xn->ensure_grad();
    constexpr T inv_sqrt2pi = T(0.3989422804014326779);
    for (size_t i = 0; i < o->grad.size(); ++i) {
      T v = xn->data[i];
      T phi_cdf = T(0.5) * std::erfc(-v * T(0.7071067811865475244));
      T phi_pdf = inv_sqrt2pi * std::exp(T(-0.5) * v * v);
      xn->grad[i] += o->grad[i] * (phi_cdf + v * phi_pdf);
    }
  });
  return Tensor<T>(out);
}

// Numerically stable binary cross entropy with logits; label in {0,1}.
template <typename T>
Tensor<T> bce_with_logits(const Tensor<T>& logit, int label) {
  if (logit.size() != 1) throw std::invalid_argument("bce_with_logits expects a scalar logit");
  if (label != 0 && label != 1) throw std::invalid_argument("bce_with_logits label must be 0 or 1");
  T z = logit.data()[0];
  T y = T(label);
  T loss = std::max(z, T(0)) - z * y + std::log1p(std::exp(-std::fabs(z)));
  auto out = detail::make_out<T>({1}, "bce_with_logits");
  out->data[0] = loss;
  detail::check_finite(out->data, "bce_with_logits");
  auto ln = logit.node();
  detail::Node<T>* o = out.get();
  detail::wire<T>(out, {ln}, [o, ln, y]() {
    ln->ensure_grad();
    T z = ln->data[0];
    T sig = z >= T(0) ? T(1) / (T(1) + std::exp(-z))
                      : std::exp(z) / (T(1) + std::exp(z));
    ln->grad[0] += o->grad[0] * (sig - y);
  });
  return Tensor<T>(out);
}

// Fused scaled dot-product attention for one head:
//   A = softmax(Q K^T * scale), out = A V.
// Keeps only A as the saved intermediate. When attn_out is non-null the
// attention matrix is copied there (values only, no tape entry).
template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, T scale_factor,
                    std::vector<T>* attn_out = nullptr) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.extent(1) != k.extent(1) ||
      k.extent(0) != v.extent(0))
    throw std::invalid_argument("attention shape mismatch: Q" + detail::shape_str(q.shape()) +
                                " K" + detail::shape_str(k.shape()) + " V" +
                                detail::shape_str(v.shape()));
  const size_t s = q.extent(0), d = q.extent(1), s2 = k.extent(0), dv = v.extent(1);
  auto attn = std::make_shared<std::vector<T>>(s * s2);
  {
    detail::CMap<T> Q(q.data().data(), s, d), K(k.data().data(), s2, d);
    detail::Map<T> A(attn->data(), s, s2);
    A.noalias() = Q * K.transpose();
    A *= scale_factor;
    for (size_t i = 0; i < s; ++i) {
      T* row = attn->data() + i * s2;
      T mx = row[0];
      for (size_t j = 1; j < s2; ++j) mx = std::max(mx, row[j]);
      T sum = T(0);
      for (size_t j = 0; j < s2; ++j) {
        row[j] = std::exp(row[j] - mx);
        sum += row[j];
      }
      for (size_t j = 0; j < s2; ++j) row[j] /= sum;
    }
  }
  if (attn_out) *attn_out = *attn;
  auto out = detail::make_out<T>({s, dv}, "attention");
  {
    detail::CMap<T> A(attn->data(), s, s2), V(v.data().data(), s2, dv);
    detail::Map<T>(out->data.data(), s, dv).noalias() = A * V;
  }
  detail::check_finite(out->data, "attention");
  auto qn = q.node(), kn = k.node(), vn = v.node();
  detail::Node<T>* o = out.get();
  detail::wire<T>(out, {qn, kn, vn}, [o, qn, kn, vn, attn, scale_factor, s, d, s2, dv]() {
    detail::CMap<T> dO(o->grad.data(), s, dv);
    detail::CMap<T> A(attn->data(), s, s2);
    if (vn->requires_grad) {
      vn->ensure_grad();
      detail::Map<T>(vn->grad.data(), s2, dv).noalias() += A.transpose() * dO;
    }
    if (!qn->requires_grad && !kn->requires_grad) return;
    detail::EMat<T> dS(s, s2);
    {
      detail::CMap<T> V(vn->data.data(), s2, dv);
      dS.noalias() = dO * V.transpose();  // dA
      for (size_t i = 0; i < s; ++i) {
        T dot = T(0);
        for (size_t j = 0; j < s2; ++j) dot += dS(i, j) * A(i, j);
        for (size_t j = 0; j < s2; ++j) dS(i, j) = A(i, j) * (dS(i, j) - dot) * scale_factor;
      }
    }
    if (qn->requires_grad) {
      qn->ensure_grad();
      detail::CMap<T> K(kn->data.data(), s2, d);
      detail::Map<T>(qn->grad.data(), s, d).noalias() += dS * K;
    }
    if (kn->requires_grad) {
      kn->ensure_grad();
      detail::CMap<T> Q(qn->data.data(), s, d);
      detail::Map<T>(kn->grad.data(), s2, d).noalias() += dS.transpose() * Q;
    }
  });
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& x, size_t r0, size_t r1) {
  if (x.rank() != 2 || r0 >= r1 || r1 > x.extent(0))
    throw std::invalid_argument("slice_rows range invalid for " + detail::shape_str(x.shape()));
  const size_t c = x.extent(1);
  auto out = detail::make_out<T>({r1 - r0, c}, "slice_rows");
  std::copy(x.data().begin() + r0 * c, x.data().begin() + r1 * c, out->data.begin());
  auto xn = x.node();
  detail::Node<T>* o = out.get();
  detail::wire<T>(out, {xn}, [o, xn, r0, c]() {
    xn->ensure_grad();
    for (size_t i = 0; i < o->grad.size(); ++i) xn->grad[r0 * c + i] += o->grad[i];
  });
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, size_t c0, size_t c1) {
  if (x.rank() != 2 || c0 >= c1 || c1 > x.extent(1))
    throw std::invalid_argument("slice_cols range invalid for " + detail::shape_str(x.shape()));
  const size_t r = x.extent(0), c = x.extent(1), w = c1 - c0;
  auto out = detail::make_out<T>({r, w}, "slice_cols");
  for (size_t i = 0; i < r; ++i)
    std::copy(x.data().begin() + i * c + c0, x.data().begin() + i * c + c1,
              out->data.begin() + i * w);
  auto xn = x.node();
  detail::Node<T>* o = out.get();
  detail::wire<T>(out, {xn}, [o, xn, c0, c, w]() {
    xn->ensure_grad();
    const size_t r = o->shape[0];
    for (size_t i = 0; i < r; ++i)
      for (size_t j = 0; j < w; ++j) xn->grad[i * c + c0 + j] += o->grad[i * w + j];
  });
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows needs at least one input");
  const size_t c = parts[0].extent(1);
  size_t rows = 0;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.extent(1) != c)
      throw std::invalid_argument("concat_rows column mismatch");
    rows += p.extent(0);
  }
  auto out = detail::make_out<T>({rows, c}, "concat_rows");
  size_t off = 0;
  std::vector<typename Tensor<T>::NodePtr> ins;
  std::vector<size_t> offsets;
  for (const auto& p : parts) {
    std::copy(p.data().begin(), p.data().end(), out->data.begin() + off);
    ins.push_back(p.node());
    offsets.push_back(off);
    off += p.size();
  }
  detail::Node<T>* o = out.get();
  detail::wire<T>(out, ins, [o, ins, offsets]() {
    for (size_t p = 0; p < ins.size(); ++p) {
      auto& in = ins[p];
      if (!in->requires_grad) continue;
      in->ensure_grad();
      for (size_t i = 0; i < in->data.size(); ++i) in->grad[i] += o->grad[offsets[p] + i];
    }
  });
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols needs at least one input");
  const size_t r = parts[0].extent(0);
  size_t cols = 0;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.extent(0) != r)
      throw std::invalid_argument("concat_cols row mismatch");
    cols += p.extent(1);
  }
  auto out = detail::make_out<T>({r, cols}, "concat_cols");
  std::vector<typename Tensor<T>::NodePtr> ins;
  std::vector<size_t> offsets;
  size_t coff = 0;
  for (const auto& p : parts) {
    const size_t w = p.extent(1);
    for (size_t i = 0; i < r; ++i)
      std::copy(p.data().begin() + i * w, p.data().begin() + (i + 1) * w,
                out->data.begin() + i * cols + coff);
    ins.push_back(p.node());
    offsets.push_back(coff);
    coff += w;
  }
  detail::Node<T>* o = out.get();
  detail::wire<T>(out, ins, [o, ins, offsets, r, cols]() {
    for (size_t p = 0; p < ins.size(); ++p) {
      auto& in = ins[p];
      if (!in->requires_grad) continue;
      in->ensure_grad();
      const size_t w = in->shape[1];
      for (size_t i = 0; i < r; ++i)
        for (size_t j = 0; j < w; ++j)
          in->grad[i * w + j] += o->grad[i * cols + offsets[p] + j];
    }
  });
  return Tensor<T>(out);
}

// Mean over rows of an (r x c) matrix, result (1 x c).
template <typename T>
Tensor<T> mean_rows(const Tensor<T>& x) {
  if (x.rank() != 2) throw std::invalid_argument("mean_rows expects rank-2 input");
  const size_t r = x.extent(0), c = x.extent(1);
  auto out = detail::make_out<T>({1, c}, "mean_rows");
  for (size_t j = 0; j < c; ++j) {
    T s = T(0);
    for (size_t i = 0; i < r; ++i) s += x.data()[i * c + j];
    out->data[j] = s / T(r);
  }
  detail::check_finite(out->data, "mean_rows");
  auto xn = x.node();
  detail::Node<T>* o = out.get();
  detail::wire<T>(out, {xn}, [o, xn, r, c]() {
    xn->ensure_grad();
    for (size_t i = 0; i < r; ++i)
      for (size_t j = 0; j < c; ++j) xn->grad[i * c + j] += o->grad[j] / T(r);
  });
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  auto out = detail::make_out<T>({1}, "sum");
  T s = T(0);
  for (T v : x.data()) s += v;
  out->data[0] = s;
  detail::check_finite(out->data, "sum");
  auto xn = x.node();
  detail::Node<T>* o = out.get();
  detail::wire<T>(out, {xn}, [o, xn]() {
    xn->ensure_grad();
    for (size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += o->grad[0];
  });
  return Tensor<T>(out);
}

// ---------------------------------------------------------------------------
// Finite-difference gradient verification
// ---------------------------------------------------------------------------

// Compares the reverse-mode gradient of a scalar-valued function against
// central finite differences. Returns the worst relative error, with the
// denominator floored so near-zero gradients degrade to absolute error.
template <typename T>
double grad_check(const std::function<Tensor<T>(const Tensor<T>&)>& f, Tensor<T> x,
                  double step = 1e-5) {
  x.set_requires_grad(true);
  x.zero_grad();
  Tensor<T> y = f(x);
  if (y.size() != 1) throw std::invalid_argument("grad_check requires a scalar-valued function");
  std::vector<T> analytic(x.size(), T(0));
  if (y.requires_grad()) {
    y.backward();
    analytic = x.grad();
  }
  double worst = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    const T orig = x.data()[i];
    const double h = step * std::max(1.0, std::fabs(static_cast<double>(orig)));
    x.data()[i] = orig + T(h);
    double fp = static_cast<double>(f(x).item());
    x.data()[i] = orig - T(h);
    double fm = static_cast<double>(f(x).item());
    x.data()[i] = orig;
    double fd = (fp - fm) / (2.0 * h);
    double ad = static_cast<double>(analytic[i]);
    double err = std::fabs(ad - fd) / std::max({std::fabs(ad), std::fabs(fd), 1e-3});
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace transrppg
