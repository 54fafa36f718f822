#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "nmt/error.hpp"

// Minimal dense 2-D tensor engine with reverse-mode differentiation.
// Every tensor is a rows x cols matrix (scalars are 1x1, row vectors 1xN).
// Ops build a graph of shared nodes; backward() walks it in reverse
// topological order. Gradients accumulate until zero_grad() is called.

namespace nmt {

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

// RAII switch that disables graph recording (inference / decoding).
struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_mode()) { grad_mode() = false; }
  ~NoGradGuard() { grad_mode() = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

namespace detail {

// C(r x c) += A(r x k) * B(k x c). Accumulation order over k is ascending
// for every output element; the reference implementations used in the
// equivalence tests follow the same order so results compare bitwise.
template <class T>
void mm_acc(T* C, const T* A, const T* B, int r, int k, int c) {
  for (int i = 0; i < r; ++i) {
    const T* a = A + static_cast<size_t>(i) * k;
    T* out = C + static_cast<size_t>(i) * c;
    for (int t = 0; t < k; ++t) {
      const T av = a[t];
      if (av == T(0)) continue;
      const T* b = B + static_cast<size_t>(t) * c;
      for (int j = 0; j < c; ++j) out[j] += av * b[j];
    }
  }
}

// C(r x c) += A(r x k) * B(c x k)^T
template <class T>
void mm_nt_acc(T* C, const T* A, const T* B, int r, int k, int c) {
  for (int i = 0; i < r; ++i) {
    const T* a = A + static_cast<size_t>(i) * k;
    T* out = C + static_cast<size_t>(i) * c;
    for (int j = 0; j < c; ++j) {
      const T* b = B + static_cast<size_t>(j) * k;
      T s = 0;
      for (int t = 0; t < k; ++t) s += a[t] * b[t];
      out[j] += s;
    }
  }
}

// C(r x c) += A(k x r)^T * B(k x c)
template <class T>
void mm_tn_acc(T* C, const T* A, const T* B, int r, int k, int c) {
  for (int t = 0; t < k; ++t) {
    const T* a = A + static_cast<size_t>(t) * r;
    const T* b = B + static_cast<size_t>(t) * c;
    for (int i = 0; i < r; ++i) {
      const T av = a[i];
      if (av == T(0)) continue;
      T* out = C + static_cast<size_t>(i) * c;
      for (int j = 0; j < c; ++j) out[j] += av * b[j];
    }
  }
}

}  // namespace detail

template <class T>
struct TensorNode {
  int rows = 0;
  int cols = 0;
  std::vector<T> value;
  std::vector<T> grad;  // sized on demand, same layout as value
  bool requires_grad = false;
  std::string name;  // set for parameters, used in diagnostics
  std::vector<std::shared_ptr<TensorNode<T>>> parents;
  std::function<void(TensorNode<T>&)> backprop;

  size_t size() const { return value.size(); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

// Shared handle to a graph node. Copying a Tensor aliases the node.
template <class T>
class Tensor {
public:
  Tensor() = default;

  static Tensor zeros(int rows, int cols, bool requires_grad = false) {
    return filled(rows, cols, T(0), requires_grad);
  }

  static Tensor filled(int rows, int cols, T v, bool requires_grad = false) {
    check_dims(rows, cols);
    Tensor t;
    t.node_ = std::make_shared<TensorNode<T>>();
    t.node_->rows = rows;
    t.node_->cols = cols;
    t.node_->value.assign(static_cast<size_t>(rows) * cols, v);
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static Tensor from(int rows, int cols, std::vector<T> data,
                     bool requires_grad = false) {
    check_dims(rows, cols);
    if (data.size() != static_cast<size_t>(rows) * cols)
      throw Error("tensor: data length " + std::to_string(data.size()) +
                  " does not match shape " + std::to_string(rows) + "x" +
                  std::to_string(cols));
    Tensor t;
    t.node_ = std::make_shared<TensorNode<T>>();
    t.node_->rows = rows;
    t.node_->cols = cols;
    t.node_->value = std::move(data);
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static Tensor scalar(T v, bool requires_grad = false) {
    return from(1, 1, {v}, requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  int rows() const { return node_->rows; }
  int cols() const { return node_->cols; }
  size_t size() const { return node_->size(); }
  bool requires_grad() const { return node_->requires_grad; }
  const std::string& name() const { return node_->name; }
  void set_name(const std::string& n) { node_->name = n; }

  std::span<const T> values() const { return node_->value; }
  // Mutable view of the raw values; used by initializers and the optimizer.
  std::span<T> values_mut() { return node_->value; }

  std::span<const T> grad() const {
    node_->ensure_grad();
    return node_->grad;
  }
  std::span<T> grad_mut() {
    node_->ensure_grad();
    return node_->grad;
  }

  void zero_grad() { node_->grad.assign(node_->value.size(), T(0)); }

  T at(int r, int c) const {
    return node_->value[static_cast<size_t>(r) * cols() + c];
  }
  T item() const {
    if (size() != 1) throw Error("tensor: item() on non-scalar");
    return node_->value[0];
  }

  void check_finite(const std::string& what) const {
    for (T v : node_->value)
      if (!std::isfinite(static_cast<double>(v)))
        throw Error("non-finite value in " + what);
  }

  std::shared_ptr<TensorNode<T>>& node() { return node_; }
  const std::shared_ptr<TensorNode<T>>& node() const { return node_; }

private:
  static void check_dims(int rows, int cols) {
    if (rows <= 0 || cols <= 0)
      throw Error("tensor: non-positive shape " + std::to_string(rows) + "x" +
                  std::to_string(cols));
  }
  std::shared_ptr<TensorNode<T>> node_;
};

namespace detail {

template <class T>
Tensor<T> make_result(int rows, int cols,
                      std::vector<std::shared_ptr<TensorNode<T>>> parents,
                      std::function<void(TensorNode<T>&)> backprop) {
  Tensor<T> out = Tensor<T>::zeros(rows, cols);
  if (grad_mode()) {
    bool rg = false;
    for (const auto& p : parents) rg = rg || p->requires_grad;
    if (rg) {
      out.node()->requires_grad = true;
      out.node()->parents = std::move(parents);
      out.node()->backprop = std::move(backprop);
    }
  }
  return out;
}

template <class T>
void shape_check(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw Error(std::string(op) + ": shape mismatch " +
                std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                " vs " + std::to_string(b.rows()) + "x" +
                std::to_string(b.cols()));
}

}  // namespace detail

// ---- elementwise and linear ops ------------------------------------------

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.cols() != b.rows())
    throw Error("matmul: inner dimensions " + std::to_string(a.cols()) +
                " vs " + std::to_string(b.rows()));
  const int r = a.rows(), k = a.cols(), c = b.cols();
  auto an = a.node();
  auto bn = b.node();
  auto out = detail::make_result<T>(
      r, c, {an, bn}, [an, bn, r, k, c](TensorNode<T>& n) {
        if (an->requires_grad) {
          an->ensure_grad();
          detail::mm_nt_acc(an->grad.data(), n.grad.data(), bn->value.data(),
                            r, c, k);
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          detail::mm_tn_acc(bn->grad.data(), an->value.data(), n.grad.data(),
                            k, r, c);
        }
      });
  detail::mm_acc(out.node()->value.data(), an->value.data(), bn->value.data(),
                 r, k, c);
  return out;
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::shape_check(a, b, "add");
  auto an = a.node();
  auto bn = b.node();
  auto out =
      detail::make_result<T>(a.rows(), a.cols(), {an, bn}, [an, bn](TensorNode<T>& n) {
        if (an->requires_grad) {
          an->ensure_grad();
          for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i];
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (size_t i = 0; i < n.grad.size(); ++i) bn->grad[i] += n.grad[i];
        }
      });
  auto& v = out.node()->value;
  for (size_t i = 0; i < v.size(); ++i) v[i] = an->value[i] + bn->value[i];
  return out;
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::shape_check(a, b, "sub");
  auto an = a.node();
  auto bn = b.node();
  auto out =
      detail::make_result<T>(a.rows(), a.cols(), {an, bn}, [an, bn](TensorNode<T>& n) {
        if (an->requires_grad) {
          an->ensure_grad();
          for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i];
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (size_t i = 0; i < n.grad.size(); ++i) bn->grad[i] -= n.grad[i];
        }
      });
  auto& v = out.node()->value;
  for (size_t i = 0; i < v.size(); ++i) v[i] = an->value[i] - bn->value[i];
  return out;
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::shape_check(a, b, "mul");
  auto an = a.node();
  auto bn = b.node();
  auto out =
      detail::make_result<T>(a.rows(), a.cols(), {an, bn}, [an, bn](TensorNode<T>& n) {
        if (an->requires_grad) {
          an->ensure_grad();
          for (size_t i = 0; i < n.grad.size(); ++i)
            an->grad[i] += n.grad[i] * bn->value[i];
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (size_t i = 0; i < n.grad.size(); ++i)
            bn->grad[i] += n.grad[i] * an->value[i];
        }
      });
  auto& v = out.node()->value;
  for (size_t i = 0; i < v.size(); ++i) v[i] = an->value[i] * bn->value[i];
  return out;
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  auto an = a.node();
  auto out = detail::make_result<T>(a.rows(), a.cols(), {an},
                                    [an, s](TensorNode<T>& n) {
                                      if (!an->requires_grad) return;
                                      an->ensure_grad();
                                      for (size_t i = 0; i < n.grad.size(); ++i)
                                        an->grad[i] += s * n.grad[i];
                                    });
  auto& v = out.node()->value;
  for (size_t i = 0; i < v.size(); ++i) v[i] = s * an->value[i];
  return out;
}

// m (r x c) + row-broadcast bias (1 x c)
template <class T>
Tensor<T> add_bias(const Tensor<T>& m, const Tensor<T>& bias) {
  if (bias.rows() != 1 || bias.cols() != m.cols())
    throw Error("add_bias: bias shape " + std::to_string(bias.rows()) + "x" +
                std::to_string(bias.cols()) + " for matrix with " +
                std::to_string(m.cols()) + " columns");
  auto mn = m.node();
  auto bn = bias.node();
  const int r = m.rows(), c = m.cols();
  auto out =
      detail::make_result<T>(r, c, {mn, bn}, [mn, bn, r, c](TensorNode<T>& n) {
        if (mn->requires_grad) {
          mn->ensure_grad();
          for (size_t i = 0; i < n.grad.size(); ++i) mn->grad[i] += n.grad[i];
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j)
              bn->grad[j] += n.grad[static_cast<size_t>(i) * c + j];
        }
      });
  auto& v = out.node()->value;
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      v[static_cast<size_t>(i) * c + j] =
          mn->value[static_cast<size_t>(i) * c + j] + bn->value[j];
  return out;
}

template <class T>
Tensor<T> transpose(const Tensor<T>& a) {
  auto an = a.node();
  const int r = a.rows(), c = a.cols();
  auto out =
      detail::make_result<T>(c, r, {an}, [an, r, c](TensorNode<T>& n) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < c; ++j)
            an->grad[static_cast<size_t>(i) * c + j] +=
                n.grad[static_cast<size_t>(j) * r + i];
      });
  auto& v = out.node()->value;
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      v[static_cast<size_t>(j) * r + i] = an->value[static_cast<size_t>(i) * c + j];
  return out;
}

template <class T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw Error("concat_cols: no inputs");
  const int r = parts[0].rows();
  int c = 0;
  std::vector<std::shared_ptr<TensorNode<T>>> nodes;
  for (const auto& p : parts) {
    if (p.rows() != r) throw Error("concat_cols: row-count mismatch");
    c += p.cols();
    nodes.push_back(p.node());
  }
  auto out = detail::make_result<T>(r, c, nodes, [nodes, r, c](TensorNode<T>& n) {
    int off = 0;
    for (const auto& p : nodes) {
      const int pc = p->cols;
      if (p->requires_grad) {
        p->ensure_grad();
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < pc; ++j)
            p->grad[static_cast<size_t>(i) * pc + j] +=
                n.grad[static_cast<size_t>(i) * c + off + j];
      }
      off += pc;
    }
  });
  auto& v = out.node()->value;
  int off = 0;
  for (const auto& p : parts) {
    const int pc = p.cols();
    auto pv = p.values();
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < pc; ++j)
        v[static_cast<size_t>(i) * c + off + j] = pv[static_cast<size_t>(i) * pc + j];
    off += pc;
  }
  return out;
}

template <class T>
Tensor<T> slice_cols(const Tensor<T>& a, int start, int len) {
  if (start < 0 || len <= 0 || start + len > a.cols())
    throw Error("slice_cols: range [" + std::to_string(start) + ", " +
                std::to_string(start + len) + ") outside width " +
                std::to_string(a.cols()));
  auto an = a.node();
  const int r = a.rows(), c = a.cols();
  auto out = detail::make_result<T>(
      r, len, {an}, [an, r, c, start, len](TensorNode<T>& n) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < len; ++j)
            an->grad[static_cast<size_t>(i) * c + start + j] +=
                n.grad[static_cast<size_t>(i) * len + j];
      });
  auto& v = out.node()->value;
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < len; ++j)
      v[static_cast<size_t>(i) * len + j] = an->value[static_cast<size_t>(i) * c + start + j];
  return out;
}

template <class T>
Tensor<T> slice_rows(const Tensor<T>& a, int start, int len) {
  if (start < 0 || len <= 0 || start + len > a.rows())
    throw Error("slice_rows: range [" + std::to_string(start) + ", " +
                std::to_string(start + len) + ") outside " +
                std::to_string(a.rows()) + " rows");
  auto an = a.node();
  const int c = a.cols();
  auto out = detail::make_result<T>(
      len, c, {an}, [an, c, start, len](TensorNode<T>& n) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (int i = 0; i < len; ++i)
          for (int j = 0; j < c; ++j)
            an->grad[static_cast<size_t>(start + i) * c + j] +=
                n.grad[static_cast<size_t>(i) * c + j];
      });
  auto& v = out.node()->value;
  for (int i = 0; i < len; ++i)
    for (int j = 0; j < c; ++j)
      v[static_cast<size_t>(i) * c + j] =
          an->value[static_cast<size_t>(start + i) * c + j];
  return out;
}

// out row i = a row (i + offset), zero where the source row is out of range.
template <class T>
Tensor<T> shift_rows(const Tensor<T>& a, int offset) {
  auto an = a.node();
  const int r = a.rows(), c = a.cols();
  auto out = detail::make_result<T>(
      r, c, {an}, [an, r, c, offset](TensorNode<T>& n) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (int i = 0; i < r; ++i) {
          const int src = i + offset;
          if (src < 0 || src >= r) continue;
          for (int j = 0; j < c; ++j)
            an->grad[static_cast<size_t>(src) * c + j] +=
                n.grad[static_cast<size_t>(i) * c + j];
        }
      });
  auto& v = out.node()->value;
  for (int i = 0; i < r; ++i) {
    const int src = i + offset;
    if (src < 0 || src >= r) continue;
    for (int j = 0; j < c; ++j)
      v[static_cast<size_t>(i) * c + j] = an->value[static_cast<size_t>(src) * c + j];
  }
  return out;
}

// Scales each row i by the constant mask[i] (no gradient through the mask).
template <class T>
Tensor<T> mul_rowmask(const Tensor<T>& a, std::vector<T> mask) {
  if (static_cast<int>(mask.size()) != a.rows())
    throw Error("mul_rowmask: mask length " + std::to_string(mask.size()) +
                " vs " + std::to_string(a.rows()) + " rows");
  auto an = a.node();
  const int r = a.rows(), c = a.cols();
  auto m = std::make_shared<std::vector<T>>(std::move(mask));
  auto out = detail::make_result<T>(r, c, {an}, [an, r, c, m](TensorNode<T>& n) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (int i = 0; i < r; ++i) {
      const T s = (*m)[i];
      if (s == T(0)) continue;
      for (int j = 0; j < c; ++j)
        an->grad[static_cast<size_t>(i) * c + j] +=
            s * n.grad[static_cast<size_t>(i) * c + j];
    }
  });
  auto& v = out.node()->value;
  for (int i = 0; i < r; ++i) {
    const T s = (*m)[i];
    for (int j = 0; j < c; ++j)
      v[static_cast<size_t>(i) * c + j] = s * an->value[static_cast<size_t>(i) * c + j];
  }
  return out;
}

template <class T>
Tensor<T> relu(const Tensor<T>& a) {
  auto an = a.node();
  auto out = detail::make_result<T>(a.rows(), a.cols(), {an},
                                    [an](TensorNode<T>& n) {
                                      if (!an->requires_grad) return;
                                      an->ensure_grad();
                                      for (size_t i = 0; i < n.grad.size(); ++i)
                                        if (an->value[i] > T(0))
                                          an->grad[i] += n.grad[i];
                                    });
  auto& v = out.node()->value;
  for (size_t i = 0; i < v.size(); ++i)
    v[i] = an->value[i] > T(0) ? an->value[i] : T(0);
  return out;
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  auto an = a.node();
  auto out = Tensor<T>::zeros(a.rows(), a.cols());
  auto& v = out.node()->value;
  for (size_t i = 0; i < v.size(); ++i)
    v[i] = T(1) / (T(1) + std::exp(-an->value[i]));
  if (grad_mode() && an->requires_grad) {
    auto on = out.node();
    on->requires_grad = true;
    on->parents = {an};
    on->backprop = [an](TensorNode<T>& n) {
      an->ensure_grad();
      for (size_t i = 0; i < n.grad.size(); ++i) {
        const T y = n.value[i];
        an->grad[i] += n.grad[i] * y * (T(1) - y);
      }
    };
  }
  return out;
}

template <class T>
Tensor<T> tanh_op(const Tensor<T>& a) {
  auto an = a.node();
  auto out = Tensor<T>::zeros(a.rows(), a.cols());
  auto& v = out.node()->value;
  for (size_t i = 0; i < v.size(); ++i) v[i] = std::tanh(an->value[i]);
  if (grad_mode() && an->requires_grad) {
    auto on = out.node();
    on->requires_grad = true;
    on->parents = {an};
    on->backprop = [an](TensorNode<T>& n) {
      an->ensure_grad();
      for (size_t i = 0; i < n.grad.size(); ++i) {
        const T y = n.value[i];
        an->grad[i] += n.grad[i] * (T(1) - y * y);
      }
    };
  }
  return out;
}

// ---- attention-facing ops --------------------------------------------------

// Boolean key/position mask for attention scores; allowed[i*cols+j] != 0
// means entry (i, j) participates in the softmax.
struct AttnMask {
  int rows = 0;
  int cols = 0;
  std::vector<uint8_t> allowed;

  static AttnMask all_allowed(int rows, int cols) {
    return {rows, cols, std::vector<uint8_t>(static_cast<size_t>(rows) * cols, 1)};
  }
  // Same key-validity vector applied to every query row.
  static AttnMask from_key_mask(int rows, const std::vector<uint8_t>& keys) {
    AttnMask m;
    m.rows = rows;
    m.cols = static_cast<int>(keys.size());
    m.allowed.resize(static_cast<size_t>(rows) * m.cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < m.cols; ++j)
        m.allowed[static_cast<size_t>(i) * m.cols + j] = keys[j];
    return m;
  }
  // Causal mask (j <= i), optionally restricted by key validity.
  static AttnMask causal(int n, const std::vector<uint8_t>* keys = nullptr) {
    AttnMask m;
    m.rows = n;
    m.cols = n;
    m.allowed.assign(static_cast<size_t>(n) * n, 0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j <= i; ++j)
        m.allowed[static_cast<size_t>(i) * n + j] =
            keys ? (*keys)[j] : uint8_t(1);
    return m;
  }
};

// Row-wise softmax with optional mask. Masked entries are exactly zero in
// the output; a fully masked row is an error (empty attention context).
template <class T>
Tensor<T> softmax_rows(const Tensor<T>& a, const AttnMask* mask = nullptr) {
  const int r = a.rows(), c = a.cols();
  if (mask && (mask->rows != r || mask->cols != c))
    throw Error("softmax_rows: mask shape mismatch");
  auto an = a.node();
  auto out = Tensor<T>::zeros(r, c);
  auto& v = out.node()->value;
  auto allowed = [&](int i, int j) {
    return !mask || mask->allowed[static_cast<size_t>(i) * c + j];
  };
  for (int i = 0; i < r; ++i) {
    T mx = -std::numeric_limits<T>::infinity();
    for (int j = 0; j < c; ++j)
      if (allowed(i, j)) mx = std::max(mx, an->value[static_cast<size_t>(i) * c + j]);
    if (mx == -std::numeric_limits<T>::infinity())
      throw Error("softmax_rows: row " + std::to_string(i) + " fully masked");
    T denom = 0;
    for (int j = 0; j < c; ++j) {
      if (!allowed(i, j)) continue;
      const T e = std::exp(an->value[static_cast<size_t>(i) * c + j] - mx);
      v[static_cast<size_t>(i) * c + j] = e;
      denom += e;
    }
    for (int j = 0; j < c; ++j)
      if (allowed(i, j)) v[static_cast<size_t>(i) * c + j] /= denom;
  }
  if (grad_mode() && an->requires_grad) {
    auto on = out.node();
    auto mcopy = mask ? std::make_shared<AttnMask>(*mask) : nullptr;
    on->requires_grad = true;
    on->parents = {an};
    on->backprop = [an, r, c, mcopy](TensorNode<T>& n) {
      an->ensure_grad();
      for (int i = 0; i < r; ++i) {
        T dot = 0;
        for (int j = 0; j < c; ++j) {
          if (mcopy && !mcopy->allowed[static_cast<size_t>(i) * c + j]) continue;
          dot += n.grad[static_cast<size_t>(i) * c + j] *
                 n.value[static_cast<size_t>(i) * c + j];
        }
        for (int j = 0; j < c; ++j) {
          if (mcopy && !mcopy->allowed[static_cast<size_t>(i) * c + j]) continue;
          const size_t idx = static_cast<size_t>(i) * c + j;
          an->grad[idx] += n.value[idx] * (n.grad[idx] - dot);
        }
      }
    };
  }
  return out;
}

// Per-row layer normalization with 1/d variance: (x - mean)/sqrt(var + eps)
// scaled by gain and shifted by bias (both 1 x d).
template <class T>
Tensor<T> layer_norm_rows(const Tensor<T>& x, const Tensor<T>& gain,
                          const Tensor<T>& bias, T eps) {
  const int r = x.rows(), d = x.cols();
  if (gain.rows() != 1 || gain.cols() != d || bias.rows() != 1 || bias.cols() != d)
    throw Error("layer_norm: gain/bias must be 1x" + std::to_string(d));
  if (eps <= T(0)) throw Error("layer_norm: eps must be positive");
  auto xn = x.node();
  auto gn = gain.node();
  auto bn = bias.node();
  auto out = Tensor<T>::zeros(r, d);
  auto xhat = std::make_shared<std::vector<T>>(static_cast<size_t>(r) * d);
  auto inv_sigma = std::make_shared<std::vector<T>>(r);
  auto& v = out.node()->value;
  for (int i = 0; i < r; ++i) {
    const T* row = xn->value.data() + static_cast<size_t>(i) * d;
    T mean = 0;
    for (int j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<T>(d);
    T var = 0;
    for (int j = 0; j < d; ++j) {
      const T dz = row[j] - mean;
      var += dz * dz;
    }
    var /= static_cast<T>(d);
    const T is = T(1) / std::sqrt(var + eps);
    (*inv_sigma)[i] = is;
    for (int j = 0; j < d; ++j) {
      const T xh = (row[j] - mean) * is;
      (*xhat)[static_cast<size_t>(i) * d + j] = xh;
      v[static_cast<size_t>(i) * d + j] = xh * gn->value[j] + bn->value[j];
    }
  }
  if (grad_mode() && (xn->requires_grad || gn->requires_grad || bn->requires_grad)) {
    auto on = out.node();
    on->requires_grad = true;
    on->parents = {xn, gn, bn};
    on->backprop = [xn, gn, bn, xhat, inv_sigma, r, d](TensorNode<T>& n) {
      for (int i = 0; i < r; ++i) {
        const T* g = n.grad.data() + static_cast<size_t>(i) * d;
        const T* xh = xhat->data() + static_cast<size_t>(i) * d;
        if (gn->requires_grad) {
          gn->ensure_grad();
          for (int j = 0; j < d; ++j) gn->grad[j] += g[j] * xh[j];
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (int j = 0; j < d; ++j) bn->grad[j] += g[j];
        }
        if (xn->requires_grad) {
          xn->ensure_grad();
          T sum_dy = 0, sum_dy_xh = 0;
          for (int j = 0; j < d; ++j) {
            const T dy = g[j] * gn->value[j];
            sum_dy += dy;
            sum_dy_xh += dy * xh[j];
          }
          const T inv_d = T(1) / static_cast<T>(d);
          for (int j = 0; j < d; ++j) {
            const T dy = g[j] * gn->value[j];
            xn->grad[static_cast<size_t>(i) * d + j] +=
                (*inv_sigma)[i] *
                (dy - sum_dy * inv_d - xh[j] * sum_dy_xh * inv_d);
          }
        }
      }
    };
  }
  return out;
}

// Gathers table rows by id; backward scatter-adds into the table.
template <class T>
Tensor<T> embedding_rows(const Tensor<T>& table, const std::vector<int>& ids) {
  if (ids.empty()) throw Error("embedding: empty id sequence");
  const int v = table.rows(), d = table.cols();
  for (int id : ids)
    if (id < 0 || id >= v)
      throw Error("embedding: id " + std::to_string(id) +
                  " outside vocabulary of size " + std::to_string(v));
  auto tn = table.node();
  const int s = static_cast<int>(ids.size());
  auto idv = std::make_shared<std::vector<int>>(ids);
  auto out = detail::make_result<T>(s, d, {tn}, [tn, idv, s, d](TensorNode<T>& n) {
    if (!tn->requires_grad) return;
    tn->ensure_grad();
    for (int i = 0; i < s; ++i) {
      const int id = (*idv)[i];
      for (int j = 0; j < d; ++j)
        tn->grad[static_cast<size_t>(id) * d + j] +=
            n.grad[static_cast<size_t>(i) * d + j];
    }
  });
  auto& ov = out.node()->value;
  for (int i = 0; i < s; ++i)
    for (int j = 0; j < d; ++j)
      ov[static_cast<size_t>(i) * d + j] =
          tn->value[static_cast<size_t>(ids[i]) * d + j];
  return out;
}

template <class T>
Tensor<T> log_softmax_rows(const Tensor<T>& a) {
  const int r = a.rows(), c = a.cols();
  auto an = a.node();
  auto out = Tensor<T>::zeros(r, c);
  auto& v = out.node()->value;
  for (int i = 0; i < r; ++i) {
    const T* row = an->value.data() + static_cast<size_t>(i) * c;
    T mx = row[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    T denom = 0;
    for (int j = 0; j < c; ++j) denom += std::exp(row[j] - mx);
    const T lse = mx + std::log(denom);
    for (int j = 0; j < c; ++j) v[static_cast<size_t>(i) * c + j] = row[j] - lse;
  }
  if (grad_mode() && an->requires_grad) {
    auto on = out.node();
    on->requires_grad = true;
    on->parents = {an};
    on->backprop = [an, r, c](TensorNode<T>& n) {
      an->ensure_grad();
      for (int i = 0; i < r; ++i) {
        T gsum = 0;
        for (int j = 0; j < c; ++j) gsum += n.grad[static_cast<size_t>(i) * c + j];
        for (int j = 0; j < c; ++j) {
          const size_t idx = static_cast<size_t>(i) * c + j;
          an->grad[idx] += n.grad[idx] - std::exp(n.value[idx]) * gsum;
        }
      }
    };
  }
  return out;
}

template <class T>
Tensor<T> sum_all(const Tensor<T>& a) {
  auto an = a.node();
  auto out = detail::make_result<T>(1, 1, {an}, [an](TensorNode<T>& n) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += n.grad[0];
  });
  T s = 0;
  for (T v : an->value) s += v;
  out.node()->value[0] = s;
  return out;
}

// Inverted dropout; identity when not training or rate == 0.
template <class T>
Tensor<T> dropout(const Tensor<T>& a, double rate, std::mt19937_64& rng,
                  bool training) {
  if (!training || rate <= 0.0) return a;
  if (rate >= 1.0) throw Error("dropout: rate must be < 1");
  auto an = a.node();
  const T inv_keep = T(1.0 / (1.0 - rate));
  auto mask = std::make_shared<std::vector<T>>(an->value.size());
  std::bernoulli_distribution keep(1.0 - rate);
  for (auto& m : *mask) m = keep(rng) ? inv_keep : T(0);
  auto out = detail::make_result<T>(a.rows(), a.cols(), {an},
                                    [an, mask](TensorNode<T>& n) {
                                      if (!an->requires_grad) return;
                                      an->ensure_grad();
                                      for (size_t i = 0; i < n.grad.size(); ++i)
                                        an->grad[i] += n.grad[i] * (*mask)[i];
                                    });
  auto& v = out.node()->value;
  for (size_t i = 0; i < v.size(); ++i) v[i] = an->value[i] * (*mask)[i];
  return out;
}

// ---- backward pass ---------------------------------------------------------

// Populates gradients of every requires_grad tensor reachable from `loss`.
// Repeated calls accumulate; callers reset with zero_grad().
template <class T>
void backward(const Tensor<T>& loss) {
  if (loss.size() != 1) throw Error("backward: loss must be a scalar");
  auto root = loss.node();
  if (!root->requires_grad) return;

  // Iterative post-order DFS; deterministic (driven by parent order).
  std::vector<TensorNode<T>*> order;
  std::unordered_set<TensorNode<T>*> visited;
  std::vector<std::pair<TensorNode<T>*, size_t>> stack;
  stack.push_back({root.get(), 0});
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      TensorNode<T>* p = node->parents[idx].get();
      ++idx;
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode<T>* n = *it;
    if (n->backprop) {
      n->ensure_grad();
      n->backprop(*n);
    }
  }
}

}  // namespace nmt
