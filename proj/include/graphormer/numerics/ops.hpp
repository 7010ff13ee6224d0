// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "graphormer/numerics/tensor.hpp"
#include "graphormer/rng.hpp"

// Taped primitives. Every op checks shapes, computes its forward value in a
// fixed loop order and registers the matching backward rule.

namespace graphormer {

namespace detail {

template <typename T>
void require_matrix(const Tensor<T>& t, const char* op) {
  if (t.ndim() != 2)
    throw DimensionError(std::string(op) + ": expected a matrix, got shape " + shape_string(t.shape()));
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
}

template <typename T>
Node<T>& input(Node<T>& out, std::size_t i) {
  return *out.inputs[i];
}

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using MutMap = Eigen::Map<RowMat<T>>;

// Dense kernels go through Eigen's single-threaded GEMM, whose summation
// order depends only on the operand sizes.

// C[m×n] += A[m×k] · B[k×n]
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  MutMap<T>(c, m, n).noalias() += ConstMap<T>(a, m, k) * ConstMap<T>(b, k, n);
}

// C[m×k] += A[m×n] · B[k×n]ᵀ
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t n, std::size_t k) {
  MutMap<T>(c, m, k).noalias() += ConstMap<T>(a, m, n) * ConstMap<T>(b, k, n).transpose();
}

// C[k×n] += A[m×k]ᵀ · B[m×n]
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  MutMap<T>(c, k, n).noalias() += ConstMap<T>(a, m, k).transpose() * ConstMap<T>(b, m, n);
}

inline std::uint64_t& mac_counter() {
  thread_local std::uint64_t count = 0;
  return count;
}

}  // namespace detail

/// Forward multiply-adds of matmul and sparse_matmul on this thread.
inline std::uint64_t forward_macs() { return detail::mac_counter(); }
inline void reset_forward_macs() { detail::mac_counter() = 0; }

/// A[m×k] · B[k×n].
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_matrix(a, "matmul");
  detail::require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k)
    throw DimensionError("matmul: inner extents differ, " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  std::vector<T> out(m * n, T(0));
  detail::mac_counter() += m * k * n;
  detail::gemm_nn(a.values().data(), b.values().data(), out.data(), m, k, n);
  return make_op<T>("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](Node<T>& o) {
    auto& na = detail::input(o, 0);
    auto& nb = detail::input(o, 1);
    if (na.requires_grad) detail::gemm_nt(o.grad.data(), nb.value.data(), na.grad_buffer().data(), m, n, k);
    if (nb.requires_grad) detail::gemm_tn(na.value.data(), o.grad.data(), nb.grad_buffer().data(), m, k, n);
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return make_op<T>("add", a.shape(), std::move(out), {a, b}, [](Node<T>& o) {
    for (std::size_t s = 0; s < 2; ++s) {
      auto& in = detail::input(o, s);
      if (!in.requires_grad) continue;
      auto& g = in.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return make_op<T>("sub", a.shape(), std::move(out), {a, b}, [](Node<T>& o) {
    auto& na = detail::input(o, 0);
    auto& nb = detail::input(o, 1);
    if (na.requires_grad) {
      auto& g = na.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
    if (nb.requires_grad) {
      auto& g = nb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o.grad[i];
    }
  });
}

/// Elementwise product.
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return make_op<T>("mul", a.shape(), std::move(out), {a, b}, [](Node<T>& o) {
    auto& na = detail::input(o, 0);
    auto& nb = detail::input(o, 1);
    if (na.requires_grad) {
      auto& g = na.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * nb.value[i];
    }
    if (nb.requires_grad) {
      auto& g = nb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * na.value[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * factor;
  return make_op<T>("scale", a.shape(), std::move(out), {a}, [factor](Node<T>& o) {
    auto& g = detail::input(o, 0).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * factor;
  });
}

/// x[n×d] + bias broadcast over rows; bias has shape {d} or {1, d}.
template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  detail::require_matrix(x, "add_bias");
  const std::size_t n = x.rows(), d = x.cols();
  if (bias.size() != d || bias.rows() != 1)
    throw DimensionError("add_bias: bias " + shape_string(bias.shape()) + " does not fit rows of " +
                         shape_string(x.shape()));
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = x[i * d + j] + bias[j];
  return make_op<T>("add_bias", x.shape(), std::move(out), {x, bias}, [n, d](Node<T>& o) {
    auto& nx = detail::input(o, 0);
    auto& nb = detail::input(o, 1);
    if (nx.requires_grad) {
      auto& g = nx.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
    if (nb.requires_grad) {
      auto& g = nb.grad_buffer();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) g[j] += o.grad[i * d + j];
    }
  });
}

/// 1×d row repeated n times.
template <typename T>
Tensor<T> repeat_rows(const Tensor<T>& row, std::size_t n) {
  if (row.rows() != 1) throw DimensionError("repeat_rows: expected a single row, got " + shape_string(row.shape()));
  const std::size_t d = row.cols();
  std::vector<T> out(n * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = row[j];
  return make_op<T>("repeat_rows", {n, d}, std::move(out), {row}, [n, d](Node<T>& o) {
    auto& g = detail::input(o, 0).grad_buffer();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) g[j] += o.grad[i * d + j];
  });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  detail::require_matrix(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<T> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
  return make_op<T>("transpose", {n, m}, std::move(out), {a}, [m, n](Node<T>& o) {
    auto& g = detail::input(o, 0).grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += o.grad[j * m + i];
  });
}

/// Stack matrices vertically (axis 0).
template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t d = parts.front().cols();
  std::size_t n = 0;
  for (const auto& p : parts) {
    detail::require_matrix(p, "concat_rows");
    if (p.cols() != d)
      throw DimensionError("concat_rows: column mismatch " + shape_string(parts.front().shape()) + " vs " +
                           shape_string(p.shape()));
    n += p.rows();
  }
  std::vector<T> out;
  out.reserve(n * d);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  Tensor<T> result(Shape{n, d}, std::move(out));
  auto node = result.node();
  node->op = "concat_rows";
  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  if (grad_enabled() && any) {
    node->requires_grad = true;
    for (const auto& p : parts) node->inputs.push_back(p.node());
    node->backward = [](Node<T>& o) {
      std::size_t offset = 0;
      for (auto& in : o.inputs) {
        const std::size_t len = in->value.size();
        if (in->requires_grad) {
          auto& g = in->grad_buffer();
          for (std::size_t i = 0; i < len; ++i) g[i] += o.grad[offset + i];
        }
        offset += len;
      }
    };
  }
  return result;
}

/// Join matrices side by side (axis 1).
template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t n = parts.front().rows();
  std::size_t d = 0;
  for (const auto& p : parts) {
    detail::require_matrix(p, "concat_cols");
    if (p.rows() != n)
      throw DimensionError("concat_cols: row mismatch " + shape_string(parts.front().shape()) + " vs " +
                           shape_string(p.shape()));
    d += p.cols();
  }
  std::vector<T> out(n * d);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.cols();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < w; ++j) out[i * d + offset + j] = p[i * w + j];
    offset += w;
  }
  Tensor<T> result(Shape{n, d}, std::move(out));
  auto node = result.node();
  node->op = "concat_cols";
  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  if (grad_enabled() && any) {
    node->requires_grad = true;
    for (const auto& p : parts) node->inputs.push_back(p.node());
    node->backward = [n, d](Node<T>& o) {
      std::size_t off = 0;
      for (auto& in : o.inputs) {
        const std::size_t w = in->shape.back();
        if (in->requires_grad) {
          auto& g = in->grad_buffer();
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < w; ++j) g[i * w + j] += o.grad[i * d + off + j];
        }
        off += w;
      }
    };
  }
  return result;
}

/// Rows [begin, begin + count).
template <typename T>
Tensor<T> slice_rows(const Tensor<T>& a, std::size_t begin, std::size_t count) {
  detail::require_matrix(a, "slice_rows");
  if (count == 0 || begin + count > a.rows())
    throw DimensionError("slice_rows: range [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") outside " + shape_string(a.shape()));
  const std::size_t d = a.cols();
  std::vector<T> out(a.values().begin() + begin * d, a.values().begin() + (begin + count) * d);
  return make_op<T>("slice_rows", {count, d}, std::move(out), {a}, [begin, d](Node<T>& o) {
    auto& g = detail::input(o, 0).grad_buffer();
    for (std::size_t i = 0; i < o.grad.size(); ++i) g[begin * d + i] += o.grad[i];
  });
}

/// Columns [begin, begin + count).
template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, std::size_t begin, std::size_t count) {
  detail::require_matrix(a, "slice_cols");
  if (count == 0 || begin + count > a.cols())
    throw DimensionError("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") outside " + shape_string(a.shape()));
  const std::size_t n = a.rows(), d = a.cols();
  std::vector<T> out(n * count);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < count; ++j) out[i * count + j] = a[i * d + begin + j];
  return make_op<T>("slice_cols", {n, count}, std::move(out), {a}, [n, d, begin, count](Node<T>& o) {
    auto& g = detail::input(o, 0).grad_buffer();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < count; ++j) g[i * d + begin + j] += o.grad[i * count + j];
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T acc = T(0);
  for (T v : a.values()) acc += v;
  return make_op<T>("sum", {1}, {acc}, {a}, [](Node<T>& o) {
    auto& g = detail::input(o, 0).grad_buffer();
    for (auto& v : g) v += o.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  T acc = T(0);
  for (T v : a.values()) acc += v;
  const T inv = T(1) / static_cast<T>(a.size());
  return make_op<T>("mean", {1}, {acc * inv}, {a}, [inv](Node<T>& o) {
    auto& g = detail::input(o, 0).grad_buffer();
    for (auto& v : g) v += o.grad[0] * inv;
  });
}

/// Column means of an n×d matrix, as a 1×d row.
template <typename T>
Tensor<T> mean_rows(const Tensor<T>& a) {
  detail::require_matrix(a, "mean_rows");
  const std::size_t n = a.rows(), d = a.cols();
  std::vector<T> out(d, T(0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[j] += a[i * d + j];
  const T inv = T(1) / static_cast<T>(n);
  for (auto& v : out) v *= inv;
  return make_op<T>("mean_rows", {1, d}, std::move(out), {a}, [n, d, inv](Node<T>& o) {
    auto& g = detail::input(o, 0).grad_buffer();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) g[i * d + j] += o.grad[j] * inv;
  });
}

/// Mean absolute difference over all entries.
template <typename T>
Tensor<T> l1_distance(const Tensor<T>& pred, const Tensor<T>& target) {
  detail::require_same_shape(pred, target, "l1_distance");
  T acc = T(0);
  for (std::size_t i = 0; i < pred.size(); ++i) acc += std::abs(pred[i] - target[i]);
  const T inv = T(1) / static_cast<T>(pred.size());
  return make_op<T>("l1_distance", {1}, {acc * inv}, {pred, target}, [inv](Node<T>& o) {
    auto& np = detail::input(o, 0);
    auto& nt = detail::input(o, 1);
    const T g0 = o.grad[0] * inv;
    for (std::size_t i = 0; i < np.value.size(); ++i) {
      const T diff = np.value[i] - nt.value[i];
      const T s = diff > T(0) ? T(1) : (diff < T(0) ? T(-1) : T(0));
      if (np.requires_grad) np.grad_buffer()[i] += g0 * s;
      if (nt.requires_grad) nt.grad_buffer()[i] -= g0 * s;
    }
  });
}

/// Row-wise softmax, stabilized by subtracting each row's maximum.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
  detail::require_matrix(x, "softmax_rows");
  const std::size_t n = x.rows(), m = x.cols();
  std::vector<T> out(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    const T* xi = x.values().data() + i * m;
    T* yi = out.data() + i * m;
    T mx = xi[0];
    for (std::size_t j = 1; j < m; ++j) mx = std::max(mx, xi[j]);
    T total = T(0);
    for (std::size_t j = 0; j < m; ++j) {
      yi[j] = std::exp(xi[j] - mx);
      total += yi[j];
    }
    const T inv = T(1) / total;
    for (std::size_t j = 0; j < m; ++j) yi[j] *= inv;
  }
  return make_op<T>("softmax_rows", {n, m}, std::move(out), {x}, [n, m](Node<T>& o) {
    auto& g = detail::input(o, 0).grad_buffer();
    for (std::size_t i = 0; i < n; ++i) {
      const T* y = o.value.data() + i * m;
      const T* dy = o.grad.data() + i * m;
      T dot = T(0);
      for (std::size_t j = 0; j < m; ++j) dot += dy[j] * y[j];
      for (std::size_t j = 0; j < m; ++j) g[i * m + j] += y[j] * (dy[j] - dot);
    }
  });
}

/// Per-row normalization to zero mean / unit variance, then gamma * x + beta.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double eps = 1e-5) {
  detail::require_matrix(x, "layer_norm");
  const std::size_t n = x.rows(), d = x.cols();
  if (gamma.size() != d || beta.size() != d)
    throw DimensionError("layer_norm: affine params " + shape_string(gamma.shape()) + "/" +
                         shape_string(beta.shape()) + " do not match " + shape_string(x.shape()));
  std::vector<T> out(n * d);
  std::vector<T> xhat(n * d);
  std::vector<T> inv_std(n);
  for (std::size_t i = 0; i < n; ++i) {
    const T* xi = x.values().data() + i * d;
    T mu = T(0);
    for (std::size_t j = 0; j < d; ++j) mu += xi[j];
    mu /= static_cast<T>(d);
    T var = T(0);
    for (std::size_t j = 0; j < d; ++j) var += (xi[j] - mu) * (xi[j] - mu);
    var /= static_cast<T>(d);
    const T is = T(1) / std::sqrt(var + static_cast<T>(eps));
    inv_std[i] = is;
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (xi[j] - mu) * is;
      out[i * d + j] = gamma[j] * xhat[i * d + j] + beta[j];
    }
  }
  return make_op<T>("layer_norm", {n, d}, std::move(out), {x, gamma, beta},
                    [n, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<T>& o) {
                      auto& nx = detail::input(o, 0);
                      auto& ng = detail::input(o, 1);
                      auto& nb = detail::input(o, 2);
                      if (ng.requires_grad) {
                        auto& g = ng.grad_buffer();
                        for (std::size_t i = 0; i < n; ++i)
                          for (std::size_t j = 0; j < d; ++j) g[j] += o.grad[i * d + j] * xhat[i * d + j];
                      }
                      if (nb.requires_grad) {
                        auto& g = nb.grad_buffer();
                        for (std::size_t i = 0; i < n; ++i)
                          for (std::size_t j = 0; j < d; ++j) g[j] += o.grad[i * d + j];
                      }
                      if (!nx.requires_grad) return;
                      auto& g = nx.grad_buffer();
                      const T inv_d = T(1) / static_cast<T>(d);
                      for (std::size_t i = 0; i < n; ++i) {
                        T mean_dxhat = T(0), mean_dxhat_xhat = T(0);
                        for (std::size_t j = 0; j < d; ++j) {
                          const T dxh = o.grad[i * d + j] * ng.value[j];
                          mean_dxhat += dxh;
                          mean_dxhat_xhat += dxh * xhat[i * d + j];
                        }
                        mean_dxhat *= inv_d;
                        mean_dxhat_xhat *= inv_d;
                        for (std::size_t j = 0; j < d; ++j) {
                          const T dxh = o.grad[i * d + j] * ng.value[j];
                          g[i * d + j] += inv_std[i] * (dxh - mean_dxhat - xhat[i * d + j] * mean_dxhat_xhat);
                        }
                      }
                    });
}

/// Gaussian CDF via erf.
template <typename T>
T normal_cdf(T x) {
  return T(0.5) * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
}

/// x * Phi(x), exact erf form.
template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * normal_cdf(x[i]);
  return make_op<T>("gelu", x.shape(), std::move(out), {x}, [](Node<T>& o) {
    auto& in = detail::input(o, 0);
    auto& g = in.grad_buffer();
    const T inv_sqrt_2pi = T(1) / std::sqrt(T(2) * std::numbers::pi_v<T>);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T v = in.value[i];
      const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
      g[i] += o.grad[i] * (normal_cdf(v) + v * pdf);
    }
  });
}

/// Compressed sparse rows; holds a constant (non-trainable) operator.
struct SparseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> row_begin;  // rows + 1 entries
  std::vector<std::size_t> col_index;
  std::vector<double> value;

  std::size_t nonzeros() const { return value.size(); }

  static SparseMatrix from_dense(std::size_t rows, std::size_t cols, const std::vector<double>& dense) {
    if (dense.size() != rows * cols) throw DimensionError("SparseMatrix::from_dense: size mismatch");
    SparseMatrix s;
    s.rows = rows;
    s.cols = cols;
    s.row_begin.push_back(0);
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) {
        const double v = dense[i * cols + j];
        if (v != 0.0) {
          s.col_index.push_back(j);
          s.value.push_back(v);
        }
      }
      s.row_begin.push_back(s.col_index.size());
    }
    return s;
  }

  std::vector<double> to_dense() const {
    std::vector<double> d(rows * cols, 0.0);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t k = row_begin[i]; k < row_begin[i + 1]; ++k) d[i * cols + col_index[k]] = value[k];
    return d;
  }
};

/// A·Y for a constant sparse A[n×m] and Y[m×d].
template <typename T>
Tensor<T> sparse_matmul(std::shared_ptr<const SparseMatrix> a, const Tensor<T>& y) {
  detail::require_matrix(y, "sparse_matmul");
  if (a->cols != y.rows())
    throw DimensionError("sparse_matmul: operator is " + std::to_string(a->rows) + "x" + std::to_string(a->cols) +
                         " but input is " + shape_string(y.shape()));
  const std::size_t n = a->rows, d = y.cols();
  std::vector<T> out(n * d, T(0));
  detail::mac_counter() += a->nonzeros() * d;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = a->row_begin[i]; k < a->row_begin[i + 1]; ++k) {
      const T w = static_cast<T>(a->value[k]);
      const T* yr = y.values().data() + a->col_index[k] * d;
      for (std::size_t j = 0; j < d; ++j) out[i * d + j] += w * yr[j];
    }
  return make_op<T>("sparse_matmul", {n, d}, std::move(out), {y}, [a, d](Node<T>& o) {
    auto& g = detail::input(o, 0).grad_buffer();
    for (std::size_t i = 0; i < a->rows; ++i)
      for (std::size_t k = a->row_begin[i]; k < a->row_begin[i + 1]; ++k) {
        const T w = static_cast<T>(a->value[k]);
        T* gr = g.data() + a->col_index[k] * d;
        for (std::size_t j = 0; j < d; ++j) gr[j] += w * o.grad[i * d + j];
      }
  });
}

/// Zeroes the listed rows; gradient to those rows is zero as well.
template <typename T>
Tensor<T> zero_rows(const Tensor<T>& x, const std::vector<std::size_t>& row_indices) {
  detail::require_matrix(x, "zero_rows");
  const std::size_t n = x.rows(), d = x.cols();
  std::vector<char> masked(n, 0);
  for (auto r : row_indices) {
    if (r >= n) throw InputError("zero_rows: row " + std::to_string(r) + " outside " + shape_string(x.shape()));
    masked[r] = 1;
  }
  std::vector<T> out(x.values().begin(), x.values().end());
  for (std::size_t i = 0; i < n; ++i)
    if (masked[i])
      for (std::size_t j = 0; j < d; ++j) out[i * d + j] = T(0);
  return make_op<T>("zero_rows", x.shape(), std::move(out), {x}, [masked = std::move(masked), d](Node<T>& o) {
    auto& g = detail::input(o, 0).grad_buffer();
    for (std::size_t i = 0; i < masked.size(); ++i)
      if (!masked[i])
        for (std::size_t j = 0; j < d; ++j) g[i * d + j] += o.grad[i * d + j];
  });
}

/// Inverted dropout: zero with probability p, survivors scaled by 1/(1-p).
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, Rng& rng) {
  if (p <= 0.0) return x;
  if (p >= 1.0) throw ConfigError("dropout probability must be < 1");
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  std::vector<T> mask(x.size());
  for (auto& m : mask) m = rng.uniform() < p ? T(0) : keep_scale;
  return mul(x, Tensor<T>(x.shape(), std::move(mask)));
}

/// Weak-perspective camera: (u, v) = s * (x, y) + (tx, ty); camera = [s, tx, ty].
template <typename T>
Tensor<T> weak_perspective(const Tensor<T>& points, const Tensor<T>& camera) {
  detail::require_matrix(points, "weak_perspective");
  if (points.cols() != 3) throw DimensionError("weak_perspective: points must be k x 3, got " + shape_string(points.shape()));
  if (camera.size() != 3) throw DimensionError("weak_perspective: camera must hold 3 values, got " + shape_string(camera.shape()));
  const std::size_t k = points.rows();
  const T s = camera[0], tx = camera[1], ty = camera[2];
  std::vector<T> out(k * 2);
  for (std::size_t i = 0; i < k; ++i) {
    out[i * 2] = s * points[i * 3] + tx;
    out[i * 2 + 1] = s * points[i * 3 + 1] + ty;
  }
  return make_op<T>("weak_perspective", {k, 2}, std::move(out), {points, camera}, [k](Node<T>& o) {
    auto& np = detail::input(o, 0);
    auto& nc = detail::input(o, 1);
    const T s = nc.value[0];
    if (np.requires_grad) {
      auto& g = np.grad_buffer();
      for (std::size_t i = 0; i < k; ++i) {
        g[i * 3] += s * o.grad[i * 2];
        g[i * 3 + 1] += s * o.grad[i * 2 + 1];
      }
    }
    if (nc.requires_grad) {
      auto& g = nc.grad_buffer();
      for (std::size_t i = 0; i < k; ++i) {
        g[0] += o.grad[i * 2] * np.value[i * 3] + o.grad[i * 2 + 1] * np.value[i * 3 + 1];
        g[1] += o.grad[i * 2];
        g[2] += o.grad[i * 2 + 1];
      }
    }
  });
}

/// Patch extraction for convolution. Input is (H*W) x C in row-major pixel
/// order; output is (H'*W') x (k*k*C) with columns ordered (ky, kx, c).
template <typename T>
Tensor<T> im2col(const Tensor<T>& x, std::size_t height, std::size_t width, std::size_t kernel,
                 std::size_t stride, std::size_t pad) {
  detail::require_matrix(x, "im2col");
  if (x.rows() != height * width)
    throw DimensionError("im2col: " + shape_string(x.shape()) + " is not " + std::to_string(height) + "x" +
                         std::to_string(width) + " pixels");
  const std::size_t c = x.cols();
  const std::size_t out_h = (height + 2 * pad - kernel) / stride + 1;
  const std::size_t out_w = (width + 2 * pad - kernel) / stride + 1;
  const std::size_t patch = kernel * kernel * c;
  std::vector<T> out(out_h * out_w * patch, T(0));
  auto for_each_tap = [=](auto&& fn) {
    for (std::size_t oy = 0; oy < out_h; ++oy)
      for (std::size_t ox = 0; ox < out_w; ++ox)
        for (std::size_t ky = 0; ky < kernel; ++ky)
          for (std::size_t kx = 0; kx < kernel; ++kx) {
            const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
            const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
            if (iy < 0 || ix < 0 || iy >= static_cast<long>(height) || ix >= static_cast<long>(width)) continue;
            const std::size_t src = (static_cast<std::size_t>(iy) * width + static_cast<std::size_t>(ix)) * c;
            const std::size_t dst = (oy * out_w + ox) * patch + (ky * kernel + kx) * c;
            fn(src, dst);
          }
  };
  const T* xv = x.values().data();
  for_each_tap([&](std::size_t src, std::size_t dst) {
    for (std::size_t ch = 0; ch < c; ++ch) out[dst + ch] = xv[src + ch];
  });
  return make_op<T>("im2col", {out_h * out_w, patch}, std::move(out), {x}, [for_each_tap, c](Node<T>& o) {
    auto& g = detail::input(o, 0).grad_buffer();
    for_each_tap([&](std::size_t src, std::size_t dst) {
      for (std::size_t ch = 0; ch < c; ++ch) g[src + ch] += o.grad[dst + ch];
    });
  });
}

}  // namespace graphormer
