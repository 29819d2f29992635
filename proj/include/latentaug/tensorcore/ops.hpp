#pragma once

// Eager (tape-free) tensor operations. Every op here is a pure function of
// its inputs; the taped versions in autodiff.hpp call into these for their
// forward values.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "latentaug/core/error.hpp"
#include "latentaug/tensorcore/tensor.hpp"

namespace latentaug::tensorcore {

namespace detail {

inline void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
}

inline void require_rank2(const Shape& s, const char* op) {
  if (s.size() != 2) throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_string(s));
}

// Splits a shape around `axis` into (outer, axis length, inner).
struct AxisSplit {
  std::size_t outer = 1, n = 1, inner = 1;
};

inline AxisSplit split_axis(const Shape& s, std::size_t axis, const char* op) {
  if (axis >= s.size()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " + shape_string(s));
  }
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.n = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

// C (+)= A·B with A m×k, B k×n, all row-major. Each output element is
// accumulated in ascending k regardless of m, so a row's result does not
// depend on how many other rows share the call.
template <class T>
void gemm(const T* __restrict a, const T* __restrict b, T* __restrict c, std::size_t m, std::size_t k, std::size_t n,
          bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, T{0});
  constexpr std::size_t kBlockK = 128;
  constexpr std::size_t kBlockI = 4;
  for (std::size_t k0 = 0; k0 < k; k0 += kBlockK) {
    const std::size_t k1 = std::min(k, k0 + kBlockK);
    std::size_t i = 0;
    for (; i + kBlockI <= m; i += kBlockI) {
      T* __restrict c0 = c + (i + 0) * n;
      T* __restrict c1 = c + (i + 1) * n;
      T* __restrict c2 = c + (i + 2) * n;
      T* __restrict c3 = c + (i + 3) * n;
      for (std::size_t kk = k0; kk < k1; ++kk) {
        const T a0 = a[(i + 0) * k + kk];
        const T a1 = a[(i + 1) * k + kk];
        const T a2 = a[(i + 2) * k + kk];
        const T a3 = a[(i + 3) * k + kk];
        const T* __restrict br = b + kk * n;
        for (std::size_t j = 0; j < n; ++j) {
          const T bv = br[j];
          c0[j] += a0 * bv;
          c1[j] += a1 * bv;
          c2[j] += a2 * bv;
          c3[j] += a3 * bv;
        }
      }
    }
    for (; i < m; ++i) {
      T* ci = c + i * n;
      for (std::size_t kk = k0; kk < k1; ++kk) {
        const T av = a[i * k + kk];
        const T* br = b + kk * n;
        for (std::size_t j = 0; j < n; ++j) ci[j] += av * br[j];
      }
    }
  }
}

template <class T>
void transpose_into(const T* src, T* dst, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
}

template <class T>
T gelu_scalar(T x) {
  return T(0.5) * x * (T(1) + std::erf(x * T(std::numbers::sqrt2 / 2)));
}

template <class T>
T gelu_grad_scalar(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x * T(std::numbers::sqrt2 / 2)));
  const T pdf = std::exp(T(-0.5) * x * x) * T(std::numbers::inv_sqrtpi / std::numbers::sqrt2);
  return cdf + x * pdf;
}

}  // namespace detail

// ---- linear algebra -------------------------------------------------------

template <class T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  detail::require_rank2(a.shape(), "matmul");
  detail::require_rank2(b.shape(), "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  BasicTensor<T> c({a.dim(0), b.dim(1)});
  detail::gemm(a.ptr(), b.ptr(), c.ptr(), a.dim(0), a.dim(1), b.dim(1), false);
  return c;
}

template <class T>
BasicTensor<T> transpose(const BasicTensor<T>& a) {
  detail::require_rank2(a.shape(), "transpose");
  BasicTensor<T> out({a.dim(1), a.dim(0)});
  detail::transpose_into(a.ptr(), out.ptr(), a.dim(0), a.dim(1));
  return out;
}

// ---- elementwise ----------------------------------------------------------

template <class T, class F>
BasicTensor<T> map(const BasicTensor<T>& a, F f) {
  BasicTensor<T> out = a;
  for (T& v : out.data()) v = f(v);
  return out;
}

template <class T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "add");
  BasicTensor<T> out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

template <class T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "sub");
  BasicTensor<T> out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

template <class T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "mul");
  BasicTensor<T> out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

template <class T>
BasicTensor<T> scale(const BasicTensor<T>& a, T s) {
  return map(a, [s](T v) { return v * s; });
}

// a[r, :] + row for every row r; `row` has length a.cols().
template <class T>
BasicTensor<T> add_row(const BasicTensor<T>& a, const BasicTensor<T>& row) {
  if (row.size() != a.cols()) {
    throw DimensionError("add_row: broadcast row " + shape_string(row.shape()) + " does not match " +
                         shape_string(a.shape()));
  }
  BasicTensor<T> out = a;
  const std::size_t n = a.cols();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    T* o = out.ptr() + r * n;
    for (std::size_t j = 0; j < n; ++j) o[j] += row[j];
  }
  return out;
}

template <class T>
BasicTensor<T> gelu(const BasicTensor<T>& a) {
  return map(a, [](T v) { return detail::gelu_scalar(v); });
}

template <class T>
BasicTensor<T> tanh(const BasicTensor<T>& a) {
  return map(a, [](T v) { return std::tanh(v); });
}

template <class T>
BasicTensor<T> sigmoid(const BasicTensor<T>& a) {
  return map(a, [](T v) { return T(1) / (T(1) + std::exp(-v)); });
}

// ---- normalization --------------------------------------------------------

template <class T>
BasicTensor<T> softmax(const BasicTensor<T>& x, std::size_t axis) {
  const auto [outer, n, inner] = detail::split_axis(x.shape(), axis, "softmax");
  BasicTensor<T> out = x;
  T* p = out.ptr();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      T* base = p + o * n * inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, base[i * inner]);
      T total = 0;
      for (std::size_t i = 0; i < n; ++i) {
        base[i * inner] = std::exp(base[i * inner] - mx);
        total += base[i * inner];
      }
      for (std::size_t i = 0; i < n; ++i) base[i * inner] /= total;
    }
  }
  return out;
}

// Normalizes each row over the last axis, then applies gain and bias.
// `xhat` and `rstd` receive the intermediate values when non-null.
template <class T>
BasicTensor<T> layer_norm(const BasicTensor<T>& x, const BasicTensor<T>& gain, const BasicTensor<T>& bias, T eps,
                          BasicTensor<T>* xhat = nullptr, std::vector<T>* rstd = nullptr) {
  const std::size_t n = x.cols();
  if (gain.size() != n || bias.size() != n) {
    throw DimensionError("layer_norm: gain/bias " + shape_string(gain.shape()) + "/" + shape_string(bias.shape()) +
                         " do not match last axis of " + shape_string(x.shape()));
  }
  BasicTensor<T> out(x.shape());
  if (xhat) *xhat = BasicTensor<T>(x.shape());
  if (rstd) rstd->assign(x.rows(), T{0});
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const T* in = x.ptr() + r * n;
    T mean = 0;
    for (std::size_t j = 0; j < n; ++j) mean += in[j];
    mean /= T(n);
    T var = 0;
    for (std::size_t j = 0; j < n; ++j) var += (in[j] - mean) * (in[j] - mean);
    var /= T(n);
    const T rs = T(1) / std::sqrt(var + eps);
    T* o = out.ptr() + r * n;
    for (std::size_t j = 0; j < n; ++j) {
      const T h = (in[j] - mean) * rs;
      if (xhat) (*xhat)[r * n + j] = h;
      o[j] = h * gain[j] + bias[j];
    }
    if (rstd) (*rstd)[r] = rs;
  }
  return out;
}

// ---- structure ------------------------------------------------------------

template <class T>
BasicTensor<T> concat(const std::vector<const BasicTensor<T>*>& parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  Shape shape = parts.front()->shape();
  if (axis >= shape.size()) throw DimensionError("concat: axis out of range for " + shape_string(shape));
  std::size_t total = 0;
  for (const auto* p : parts) {
    Shape s = p->shape();
    if (s.size() != shape.size()) throw DimensionError("concat: rank mismatch");
    total += s[axis];
    s[axis] = shape[axis];
    if (s != shape) throw DimensionError("concat: incompatible shapes " + shape_string(p->shape()) + " vs " +
                                         shape_string(parts.front()->shape()));
  }
  shape[axis] = total;
  BasicTensor<T> out(shape);
  const auto [outer, n_out, inner] = detail::split_axis(shape, axis, "concat");
  std::size_t offset = 0;
  for (const auto* p : parts) {
    const std::size_t n = p->dim(axis);
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(p->ptr() + o * n * inner, n * inner, out.ptr() + (o * n_out + offset) * inner);
    }
    offset += n;
  }
  return out;
}

template <class T>
BasicTensor<T> concat(const std::vector<BasicTensor<T>>& parts, std::size_t axis) {
  std::vector<const BasicTensor<T>*> ptrs;
  for (const auto& p : parts) ptrs.push_back(&p);
  return concat(ptrs, axis);
}

// Copies indices [begin, end) along `axis`.
template <class T>
BasicTensor<T> slice(const BasicTensor<T>& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const auto [outer, n, inner] = detail::split_axis(x.shape(), axis, "slice");
  if (begin >= end || end > n) {
    throw DimensionError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) + ") invalid for " +
                         shape_string(x.shape()));
  }
  Shape s = x.shape();
  s[axis] = end - begin;
  BasicTensor<T> out(s);
  const std::size_t len = (end - begin) * inner;
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(x.ptr() + (o * n + begin) * inner, len, out.ptr() + o * len);
  }
  return out;
}

template <class T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape s) {
  return x.reshaped(std::move(s));
}

template <class T>
BasicTensor<T> gather_rows(const BasicTensor<T>& x, std::span<const std::size_t> index) {
  const std::size_t n = x.cols();
  if (index.empty()) throw DimensionError("gather_rows: empty index");
  BasicTensor<T> out({index.size(), n});
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= x.rows()) throw DimensionError("gather_rows: index out of range");
    std::copy_n(x.ptr() + index[i] * n, n, out.ptr() + i * n);
  }
  return out;
}

// ---- reductions -----------------------------------------------------------

template <class T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
  T s = 0;
  for (T v : x.data()) s += v;
  return BasicTensor<T>::scalar(s);
}

template <class T>
BasicTensor<T> mean(const BasicTensor<T>& x) {
  return BasicTensor<T>::scalar(sum(x).item() / T(x.size()));
}

// Sums out `axis`; a rank-1 input reduces to shape [1].
template <class T>
BasicTensor<T> sum_axis(const BasicTensor<T>& x, std::size_t axis) {
  const auto [outer, n, inner] = detail::split_axis(x.shape(), axis, "sum_axis");
  Shape s = x.shape();
  s.erase(s.begin() + static_cast<std::ptrdiff_t>(axis));
  if (s.empty()) s = {1};
  BasicTensor<T> out(s);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t in = 0; in < inner; ++in) out[o * inner + in] += x[(o * n + i) * inner + in];
  return out;
}

template <class T>
BasicTensor<T> mean_axis(const BasicTensor<T>& x, std::size_t axis) {
  const T n = T(x.dim(axis));
  return map(sum_axis(x, axis), [n](T v) { return v / n; });
}

// Euclidean norm over the last axis: [.., n] -> [rows].
template <class T>
BasicTensor<T> row_norm(const BasicTensor<T>& x) {
  BasicTensor<T> out({x.rows()});
  const std::size_t n = x.cols();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    T s = 0;
    for (std::size_t j = 0; j < n; ++j) s += x[r * n + j] * x[r * n + j];
    out[r] = std::sqrt(s);
  }
  return out;
}

template <class T>
BasicTensor<T> l2_norm(const BasicTensor<T>& x) {
  T s = 0;
  for (T v : x.data()) s += v * v;
  return BasicTensor<T>::scalar(std::sqrt(s));
}

// ---- attention ------------------------------------------------------------

/// Ragged grouping for cross-attention. Query rows are laid out as
/// `groups × queries_per_group`; group g attends to key rows
/// [key_offset[g], key_offset[g] + key_count[g]). Groups may share keys.
struct AttentionLayout {
  std::size_t queries_per_group = 1;
  std::vector<std::size_t> key_offset;
  std::vector<std::size_t> key_count;

  std::size_t groups() const { return key_offset.size(); }

  // Every group attends to the same `count` keys starting at row 0.
  static AttentionLayout shared(std::size_t groups, std::size_t queries_per_group, std::size_t count) {
    AttentionLayout l;
    l.queries_per_group = queries_per_group;
    l.key_offset.assign(groups, 0);
    l.key_count.assign(groups, count);
    return l;
  }

  void validate(std::size_t query_rows, std::size_t key_rows) const {
    if (key_offset.size() != key_count.size()) throw DimensionError("attention layout: offset/count length mismatch");
    if (groups() * queries_per_group != query_rows) {
      throw DimensionError("attention layout: " + std::to_string(groups()) + " groups of " +
                           std::to_string(queries_per_group) + " queries do not cover " + std::to_string(query_rows) +
                           " query rows");
    }
    for (std::size_t g = 0; g < groups(); ++g) {
      if (key_count[g] == 0 || key_offset[g] + key_count[g] > key_rows) {
        throw DimensionError("attention layout: group " + std::to_string(g) + " key range out of bounds");
      }
    }
  }
};

/// Multi-head scaled dot-product cross-attention over already-projected
/// queries `q` [rows × width] and keys/values `k`, `v` [key_rows × width].
/// When `probs` is non-null it receives the attention weights, laid out
/// per group as [head][query][key].
template <class T>
BasicTensor<T> cross_attention(const BasicTensor<T>& q, const BasicTensor<T>& k, const BasicTensor<T>& v,
                               const AttentionLayout& layout, std::size_t heads, std::vector<T>* probs = nullptr) {
  detail::require_rank2(q.shape(), "cross_attention");
  detail::require_rank2(k.shape(), "cross_attention");
  detail::require_same_shape(k.shape(), v.shape(), "cross_attention(k, v)");
  const std::size_t width = q.dim(1);
  if (k.dim(1) != width) throw DimensionError("cross_attention: query/key widths differ");
  if (heads == 0 || width % heads != 0) throw DimensionError("cross_attention: width not divisible by heads");
  layout.validate(q.dim(0), k.dim(0));

  const std::size_t dh = width / heads;
  const T inv_scale = T(1) / std::sqrt(T(dh));
  const std::size_t cq = layout.queries_per_group;
  BasicTensor<T> out({q.dim(0), width});
  if (probs) probs->clear();
  std::vector<T> p;
  for (std::size_t g = 0; g < layout.groups(); ++g) {
    const std::size_t off = layout.key_offset[g];
    const std::size_t nk = layout.key_count[g];
    p.resize(nk);
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t c0 = h * dh;
      for (std::size_t i = 0; i < cq; ++i) {
        const T* qi = q.ptr() + (g * cq + i) * width + c0;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < nk; ++j) {
          const T* kj = k.ptr() + (off + j) * width + c0;
          T s = 0;
          for (std::size_t t = 0; t < dh; ++t) s += qi[t] * kj[t];
          p[j] = s * inv_scale;
          mx = std::max(mx, p[j]);
        }
        T total = 0;
        for (std::size_t j = 0; j < nk; ++j) {
          p[j] = std::exp(p[j] - mx);
          total += p[j];
        }
        T* oi = out.ptr() + (g * cq + i) * width + c0;
        for (std::size_t j = 0; j < nk; ++j) {
          p[j] /= total;
          const T* vj = v.ptr() + (off + j) * width + c0;
          for (std::size_t t = 0; t < dh; ++t) oi[t] += p[j] * vj[t];
        }
        if (probs) probs->insert(probs->end(), p.begin(), p.end());
      }
    }
  }
  return out;
}

// ---- similarity helpers ---------------------------------------------------

namespace detail {
template <class T>
double cosine_impl(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) throw DimensionError("cosine: length mismatch");
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += double(a[i]) * double(b[i]);
    aa += double(a[i]) * double(a[i]);
    bb += double(b[i]) * double(b[i]);
  }
  if (aa == 0 || bb == 0) return 0.0;
  return ab / std::sqrt(aa * bb);
}
}  // namespace detail

// Cosine similarity; 0 when either vector is zero.
inline double cosine(std::span<const double> a, std::span<const double> b) { return detail::cosine_impl(a, b); }
inline double cosine(std::span<const float> a, std::span<const float> b) { return detail::cosine_impl(a, b); }

}  // namespace latentaug::tensorcore
