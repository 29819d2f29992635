#pragma once

// Reverse-mode automatic differentiation over Tensor (64-bit).
//
// A Tape owns every value computed while it is live. Var is a lightweight
// handle (tape pointer + node index). Ops on Vars compute their forward value
// with the eager kernels from ops.hpp and append a node whose backward
// closure accumulates into the gradients of its inputs.

#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "latentaug/core/error.hpp"
#include "latentaug/tensorcore/ops.hpp"
#include "latentaug/tensorcore/tensor.hpp"

namespace latentaug::tensorcore {

class Tape;

class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  // Receives the output gradient and value; accumulates into inputs via
  // grad_buffer().
  using BackwardFn = std::function<void(Tape&, const Tensor& grad_out, const Tensor& value_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // A leaf that receives a gradient.
  Var variable(Tensor value) { return push(std::move(value), true, {}); }
  // A leaf that does not.
  Var constant(Tensor value) { return push(std::move(value), false, {}); }

  const Tensor& value(const Var& v) const { return node(v).value; }
  bool requires_grad(const Var& v) const { return node(v).requires_grad; }

  // Gradient of the last backward() loss w.r.t. `v`; zeros when `v` was not
  // reachable from the loss.
  const Tensor& grad(const Var& v) {
    check_owner(v);
    Node& n = nodes_[v.id_];
    if (n.grad.empty()) n.grad = Tensor(n.value.shape());
    return n.grad;
  }

  void backward(const Var& loss) {
    check_owner(loss);
    if (backward_done_) throw StateError("backward: this tape has already been differentiated");
    Node& root = nodes_[loss.id_];
    if (root.value.size() != 1) {
      throw ContractError("backward: loss must be a scalar, got shape " + shape_string(root.value.shape()));
    }
    backward_done_ = true;
    if (!root.requires_grad) return;
    root.grad = Tensor(root.value.shape(), 1.0);
    for (std::size_t i = loss.id_ + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
      n.backward(*this, n.grad, n.value);
    }
  }

  bool differentiated() const { return backward_done_; }
  std::size_t size() const { return nodes_.size(); }

  // Process-wide count of tape nodes ever created. Inference paths assert
  // this does not move.
  static std::uint64_t nodes_created() { return nodes_created_.load(std::memory_order_relaxed); }

  // --- used by op implementations -----------------------------------------

  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
    return record(std::move(value), std::vector<Var>(inputs), std::move(fn));
  }

  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn fn) {
    bool any = false;
    for (const Var& in : inputs) {
      check_owner(in);
      any = any || node(in).requires_grad;
    }
    return push(std::move(value), any, any ? std::move(fn) : BackwardFn{});
  }

  // Gradient accumulator for an input, or nullptr when it needs none.
  Tensor* grad_buffer(const Var& v) {
    Node& n = nodes_[v.id_];
    if (!n.requires_grad) return nullptr;
    if (n.grad.empty()) n.grad = Tensor(n.value.shape());
    return &n.grad;
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var push(Tensor value, bool requires_grad, BackwardFn fn) {
    if (backward_done_) throw StateError("tape: cannot record after backward");
    nodes_.push_back(Node{std::move(value), Tensor{}, requires_grad, std::move(fn)});
    nodes_created_.fetch_add(1, std::memory_order_relaxed);
    return Var(this, nodes_.size() - 1);
  }

  const Node& node(const Var& v) const {
    check_owner(v);
    return nodes_[v.id_];
  }

  void check_owner(const Var& v) const {
    if (v.tape_ != this || v.id_ >= nodes_.size()) throw ContractError("variable does not belong to this tape");
  }

  std::vector<Node> nodes_;
  bool backward_done_ = false;
  static inline std::atomic<std::uint64_t> nodes_created_{0};
};

inline const Tensor& Var::value() const {
  if (!tape_) throw StateError("use of an unbound variable");
  return tape_->value(*this);
}

inline bool Var::requires_grad() const { return tape_ && tape_->requires_grad(*this); }

namespace detail {

inline Tape& tape_of(const Var& a) {
  if (!a.tape()) throw StateError("use of an unbound variable");
  return *a.tape();
}

inline void axpy(Tensor& dst, const Tensor& src, double s = 1.0) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += s * src[i];
}

}  // namespace detail

// ---- linear algebra -------------------------------------------------------

inline Var matmul(const Var& a, const Var& b) {
  Tape& t = detail::tape_of(a);
  return t.record(matmul(a.value(), b.value()), {a, b}, [a, b](Tape& tp, const Tensor& g, const Tensor&) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    if (Tensor* ga = tp.grad_buffer(a)) {
      Tensor bt = transpose(bv);
      detail::gemm(g.ptr(), bt.ptr(), ga->ptr(), m, n, k, true);
    }
    if (Tensor* gb = tp.grad_buffer(b)) {
      Tensor at = transpose(av);
      detail::gemm(at.ptr(), g.ptr(), gb->ptr(), k, m, n, true);
    }
  });
}

inline Var transpose(const Var& a) {
  Tape& t = detail::tape_of(a);
  return t.record(transpose(a.value()), {a}, [a](Tape& tp, const Tensor& g, const Tensor&) {
    if (Tensor* ga = tp.grad_buffer(a)) detail::axpy(*ga, transpose(g));
  });
}

// ---- elementwise ----------------------------------------------------------

inline Var add(const Var& a, const Var& b) {
  Tape& t = detail::tape_of(a);
  return t.record(add(a.value(), b.value()), {a, b}, [a, b](Tape& tp, const Tensor& g, const Tensor&) {
    if (Tensor* ga = tp.grad_buffer(a)) detail::axpy(*ga, g);
    if (Tensor* gb = tp.grad_buffer(b)) detail::axpy(*gb, g);
  });
}

inline Var sub(const Var& a, const Var& b) {
  Tape& t = detail::tape_of(a);
  return t.record(sub(a.value(), b.value()), {a, b}, [a, b](Tape& tp, const Tensor& g, const Tensor&) {
    if (Tensor* ga = tp.grad_buffer(a)) detail::axpy(*ga, g);
    if (Tensor* gb = tp.grad_buffer(b)) detail::axpy(*gb, g, -1.0);
  });
}

inline Var mul(const Var& a, const Var& b) {
  Tape& t = detail::tape_of(a);
  return t.record(mul(a.value(), b.value()), {a, b}, [a, b](Tape& tp, const Tensor& g, const Tensor&) {
    if (Tensor* ga = tp.grad_buffer(a)) {
      const Tensor& bv = b.value();
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * bv[i];
    }
    if (Tensor* gb = tp.grad_buffer(b)) {
      const Tensor& av = a.value();
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * av[i];
    }
  });
}

inline Var scale(const Var& a, double s) {
  Tape& t = detail::tape_of(a);
  return t.record(scale(a.value(), s), {a}, [a, s](Tape& tp, const Tensor& g, const Tensor&) {
    if (Tensor* ga = tp.grad_buffer(a)) detail::axpy(*ga, g, s);
  });
}

inline Var add_row(const Var& a, const Var& row) {
  Tape& t = detail::tape_of(a);
  return t.record(add_row(a.value(), row.value()), {a, row}, [a, row](Tape& tp, const Tensor& g, const Tensor&) {
    if (Tensor* ga = tp.grad_buffer(a)) detail::axpy(*ga, g);
    if (Tensor* gr = tp.grad_buffer(row)) {
      const std::size_t n = g.cols();
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t j = 0; j < n; ++j) (*gr)[j] += g[r * n + j];
    }
  });
}

inline Var gelu(const Var& a) {
  Tape& t = detail::tape_of(a);
  return t.record(gelu(a.value()), {a}, [a](Tape& tp, const Tensor& g, const Tensor&) {
    if (Tensor* ga = tp.grad_buffer(a)) {
      const Tensor& x = a.value();
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * detail::gelu_grad_scalar(x[i]);
    }
  });
}

inline Var tanh(const Var& a) {
  Tape& t = detail::tape_of(a);
  return t.record(tanh(a.value()), {a}, [a](Tape& tp, const Tensor& g, const Tensor& y) {
    if (Tensor* ga = tp.grad_buffer(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

inline Var sigmoid(const Var& a) {
  Tape& t = detail::tape_of(a);
  return t.record(sigmoid(a.value()), {a}, [a](Tape& tp, const Tensor& g, const Tensor& y) {
    if (Tensor* ga = tp.grad_buffer(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

// ---- normalization --------------------------------------------------------

inline Var softmax(const Var& x, std::size_t axis) {
  Tape& t = detail::tape_of(x);
  Tensor y = softmax(x.value(), axis);
  const auto split = detail::split_axis(y.shape(), axis, "softmax");
  return t.record(std::move(y), {x}, [x, split](Tape& tp, const Tensor& g, const Tensor& y) {
    Tensor* gx = tp.grad_buffer(x);
    if (!gx) return;
    const auto [outer, n, inner] = split;
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * n * inner + in;
        double dot = 0;
        for (std::size_t i = 0; i < n; ++i) dot += g[base + i * inner] * y[base + i * inner];
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t idx = base + i * inner;
          (*gx)[idx] += y[idx] * (g[idx] - dot);
        }
      }
    }
  });
}

inline Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5) {
  Tape& t = detail::tape_of(x);
  Tensor xhat;
  std::vector<double> rstd;
  Tensor y = layer_norm(x.value(), gain.value(), bias.value(), eps, &xhat, &rstd);
  return t.record(std::move(y), {x, gain, bias},
                  [x, gain, bias, xhat = std::move(xhat), rstd = std::move(rstd)](Tape& tp, const Tensor& g, const Tensor&) {
                    const std::size_t n = g.cols();
                    const std::size_t rows = g.rows();
                    const Tensor& gv = gain.value();
                    if (Tensor* gg = tp.grad_buffer(gain)) {
                      for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t j = 0; j < n; ++j) (*gg)[j] += g[r * n + j] * xhat[r * n + j];
                    }
                    if (Tensor* gb = tp.grad_buffer(bias)) {
                      for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t j = 0; j < n; ++j) (*gb)[j] += g[r * n + j];
                    }
                    if (Tensor* gx = tp.grad_buffer(x)) {
                      for (std::size_t r = 0; r < rows; ++r) {
                        double m1 = 0, m2 = 0;
                        for (std::size_t j = 0; j < n; ++j) {
                          const double d = g[r * n + j] * gv[j];
                          m1 += d;
                          m2 += d * xhat[r * n + j];
                        }
                        m1 /= double(n);
                        m2 /= double(n);
                        for (std::size_t j = 0; j < n; ++j) {
                          const double d = g[r * n + j] * gv[j];
                          (*gx)[r * n + j] += rstd[r] * (d - m1 - xhat[r * n + j] * m2);
                        }
                      }
                    }
                  });
}

// ---- structure ------------------------------------------------------------

inline Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  Tape& t = detail::tape_of(parts.front());
  std::vector<const Tensor*> values;
  for (const Var& p : parts) values.push_back(&p.value());
  Tensor y = concat(values, axis);
  const Shape out_shape = y.shape();
  return t.record(std::move(y), parts, [parts, axis, out_shape](Tape& tp, const Tensor& g, const Tensor&) {
    const auto [outer, n_out, inner] = detail::split_axis(out_shape, axis, "concat");
    std::size_t offset = 0;
    for (const Var& p : parts) {
      const std::size_t n = p.value().dim(axis);
      if (Tensor* gp = tp.grad_buffer(p)) {
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t i = 0; i < n * inner; ++i) (*gp)[o * n * inner + i] += g[(o * n_out + offset) * inner + i];
      }
      offset += n;
    }
  });
}

inline Var slice(const Var& x, std::size_t axis, std::size_t begin, std::size_t end) {
  Tape& t = detail::tape_of(x);
  return t.record(slice(x.value(), axis, begin, end), {x}, [x, axis, begin, end](Tape& tp, const Tensor& g, const Tensor&) {
    Tensor* gx = tp.grad_buffer(x);
    if (!gx) return;
    const auto [outer, n, inner] = detail::split_axis(x.value().shape(), axis, "slice");
    const std::size_t len = (end - begin) * inner;
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < len; ++i) (*gx)[(o * n + begin) * inner + i] += g[o * len + i];
  });
}

inline Var reshape(const Var& x, Shape s) {
  Tape& t = detail::tape_of(x);
  return t.record(x.value().reshaped(std::move(s)), {x}, [x](Tape& tp, const Tensor& g, const Tensor&) {
    if (Tensor* gx = tp.grad_buffer(x))
      for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i];
  });
}

inline Var gather_rows(const Var& x, std::vector<std::size_t> index) {
  Tape& t = detail::tape_of(x);
  Tensor y = gather_rows(x.value(), std::span<const std::size_t>(index));
  return t.record(std::move(y), {x}, [x, index = std::move(index)](Tape& tp, const Tensor& g, const Tensor&) {
    Tensor* gx = tp.grad_buffer(x);
    if (!gx) return;
    const std::size_t n = g.cols();
    for (std::size_t i = 0; i < index.size(); ++i)
      for (std::size_t j = 0; j < n; ++j) (*gx)[index[i] * n + j] += g[i * n + j];
  });
}

// ---- reductions -----------------------------------------------------------

inline Var sum(const Var& x) {
  Tape& t = detail::tape_of(x);
  return t.record(sum(x.value()), {x}, [x](Tape& tp, const Tensor& g, const Tensor&) {
    if (Tensor* gx = tp.grad_buffer(x))
      for (double& v : gx->data()) v += g[0];
  });
}

inline Var mean(const Var& x) {
  Tape& t = detail::tape_of(x);
  return t.record(mean(x.value()), {x}, [x](Tape& tp, const Tensor& g, const Tensor&) {
    if (Tensor* gx = tp.grad_buffer(x)) {
      const double s = g[0] / double(gx->size());
      for (double& v : gx->data()) v += s;
    }
  });
}

inline Var sum_axis(const Var& x, std::size_t axis) {
  Tape& t = detail::tape_of(x);
  return t.record(sum_axis(x.value(), axis), {x}, [x, axis](Tape& tp, const Tensor& g, const Tensor&) {
    Tensor* gx = tp.grad_buffer(x);
    if (!gx) return;
    const auto [outer, n, inner] = detail::split_axis(x.value().shape(), axis, "sum_axis");
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t in = 0; in < inner; ++in) (*gx)[(o * n + i) * inner + in] += g[o * inner + in];
  });
}

inline Var mean_axis(const Var& x, std::size_t axis) { return scale(sum_axis(x, axis), 1.0 / double(x.value().dim(axis))); }

// Euclidean norm of each row (last axis). The gradient at a zero row is zero.
inline Var row_norm(const Var& x) {
  Tape& t = detail::tape_of(x);
  return t.record(row_norm(x.value()), {x}, [x](Tape& tp, const Tensor& g, const Tensor& norms) {
    Tensor* gx = tp.grad_buffer(x);
    if (!gx) return;
    const Tensor& xv = x.value();
    const std::size_t n = xv.cols();
    for (std::size_t r = 0; r < xv.rows(); ++r) {
      if (norms[r] == 0) continue;
      const double s = g[r] / norms[r];
      for (std::size_t j = 0; j < n; ++j) (*gx)[r * n + j] += s * xv[r * n + j];
    }
  });
}

inline Var l2_norm(const Var& x) {
  Tape& t = detail::tape_of(x);
  Tensor y = l2_norm(x.value());
  const double norm = y[0];
  return t.record(std::move(y), {x}, [x, norm](Tape& tp, const Tensor& g, const Tensor&) {
    Tensor* gx = tp.grad_buffer(x);
    if (!gx || norm == 0) return;
    detail::axpy(*gx, x.value(), g[0] / norm);
  });
}

// Mean cross-entropy of row-wise logits against integer class labels.
inline Var cross_entropy(const Var& logits, std::vector<std::size_t> labels) {
  Tape& t = detail::tape_of(logits);
  const Tensor& z = logits.value();
  if (z.rank() != 2 || labels.size() != z.dim(0)) throw DimensionError("cross_entropy: labels do not match logits");
  Tensor p = softmax(z, 1);
  double loss = 0;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] >= z.dim(1)) throw DimensionError("cross_entropy: label out of range");
    // log-sum-exp form keeps the value finite for saturated logits
    double mx = z.at(r, 0);
    for (std::size_t c = 1; c < z.dim(1); ++c) mx = std::max(mx, z.at(r, c));
    double lse = 0;
    for (std::size_t c = 0; c < z.dim(1); ++c) lse += std::exp(z.at(r, c) - mx);
    loss += mx + std::log(lse) - z.at(r, labels[r]);
  }
  loss /= double(labels.size());
  return t.record(Tensor::scalar(loss), {logits},
                  [logits, labels = std::move(labels), p = std::move(p)](Tape& tp, const Tensor& g, const Tensor&) {
                    Tensor* gz = tp.grad_buffer(logits);
                    if (!gz) return;
                    const double s = g[0] / double(labels.size());
                    const std::size_t k = p.dim(1);
                    for (std::size_t r = 0; r < labels.size(); ++r)
                      for (std::size_t c = 0; c < k; ++c)
                        (*gz)[r * k + c] += s * (p[r * k + c] - (c == labels[r] ? 1.0 : 0.0));
                  });
}

// ---- attention ------------------------------------------------------------

inline Var cross_attention(const Var& q, const Var& k, const Var& v, AttentionLayout layout, std::size_t heads) {
  Tape& t = detail::tape_of(q);
  std::vector<double> probs;
  Tensor y = cross_attention(q.value(), k.value(), v.value(), layout, heads, &probs);
  return t.record(
      std::move(y), {q, k, v},
      [q, k, v, heads, layout = std::move(layout), probs = std::move(probs)](Tape& tp, const Tensor& g, const Tensor&) {
        const Tensor& qv = q.value();
        const Tensor& kv = k.value();
        const Tensor& vv = v.value();
        Tensor* gq = tp.grad_buffer(q);
        Tensor* gk = tp.grad_buffer(k);
        Tensor* gv = tp.grad_buffer(v);
        const std::size_t width = qv.dim(1);
        const std::size_t dh = width / heads;
        const double inv_scale = 1.0 / std::sqrt(double(dh));
        const std::size_t cq = layout.queries_per_group;
        std::vector<double> dp;
        std::size_t pos = 0;
        for (std::size_t grp = 0; grp < layout.groups(); ++grp) {
          const std::size_t off = layout.key_offset[grp];
          const std::size_t nk = layout.key_count[grp];
          dp.resize(nk);
          for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t c0 = h * dh;
            for (std::size_t i = 0; i < cq; ++i) {
              const std::size_t qrow = (grp * cq + i) * width + c0;
              const double* p = probs.data() + pos;
              pos += nk;
              const double* go = g.ptr() + qrow;
              double dot = 0;
              for (std::size_t j = 0; j < nk; ++j) {
                const double* vj = vv.ptr() + (off + j) * width + c0;
                double s = 0;
                for (std::size_t c = 0; c < dh; ++c) s += go[c] * vj[c];
                dp[j] = s;
                dot += p[j] * s;
                if (gv) {
                  double* gvj = gv->ptr() + (off + j) * width + c0;
                  for (std::size_t c = 0; c < dh; ++c) gvj[c] += p[j] * go[c];
                }
              }
              for (std::size_t j = 0; j < nk; ++j) {
                const double ds = p[j] * (dp[j] - dot) * inv_scale;
                if (gq) {
                  const double* kj = kv.ptr() + (off + j) * width + c0;
                  double* gqi = gq->ptr() + qrow;
                  for (std::size_t c = 0; c < dh; ++c) gqi[c] += ds * kj[c];
                }
                if (gk) {
                  const double* qi = qv.ptr() + qrow;
                  double* gkj = gk->ptr() + (off + j) * width + c0;
                  for (std::size_t c = 0; c < dh; ++c) gkj[c] += ds * qi[c];
                }
              }
            }
          }
        }
      });
}

}  // namespace latentaug::tensorcore
