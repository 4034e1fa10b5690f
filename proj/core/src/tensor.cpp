#include "ctt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

namespace ctt {

namespace {

thread_local Tape* g_active_tape = nullptr;

std::size_t shape_product(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

using Node = detail::TensorNode;
using NodePtr = std::shared_ptr<Node>;

std::vector<double>& ensure_grad(Node& n) {
  if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

bool grad_missing(const Node& n) { return n.grad.size() != n.value.size(); }

// Marks `out` as tape-produced and records the rule when recording applies.
void maybe_record(Tensor& out, bool any_input_requires,
                  std::function<void()> rule) {
  Tape* tape = g_active_tape;
  if (!tape || !any_input_requires) return;
  out.node()->requires_grad = true;
  out.node()->tape = tape;
  tape->record(std::move(rule));
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

}  // namespace

Tensor::Tensor(Shape shape, double fill, bool requires_grad)
    : node_(std::make_shared<Node>()) {
  node_->shape = std::move(shape);
  node_->value.assign(shape_product(node_->shape), fill);
  node_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : node_(std::make_shared<Node>()) {
  if (shape_product(shape) != data.size()) {
    throw ShapeError("Tensor: data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  }
  node_->shape = std::move(shape);
  node_->value = std::move(data);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double v) { return Tensor(Shape{1}, {v}); }

const std::vector<double>& Tensor::grad() const {
  if (!has_grad()) {
    throw std::logic_error("Tensor::grad: no gradient has been accumulated");
  }
  return node_->grad;
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) {
    throw std::logic_error("Tape::backward: called twice without reset()");
  }
  if (loss.size() != 1) {
    throw ShapeError("Tape::backward: loss must be scalar, got " +
                     std::to_string(loss.size()) + " elements");
  }
  if (loss.node()->tape != this) {
    throw std::logic_error("Tape::backward: loss was not recorded on this tape");
  }
  ensure_grad(*loss.node())[0] = 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
  consumed_ = true;
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) {
  g_active_tape = &tape;
}

TapeScope::~TapeScope() { g_active_tape = previous_; }

Tape* active_tape() { return g_active_tape; }

// ---- matmul ----------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul: expects rank-2 tensors");
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner extents differ, " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
  Tensor out(Shape{m, n});
  {
    const double* av = a.values().data();
    const double* bv = b.values().data();
    double* ov = out.mutable_values().data();
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t kk = 0; kk < k; ++kk) {
        const double aik = av[i * k + kk];
        if (aik == 0.0) continue;
        const double* brow = bv + kk * n;
        double* orow = ov + i * n;
        for (std::size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
      }
    }
  }
  maybe_record(out, a.requires_grad() || b.requires_grad(),
               [an = a.node(), bn = b.node(), on = out.node(), m, k, n] {
                 if (grad_missing(*on)) return;
                 const std::vector<double>& g = on->grad;
                 if (an->requires_grad) {
                   std::vector<double>& da = ensure_grad(*an);
                   // dA = G * B^T
                   for (std::size_t i = 0; i < m; ++i) {
                     for (std::size_t kk = 0; kk < k; ++kk) {
                       double acc = 0.0;
                       const double* grow = g.data() + i * n;
                       const double* brow = bn->value.data() + kk * n;
                       for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                       da[i * k + kk] += acc;
                     }
                   }
                 }
                 if (bn->requires_grad) {
                   std::vector<double>& db = ensure_grad(*bn);
                   // dB = A^T * G
                   for (std::size_t i = 0; i < m; ++i) {
                     const double* grow = g.data() + i * n;
                     for (std::size_t kk = 0; kk < k; ++kk) {
                       const double aik = an->value[i * k + kk];
                       if (aik == 0.0) continue;
                       double* dbrow = db.data() + kk * n;
                       for (std::size_t j = 0; j < n; ++j) dbrow[j] += aik * grow[j];
                     }
                   }
                 }
               });
  return out;
}

// ---- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor out(a.shape());
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) {
    out.mutable_values()[i] = a.at(i) + b.at(i);
  }
  maybe_record(out, a.requires_grad() || b.requires_grad(),
               [an = a.node(), bn = b.node(), on = out.node(), n] {
                 if (grad_missing(*on)) return;
                 const auto& g = on->grad;
                 if (an->requires_grad) {
                   auto& da = ensure_grad(*an);
                   for (std::size_t i = 0; i < n; ++i) da[i] += g[i];
                 }
                 if (bn->requires_grad) {
                   auto& db = ensure_grad(*bn);
                   for (std::size_t i = 0; i < n; ++i) db[i] += g[i];
                 }
               });
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tensor out(a.shape());
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) {
    out.mutable_values()[i] = a.at(i) - b.at(i);
  }
  maybe_record(out, a.requires_grad() || b.requires_grad(),
               [an = a.node(), bn = b.node(), on = out.node(), n] {
                 if (grad_missing(*on)) return;
                 const auto& g = on->grad;
                 if (an->requires_grad) {
                   auto& da = ensure_grad(*an);
                   for (std::size_t i = 0; i < n; ++i) da[i] += g[i];
                 }
                 if (bn->requires_grad) {
                   auto& db = ensure_grad(*bn);
                   for (std::size_t i = 0; i < n; ++i) db[i] -= g[i];
                 }
               });
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Tensor out(a.shape());
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) {
    out.mutable_values()[i] = a.at(i) * b.at(i);
  }
  maybe_record(out, a.requires_grad() || b.requires_grad(),
               [an = a.node(), bn = b.node(), on = out.node(), n] {
                 if (grad_missing(*on)) return;
                 const auto& g = on->grad;
                 if (an->requires_grad) {
                   auto& da = ensure_grad(*an);
                   for (std::size_t i = 0; i < n; ++i) da[i] += g[i] * bn->value[i];
                 }
                 if (bn->requires_grad) {
                   auto& db = ensure_grad(*bn);
                   for (std::size_t i = 0; i < n; ++i) db[i] += g[i] * an->value[i];
                 }
               });
  return out;
}

Tensor scale(const Tensor& a, double s) {
  Tensor out(a.shape());
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) out.mutable_values()[i] = a.at(i) * s;
  maybe_record(out, a.requires_grad(),
               [an = a.node(), on = out.node(), s, n] {
                 if (grad_missing(*on)) return;
                 auto& da = ensure_grad(*an);
                 for (std::size_t i = 0; i < n; ++i) da[i] += on->grad[i] * s;
               });
  return out;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (x.rank() != 2) throw ShapeError("add_bias: x must be rank 2");
  const std::size_t r = x.dim(0), c = x.dim(1);
  if (bias.size() != c) {
    throw ShapeError("add_bias: bias length " + std::to_string(bias.size()) +
                     " does not match columns " + std::to_string(c));
  }
  Tensor out(x.shape());
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      out.mutable_values()[i * c + j] = x.at(i * c + j) + bias.at(j);
    }
  }
  maybe_record(out, x.requires_grad() || bias.requires_grad(),
               [xn = x.node(), bn = bias.node(), on = out.node(), r, c] {
                 if (grad_missing(*on)) return;
                 const auto& g = on->grad;
                 if (xn->requires_grad) {
                   auto& dx = ensure_grad(*xn);
                   for (std::size_t i = 0; i < r * c; ++i) dx[i] += g[i];
                 }
                 if (bn->requires_grad) {
                   auto& db = ensure_grad(*bn);
                   for (std::size_t i = 0; i < r; ++i) {
                     for (std::size_t j = 0; j < c; ++j) db[j] += g[i * c + j];
                   }
                 }
               });
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out(x.shape());
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) {
    out.mutable_values()[i] = x.at(i) > 0.0 ? x.at(i) : 0.0;
  }
  maybe_record(out, x.requires_grad(),
               [xn = x.node(), on = out.node(), n] {
                 if (grad_missing(*on)) return;
                 auto& dx = ensure_grad(*xn);
                 for (std::size_t i = 0; i < n; ++i) {
                   if (xn->value[i] > 0.0) dx[i] += on->grad[i];
                 }
               });
  return out;
}

Tensor gelu(const Tensor& x) {
  Tensor out(x.shape());
  const std::size_t n = x.size();
  constexpr double inv_sqrt2 = std::numbers::sqrt2 / 2.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = x.at(i);
    out.mutable_values()[i] = 0.5 * v * (1.0 + std::erf(v * inv_sqrt2));
  }
  maybe_record(out, x.requires_grad(),
               [xn = x.node(), on = out.node(), n] {
                 if (grad_missing(*on)) return;
                 auto& dx = ensure_grad(*xn);
                 constexpr double inv_sqrt_2pi =
                     0.3989422804014326779399460599343818684;
                 for (std::size_t i = 0; i < n; ++i) {
                   const double v = xn->value[i];
                   const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
                   const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
                   dx[i] += on->grad[i] * (cdf + v * pdf);
                 }
               });
  return out;
}

// ---- softmax / layer_norm --------------------------------------------------

namespace {

// Applies rowwise softmax over `groups` slices of length `len` with element
// stride `stride` and slice stride `group_stride`.
void softmax_slices(const double* in, double* out, std::size_t groups,
                    std::size_t len, std::size_t group_stride,
                    std::size_t stride) {
  for (std::size_t gidx = 0; gidx < groups; ++gidx) {
    const double* src = in + gidx * group_stride;
    double* dst = out + gidx * group_stride;
    double mx = src[0];
    for (std::size_t i = 1; i < len; ++i) mx = std::max(mx, src[i * stride]);
    double total = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      const double e = std::exp(src[i * stride] - mx);
      dst[i * stride] = e;
      total += e;
    }
    const double inv = 1.0 / total;
    for (std::size_t i = 0; i < len; ++i) dst[i * stride] *= inv;
  }
}

}  // namespace

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (x.rank() != 1 && x.rank() != 2) {
    throw ShapeError("softmax: expects rank 1 or 2");
  }
  if (axis >= x.rank()) throw ShapeError("softmax: axis out of range");

  std::size_t groups, len, group_stride, stride;
  if (x.rank() == 1) {
    groups = 1;
    len = x.dim(0);
    group_stride = 0;
    stride = 1;
  } else if (axis == 1) {
    groups = x.dim(0);
    len = x.dim(1);
    group_stride = len;
    stride = 1;
  } else {
    groups = x.dim(1);
    len = x.dim(0);
    group_stride = 1;
    stride = x.dim(1);
  }

  Tensor out(x.shape());
  softmax_slices(x.values().data(), out.mutable_values().data(), groups, len,
                 group_stride, stride);
  maybe_record(out, x.requires_grad(),
               [xn = x.node(), on = out.node(), groups, len, group_stride,
                stride] {
                 if (grad_missing(*on)) return;
                 auto& dx = ensure_grad(*xn);
                 for (std::size_t gidx = 0; gidx < groups; ++gidx) {
                   const double* s = on->value.data() + gidx * group_stride;
                   const double* g = on->grad.data() + gidx * group_stride;
                   double* d = dx.data() + gidx * group_stride;
                   double dot = 0.0;
                   for (std::size_t i = 0; i < len; ++i) {
                     dot += g[i * stride] * s[i * stride];
                   }
                   for (std::size_t i = 0; i < len; ++i) {
                     d[i * stride] += s[i * stride] * (g[i * stride] - dot);
                   }
                 }
               });
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  if (x.rank() < 1) throw ShapeError("layer_norm: expects rank >= 1");
  const std::size_t d = x.dim(x.rank() - 1);
  if (gamma.size() != d || beta.size() != d) {
    throw ShapeError("layer_norm: gamma/beta length must equal last extent");
  }
  const std::size_t rows = x.size() / d;

  Tensor out(x.shape());
  std::vector<double> mu(rows), inv_sigma(rows);
  {
    const double* xv = x.values().data();
    double* ov = out.mutable_values().data();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* row = xv + r * d;
      double m = 0.0;
      for (std::size_t j = 0; j < d; ++j) m += row[j];
      m /= static_cast<double>(d);
      double var = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double c = row[j] - m;
        var += c * c;
      }
      var /= static_cast<double>(d);  // biased, 1/D
      const double inv = 1.0 / std::sqrt(var + eps);
      mu[r] = m;
      inv_sigma[r] = inv;
      for (std::size_t j = 0; j < d; ++j) {
        ov[r * d + j] = gamma.at(j) * ((row[j] - m) * inv) + beta.at(j);
      }
    }
  }
  maybe_record(
      out,
      x.requires_grad() || gamma.requires_grad() || beta.requires_grad(),
      [xn = x.node(), gn = gamma.node(), bn = beta.node(), on = out.node(),
       mu = std::move(mu), inv_sigma = std::move(inv_sigma), rows, d] {
        if (grad_missing(*on)) return;
        const auto& g = on->grad;
        const double dd = static_cast<double>(d);
        std::vector<double> xhat(d), dxhat(d);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* xrow = xn->value.data() + r * d;
          const double* grow = g.data() + r * d;
          const double inv = inv_sigma[r];
          for (std::size_t j = 0; j < d; ++j) {
            xhat[j] = (xrow[j] - mu[r]) * inv;
            dxhat[j] = grow[j] * gn->value[j];
          }
          if (gn->requires_grad) {
            auto& dg = ensure_grad(*gn);
            for (std::size_t j = 0; j < d; ++j) dg[j] += grow[j] * xhat[j];
          }
          if (bn->requires_grad) {
            auto& db = ensure_grad(*bn);
            for (std::size_t j = 0; j < d; ++j) db[j] += grow[j];
          }
          if (xn->requires_grad) {
            auto& dx = ensure_grad(*xn);
            double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              sum_dxhat += dxhat[j];
              sum_dxhat_xhat += dxhat[j] * xhat[j];
            }
            for (std::size_t j = 0; j < d; ++j) {
              dx[r * d + j] += inv * (dxhat[j] - sum_dxhat / dd -
                                      xhat[j] * sum_dxhat_xhat / dd);
            }
          }
        }
      });
  return out;
}

// ---- shape ops --------------------------------------------------------------

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  if (axis > 1) throw ShapeError("concat: axis must be 0 or 1");
  const std::size_t other = 1 - axis;
  for (const Tensor& p : parts) {
    if (p.rank() != 2) throw ShapeError("concat: expects rank-2 tensors");
    if (p.dim(other) != parts[0].dim(other)) {
      throw ShapeError("concat: extent mismatch along non-concat axis");
    }
  }
  std::size_t total = 0;
  bool any_grad = false;
  for (const Tensor& p : parts) {
    total += p.dim(axis);
    any_grad = any_grad || p.requires_grad();
  }

  Shape out_shape = parts[0].shape();
  out_shape[axis] = total;
  Tensor out(out_shape);
  const std::size_t out_cols = out.dim(1);

  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    const std::size_t pr = p.dim(0), pc = p.dim(1);
    for (std::size_t i = 0; i < pr; ++i) {
      for (std::size_t j = 0; j < pc; ++j) {
        const std::size_t oi = axis == 0 ? offset + i : i;
        const std::size_t oj = axis == 0 ? j : offset + j;
        out.mutable_values()[oi * out_cols + oj] = p.at(i * pc + j);
      }
    }
    offset += p.dim(axis);
  }

  if (any_grad) {
    std::vector<NodePtr> nodes;
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (const Tensor& p : parts) {
      nodes.push_back(p.node());
      offsets.push_back(off);
      off += p.dim(axis);
    }
    maybe_record(out, true,
                 [nodes = std::move(nodes), offsets = std::move(offsets),
                  on = out.node(), axis, out_cols] {
                   if (grad_missing(*on)) return;
                   for (std::size_t pi = 0; pi < nodes.size(); ++pi) {
                     Node& p = *nodes[pi];
                     if (!p.requires_grad) continue;
                     auto& dp = ensure_grad(p);
                     const std::size_t pr = p.shape[0], pc = p.shape[1];
                     const std::size_t offset = offsets[pi];
                     for (std::size_t i = 0; i < pr; ++i) {
                       for (std::size_t j = 0; j < pc; ++j) {
                         const std::size_t oi = axis == 0 ? offset + i : i;
                         const std::size_t oj = axis == 0 ? j : offset + j;
                         dp[i * pc + j] += on->grad[oi * out_cols + oj];
                       }
                     }
                   }
                 });
  }
  return out;
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin,
             std::size_t end) {
  if (x.rank() != 2) throw ShapeError("slice: expects rank-2 tensor");
  if (axis > 1) throw ShapeError("slice: axis must be 0 or 1");
  if (begin >= end || end > x.dim(axis)) {
    throw ShapeError("slice: invalid range [" + std::to_string(begin) + "," +
                     std::to_string(end) + ") on extent " +
                     std::to_string(x.dim(axis)));
  }
  Shape out_shape = x.shape();
  out_shape[axis] = end - begin;
  Tensor out(out_shape);
  const std::size_t rows = out.dim(0), cols = out.dim(1), xc = x.dim(1);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const std::size_t xi = axis == 0 ? begin + i : i;
      const std::size_t xj = axis == 0 ? j : begin + j;
      out.mutable_values()[i * cols + j] = x.at(xi * xc + xj);
    }
  }
  maybe_record(out, x.requires_grad(),
               [xn = x.node(), on = out.node(), axis, begin, rows, cols, xc] {
                 if (grad_missing(*on)) return;
                 auto& dx = ensure_grad(*xn);
                 for (std::size_t i = 0; i < rows; ++i) {
                   for (std::size_t j = 0; j < cols; ++j) {
                     const std::size_t xi = axis == 0 ? begin + i : i;
                     const std::size_t xj = axis == 0 ? j : begin + j;
                     dx[xi * xc + xj] += on->grad[i * cols + j];
                   }
                 }
               });
  return out;
}

Tensor transpose(const Tensor& x) {
  if (x.rank() != 2) throw ShapeError("transpose: expects rank-2 tensor");
  const std::size_t r = x.dim(0), c = x.dim(1);
  Tensor out(Shape{c, r});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      out.mutable_values()[j * r + i] = x.at(i * c + j);
    }
  }
  maybe_record(out, x.requires_grad(),
               [xn = x.node(), on = out.node(), r, c] {
                 if (grad_missing(*on)) return;
                 auto& dx = ensure_grad(*xn);
                 for (std::size_t i = 0; i < r; ++i) {
                   for (std::size_t j = 0; j < c; ++j) {
                     dx[i * c + j] += on->grad[j * r + i];
                   }
                 }
               });
  return out;
}

Tensor reshape(const Tensor& x, Shape new_shape) {
  if (shape_product(new_shape) != x.size()) {
    throw ShapeError("reshape: element count mismatch");
  }
  Tensor out(std::move(new_shape), x.values());
  maybe_record(out, x.requires_grad(),
               [xn = x.node(), on = out.node()] {
                 if (grad_missing(*on)) return;
                 auto& dx = ensure_grad(*xn);
                 for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += on->grad[i];
               });
  return out;
}

Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw ShapeError("mean: empty tensor");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x.at(i);
  const double inv_n = 1.0 / static_cast<double>(x.size());
  Tensor out(Shape{1}, {acc * inv_n});
  maybe_record(out, x.requires_grad(),
               [xn = x.node(), on = out.node(), inv_n] {
                 if (grad_missing(*on)) return;
                 auto& dx = ensure_grad(*xn);
                 const double g = on->grad[0] * inv_n;
                 for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g;
               });
  return out;
}

Tensor sum(const Tensor& x) {
  if (x.size() == 0) throw ShapeError("sum: empty tensor");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x.at(i);
  Tensor out(Shape{1}, {acc});
  maybe_record(out, x.requires_grad(),
               [xn = x.node(), on = out.node()] {
                 if (grad_missing(*on)) return;
                 auto& dx = ensure_grad(*xn);
                 const double g = on->grad[0];
                 for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g;
               });
  return out;
}

// ---- conv2d ----------------------------------------------------------------

namespace {

struct ConvGeometry {
  std::size_t in_h, in_w, in_c;
  std::size_t out_h, out_w, out_c;
  std::size_t kh, kw;
  std::size_t stride;
  std::ptrdiff_t pad_top, pad_left;
};

ConvGeometry conv_geometry(const Tensor& x, const Tensor& w,
                           std::size_t stride) {
  if (x.rank() != 3) throw ShapeError("conv2d: input must be [H,W,C]");
  if (w.rank() != 4) throw ShapeError("conv2d: weights must be [Cout,kh,kw,Cin]");
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  ConvGeometry geo;
  geo.in_h = x.dim(0);
  geo.in_w = x.dim(1);
  geo.in_c = x.dim(2);
  geo.out_c = w.dim(0);
  geo.kh = w.dim(1);
  geo.kw = w.dim(2);
  if (w.dim(3) != geo.in_c) {
    throw ShapeError("conv2d: weight input channels " + std::to_string(w.dim(3)) +
                     " do not match input channels " + std::to_string(geo.in_c));
  }
  geo.stride = stride;
  geo.out_h = (geo.in_h + stride - 1) / stride;
  geo.out_w = (geo.in_w + stride - 1) / stride;
  const auto pad_needed = [&](std::size_t out, std::size_t k, std::size_t in) {
    const std::ptrdiff_t p = static_cast<std::ptrdiff_t>((out - 1) * stride + k) -
                             static_cast<std::ptrdiff_t>(in);
    return std::max<std::ptrdiff_t>(p, 0);
  };
  geo.pad_top = pad_needed(geo.out_h, geo.kh, geo.in_h) / 2;
  geo.pad_left = pad_needed(geo.out_w, geo.kw, geo.in_w) / 2;
  return geo;
}

Tensor conv2d_impl(const Tensor& x, const Tensor& w, const Tensor* bias,
                   std::size_t stride) {
  const ConvGeometry geo = conv_geometry(x, w, stride);
  if (bias && bias->size() != geo.out_c) {
    throw ShapeError("conv2d: bias length must equal output channels");
  }

  Tensor out(Shape{geo.out_h, geo.out_w, geo.out_c});
  {
    const double* xv = x.values().data();
    const double* wv = w.values().data();
    double* ov = out.mutable_values().data();
    const std::size_t kernel_area = geo.kh * geo.kw * geo.in_c;
    for (std::size_t oy = 0; oy < geo.out_h; ++oy) {
      for (std::size_t ox = 0; ox < geo.out_w; ++ox) {
        double* opix = ov + (oy * geo.out_w + ox) * geo.out_c;
        if (bias) {
          for (std::size_t co = 0; co < geo.out_c; ++co) opix[co] = bias->at(co);
        }
        const std::ptrdiff_t iy0 =
            static_cast<std::ptrdiff_t>(oy * geo.stride) - geo.pad_top;
        const std::ptrdiff_t ix0 =
            static_cast<std::ptrdiff_t>(ox * geo.stride) - geo.pad_left;
        for (std::size_t ky = 0; ky < geo.kh; ++ky) {
          const std::ptrdiff_t iy = iy0 + static_cast<std::ptrdiff_t>(ky);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(geo.in_h)) continue;
          for (std::size_t kx = 0; kx < geo.kw; ++kx) {
            const std::ptrdiff_t ix = ix0 + static_cast<std::ptrdiff_t>(kx);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(geo.in_w)) continue;
            const double* ipix = xv + (iy * geo.in_w + ix) * geo.in_c;
            const double* wk = wv + (ky * geo.kw + kx) * geo.in_c;
            for (std::size_t co = 0; co < geo.out_c; ++co) {
              const double* wrow = wk + co * kernel_area;
              double acc = 0.0;
              for (std::size_t ci = 0; ci < geo.in_c; ++ci) {
                acc += wrow[ci] * ipix[ci];
              }
              opix[co] += acc;
            }
          }
        }
      }
    }
  }

  const bool needs = x.requires_grad() || w.requires_grad() ||
                     (bias && bias->requires_grad());
  NodePtr bias_node = bias ? bias->node() : nullptr;
  maybe_record(out, needs,
               [xn = x.node(), wn = w.node(), bn = std::move(bias_node),
                on = out.node(), geo] {
                 if (grad_missing(*on)) return;
                 const double* g = on->grad.data();
                 const std::size_t kernel_area = geo.kh * geo.kw * geo.in_c;
                 double* dx = xn->requires_grad ? ensure_grad(*xn).data() : nullptr;
                 double* dw = wn->requires_grad ? ensure_grad(*wn).data() : nullptr;
                 double* db = bn && bn->requires_grad ? ensure_grad(*bn).data() : nullptr;
                 const double* xv = xn->value.data();
                 const double* wv = wn->value.data();
                 for (std::size_t oy = 0; oy < geo.out_h; ++oy) {
                   for (std::size_t ox = 0; ox < geo.out_w; ++ox) {
                     const double* gpix = g + (oy * geo.out_w + ox) * geo.out_c;
                     if (db) {
                       for (std::size_t co = 0; co < geo.out_c; ++co) {
                         db[co] += gpix[co];
                       }
                     }
                     const std::ptrdiff_t iy0 =
                         static_cast<std::ptrdiff_t>(oy * geo.stride) - geo.pad_top;
                     const std::ptrdiff_t ix0 =
                         static_cast<std::ptrdiff_t>(ox * geo.stride) - geo.pad_left;
                     for (std::size_t ky = 0; ky < geo.kh; ++ky) {
                       const std::ptrdiff_t iy = iy0 + static_cast<std::ptrdiff_t>(ky);
                       if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(geo.in_h)) continue;
                       for (std::size_t kx = 0; kx < geo.kw; ++kx) {
                         const std::ptrdiff_t ix = ix0 + static_cast<std::ptrdiff_t>(kx);
                         if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(geo.in_w)) continue;
                         const std::size_t ioff = (iy * geo.in_w + ix) * geo.in_c;
                         const std::size_t woff = (ky * geo.kw + kx) * geo.in_c;
                         for (std::size_t co = 0; co < geo.out_c; ++co) {
                           const double gv = gpix[co];
                           if (gv == 0.0) continue;
                           const double* wrow = wv + co * kernel_area + woff;
                           if (dx) {
                             double* dxp = dx + ioff;
                             for (std::size_t ci = 0; ci < geo.in_c; ++ci) {
                               dxp[ci] += gv * wrow[ci];
                             }
                           }
                           if (dw) {
                             double* dwp = dw + co * kernel_area + woff;
                             const double* xp = xv + ioff;
                             for (std::size_t ci = 0; ci < geo.in_c; ++ci) {
                               dwp[ci] += gv * xp[ci];
                             }
                           }
                         }
                       }
                     }
                   }
                 }
               });
  return out;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b,
              std::size_t stride) {
  return conv2d_impl(x, w, &b, stride);
}

Tensor conv2d(const Tensor& x, const Tensor& w, std::size_t stride) {
  return conv2d_impl(x, w, nullptr, stride);
}

}  // namespace ctt
