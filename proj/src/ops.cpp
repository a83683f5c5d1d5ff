#include "biasly/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "biasly/error.hpp"

namespace biasly {
namespace {

using detail::TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

// C[m,n] += A[m,k] B[k,n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m,n] += A[m,k] B[n,k]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] += acc;
    }
  }
}

// C[k,n] += A[m,k]^T B[m,n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

struct MatmulDims {
  std::size_t groups, m, k, n;
};

MatmulDims matmul_dims(const Tensor& a, const Tensor& b, bool transpose_b, const char* op) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != sb.size() || (sa.size() != 2 && sa.size() != 3)) {
    throw ShapeError(std::string(op) + ": operands must both be 2-D or both 3-D, got " +
                     shape_string(sa) + " and " + shape_string(sb));
  }
  const std::size_t off = sa.size() - 2;
  MatmulDims d{1, sa[off], sa[off + 1], transpose_b ? sb[off] : sb[off + 1]};
  const std::size_t b_inner = transpose_b ? sb[off + 1] : sb[off];
  if (off == 1) {
    if (sa[0] != sb[0]) {
      throw ShapeError(std::string(op) + ": batch sizes differ " + shape_string(sa) + " vs " +
                       shape_string(sb));
    }
    d.groups = sa[0];
  }
  if (b_inner != d.k) {
    throw ShapeError(std::string(op) + ": inner dimensions differ " + shape_string(sa) +
                     " vs " + shape_string(sb));
  }
  return d;
}

Shape matmul_shape(const Tensor& a, const MatmulDims& d) {
  if (a.rank() == 3) return {d.groups, d.m, d.n};
  return {d.m, d.n};
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shapes differ " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const MatmulDims d = matmul_dims(a, b, false, "matmul");
  std::vector<double> out(d.groups * d.m * d.n, 0.0);
  const double* ap = a.data().data();
  const double* bp = b.data().data();
  for (std::size_t g = 0; g < d.groups; ++g) {
    gemm_nn(ap + g * d.m * d.k, bp + g * d.k * d.n, out.data() + g * d.m * d.n, d.m, d.k, d.n);
  }
  NodePtr an = a.node(), bn = b.node();
  return make_result(
      matmul_shape(a, d), std::move(out), {a, b},
      [an, bn, d](TensorNode& self) {
        const double* dc = self.grad.data();
        for (std::size_t g = 0; g < d.groups; ++g) {
          const double* dcg = dc + g * d.m * d.n;
          if (an->requires_grad) {
            gemm_nt(dcg, bn->data.data() + g * d.k * d.n,
                    an->grad_buffer().data() + g * d.m * d.k, d.m, d.n, d.k);
          }
          if (bn->requires_grad) {
            gemm_tn(an->data.data() + g * d.m * d.k, dcg,
                    bn->grad_buffer().data() + g * d.k * d.n, d.m, d.k, d.n);
          }
        }
      },
      "matmul");
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  const MatmulDims d = matmul_dims(a, b, true, "matmul_nt");
  std::vector<double> out(d.groups * d.m * d.n, 0.0);
  const double* ap = a.data().data();
  const double* bp = b.data().data();
  for (std::size_t g = 0; g < d.groups; ++g) {
    gemm_nt(ap + g * d.m * d.k, bp + g * d.n * d.k, out.data() + g * d.m * d.n, d.m, d.k, d.n);
  }
  NodePtr an = a.node(), bn = b.node();
  return make_result(
      matmul_shape(a, d), std::move(out), {a, b},
      [an, bn, d](TensorNode& self) {
        const double* dc = self.grad.data();
        for (std::size_t g = 0; g < d.groups; ++g) {
          const double* dcg = dc + g * d.m * d.n;
          if (an->requires_grad) {
            gemm_nn(dcg, bn->data.data() + g * d.n * d.k,
                    an->grad_buffer().data() + g * d.m * d.k, d.m, d.n, d.k);
          }
          if (bn->requires_grad) {
            gemm_tn(dcg, an->data.data() + g * d.m * d.k,
                    bn->grad_buffer().data() + g * d.n * d.k, d.m, d.n, d.k);
          }
        }
      },
      "matmul_nt");
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.data().begin(), a.data().end());
  auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
  NodePtr an = a.node(), bn = b.node();
  return make_result(
      a.shape(), std::move(out), {a, b},
      [an, bn](TensorNode& self) {
        for (const NodePtr& in : {an, bn}) {
          if (!in->requires_grad) continue;
          auto g = in->grad_buffer();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
      },
      "add");
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0)); }

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
  NodePtr an = a.node(), bn = b.node();
  return make_result(
      a.shape(), std::move(out), {a, b},
      [an, bn](TensorNode& self) {
        // Read both operands before writing: a and b may be the same node.
        const std::vector<double> av = an->data;
        const std::vector<double> bv = bn->data;
        if (an->requires_grad) {
          auto g = an->grad_buffer();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bv[i];
        }
        if (bn->requires_grad) {
          auto g = bn->grad_buffer();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * av[i];
        }
      },
      "mul");
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (double& v : out) v *= factor;
  NodePtr xn = x.node();
  return make_result(
      x.shape(), std::move(out), {x},
      [xn, factor](TensorNode& self) {
        auto g = xn->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
      },
      "scale");
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (bias.rank() != 1 || x.rank() == 0 || x.shape().back() != bias.size()) {
    throw ShapeError("add_bias: bias " + shape_string(bias.shape()) + " does not fit " +
                     shape_string(x.shape()));
  }
  const std::size_t n = bias.size();
  std::vector<double> out(x.data().begin(), x.data().end());
  auto bd = bias.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i % n];
  NodePtr xn = x.node(), bn = bias.node();
  return make_result(
      x.shape(), std::move(out), {x, bias},
      [xn, bn, n](TensorNode& self) {
        if (xn->requires_grad) {
          auto g = xn->grad_buffer();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (bn->requires_grad) {
          auto g = bn->grad_buffer();
          for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % n] += self.grad[i];
        }
      },
      "add_bias");
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  NodePtr xn = x.node();
  return make_result(
      {}, {total}, {x},
      [xn](TensorNode& self) {
        auto g = xn->grad_buffer();
        for (double& v : g) v += self.grad[0];
      },
      "sum");
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

Tensor softmax_rows(const Tensor& x, double beta, const KeyMask& mask) {
  if (!(beta > 0.0) || !std::isfinite(beta)) {
    throw InvalidArgument("softmax_rows: beta must be positive and finite");
  }
  if (x.rank() == 0) throw ShapeError("softmax_rows: needs at least one axis");
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.size() / n;
  // Rows are grouped by the leading axis for masking purposes.
  const std::size_t groups = x.rank() >= 3 ? x.shape()[0] : 1;
  const std::size_t rows_per_group = rows / groups;
  if (!mask.empty() && mask.size() != groups * n) {
    throw ShapeError("softmax_rows: mask has " + std::to_string(mask.size()) +
                     " entries, expected " + std::to_string(groups * n));
  }
  auto xd = x.data();
  std::vector<double> out(x.size(), 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::uint8_t* keep = mask.empty() ? nullptr : mask.data() + (r / rows_per_group) * n;
    const double* in = xd.data() + r * n;
    double* o = out.data() + r * n;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (!keep || keep[j]) mx = std::max(mx, beta * in[j]);
    }
    if (!std::isfinite(mx)) throw InvalidArgument("softmax_rows: every key of a row is masked");
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (!keep || keep[j]) {
        o[j] = std::exp(beta * in[j] - mx);
        z += o[j];
      }
    }
    for (std::size_t j = 0; j < n; ++j) o[j] /= z;
  }
  NodePtr xn = x.node();
  return make_result(
      x.shape(), std::move(out), {x},
      [xn, n, rows, beta](TensorNode& self) {
        auto g = xn->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
          const double* y = self.data.data() + r * n;
          const double* dy = self.grad.data() + r * n;
          double dot = 0.0;
          for (std::size_t j = 0; j < n; ++j) dot += y[j] * dy[j];
          for (std::size_t j = 0; j < n; ++j) g[r * n + j] += beta * y[j] * (dy[j] - dot);
        }
      },
      "softmax_rows");
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (x.rank() == 0) throw ShapeError("layer_norm: needs at least one axis");
  const std::size_t d = x.shape().back();
  if (gain.shape() != Shape{d} || bias.shape() != Shape{d}) {
    throw ShapeError("layer_norm: gain/bias must have shape [" + std::to_string(d) + "]");
  }
  if (!(eps > 0.0)) throw InvalidArgument("layer_norm: eps must be positive");
  const std::size_t rows = x.size() / d;
  auto xd = x.data();
  auto gd = gain.data();
  auto bd = bias.data();
  std::vector<double> out(x.size());
  std::vector<double> xhat(x.size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xd.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += in[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = (in[j] - mu) * inv_std[r];
      out[r * d + j] = gd[j] * xhat[r * d + j] + bd[j];
    }
  }
  NodePtr xn = x.node(), gn = gain.node(), bn = bias.node();
  return make_result(
      x.shape(), std::move(out), {x, gain, bias},
      [xn, gn, bn, d, rows, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](TensorNode& self) {
        const double* dy = self.grad.data();
        if (gn->requires_grad) {
          auto g = gn->grad_buffer();
          for (std::size_t i = 0; i < rows * d; ++i) g[i % d] += dy[i] * xhat[i];
        }
        if (bn->requires_grad) {
          auto g = bn->grad_buffer();
          for (std::size_t i = 0; i < rows * d; ++i) g[i % d] += dy[i];
        }
        if (xn->requires_grad) {
          auto g = xn->grad_buffer();
          const double* gv = gn->data.data();
          std::vector<double> dxhat(d);
          for (std::size_t r = 0; r < rows; ++r) {
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              dxhat[j] = dy[r * d + j] * gv[j];
              m1 += dxhat[j];
              m2 += dxhat[j] * xhat[r * d + j];
            }
            m1 /= static_cast<double>(d);
            m2 /= static_cast<double>(d);
            for (std::size_t j = 0; j < d; ++j) {
              g[r * d + j] += inv_std[r] * (dxhat[j] - m1 - xhat[r * d + j] * m2);
            }
          }
        }
      },
      "layer_norm");
}

Tensor gelu(const Tensor& x) {
  static_assert(kGeluExactCdf, "only the exact-CDF GELU is implemented");
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  std::vector<double> out(x.size());
  auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = 0.5 * xd[i] * (1.0 + std::erf(xd[i] * kInvSqrt2));
  }
  NodePtr xn = x.node();
  return make_result(
      x.shape(), std::move(out), {x},
      [xn](TensorNode& self) {
        auto g = xn->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double v = xn->data[i];
          const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
          const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
          g[i] += self.grad[i] * (cdf + v * pdf);
        }
      },
      "gelu");
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> rows) {
  if (table.rank() != 2) throw ShapeError("gather_rows: table must be 2-D");
  if (rows.empty()) throw ShapeError("gather_rows: no rows requested");
  const std::size_t n_rows = table.dim(0);
  const std::size_t d = table.dim(1);
  std::vector<double> out(rows.size() * d);
  auto td = table.data();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= n_rows) {
      throw InvalidArgument("gather_rows: row " + std::to_string(rows[i]) + " out of range " +
                            std::to_string(n_rows));
    }
    std::copy_n(td.data() + rows[i] * d, d, out.data() + i * d);
  }
  NodePtr tn = table.node();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return make_result(
      {rows.size(), d}, std::move(out), {table},
      [tn, d, idx = std::move(idx)](TensorNode& self) {
        auto g = tn->grad_buffer();
        for (std::size_t i = 0; i < idx.size(); ++i) {
          for (std::size_t j = 0; j < d; ++j) g[idx[i] * d + j] += self.grad[i * d + j];
        }
      },
      "gather_rows");
}

namespace {

// Index of x[(b*seq + t), h*dh + e] inside the split layout [(b*heads + h), t, e].
struct HeadLayout {
  std::size_t batch, seq, heads, d_head;
  std::size_t merged(std::size_t b, std::size_t t, std::size_t h, std::size_t e) const {
    return (b * seq + t) * heads * d_head + h * d_head + e;
  }
  std::size_t split(std::size_t b, std::size_t t, std::size_t h, std::size_t e) const {
    return ((b * heads + h) * seq + t) * d_head + e;
  }
  template <typename F>
  void for_each(F&& f) const {
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t t = 0; t < seq; ++t)
        for (std::size_t h = 0; h < heads; ++h)
          for (std::size_t e = 0; e < d_head; ++e) f(merged(b, t, h, e), split(b, t, h, e));
  }
};

}  // namespace

Tensor split_heads(const Tensor& x, std::size_t batch, std::size_t seq, std::size_t heads) {
  if (x.rank() != 2 || x.dim(0) != batch * seq || heads == 0 || x.dim(1) % heads != 0) {
    throw ShapeError("split_heads: cannot split " + shape_string(x.shape()));
  }
  const HeadLayout lay{batch, seq, heads, x.dim(1) / heads};
  std::vector<double> out(x.size());
  auto xd = x.data();
  lay.for_each([&](std::size_t m, std::size_t s) { out[s] = xd[m]; });
  NodePtr xn = x.node();
  return make_result(
      {batch * heads, seq, lay.d_head}, std::move(out), {x},
      [xn, lay](TensorNode& self) {
        auto g = xn->grad_buffer();
        lay.for_each([&](std::size_t m, std::size_t s) { g[m] += self.grad[s]; });
      },
      "split_heads");
}

Tensor merge_heads(const Tensor& x, std::size_t batch, std::size_t seq, std::size_t heads) {
  if (x.rank() != 3 || x.dim(0) != batch * heads || x.dim(1) != seq) {
    throw ShapeError("merge_heads: cannot merge " + shape_string(x.shape()));
  }
  const HeadLayout lay{batch, seq, heads, x.dim(2)};
  std::vector<double> out(x.size());
  auto xd = x.data();
  lay.for_each([&](std::size_t m, std::size_t s) { out[m] = xd[s]; });
  NodePtr xn = x.node();
  return make_result(
      {batch * seq, heads * lay.d_head}, std::move(out), {x},
      [xn, lay](TensorNode& self) {
        auto g = xn->grad_buffer();
        lay.for_each([&](std::size_t m, std::size_t s) { g[s] += self.grad[m]; });
      },
      "merge_heads");
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    throw ShapeError("reshape: " + shape_string(x.shape()) + " -> " + shape_string(shape));
  }
  NodePtr xn = x.node();
  return make_result(
      std::move(shape), std::vector<double>(x.data().begin(), x.data().end()), {x},
      [xn](TensorNode& self) {
        auto g = xn->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      },
      "reshape");
}

Tensor repeat_rows(const Tensor& x, std::size_t times) {
  if (x.rank() != 2 || times == 0) throw ShapeError("repeat_rows: needs a matrix and times >= 1");
  const std::size_t n = x.size();
  std::vector<double> out;
  out.reserve(n * times);
  for (std::size_t t = 0; t < times; ++t) out.insert(out.end(), x.data().begin(), x.data().end());
  NodePtr xn = x.node();
  return make_result(
      {x.dim(0) * times, x.dim(1)}, std::move(out), {x},
      [xn, n, times](TensorNode& self) {
        auto g = xn->grad_buffer();
        for (std::size_t t = 0; t < times; ++t)
          for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[t * n + i];
      },
      "repeat_rows");
}

Tensor soft_cross_entropy(const Tensor& probs, const Tensor& targets, double eps) {
  require_same_shape(probs, targets, "soft_cross_entropy");
  if (probs.rank() != 2) throw ShapeError("soft_cross_entropy: expects [batch, classes]");
  if (!(eps > 0.0)) throw InvalidArgument("soft_cross_entropy: eps must be positive");
  const std::size_t batch = probs.dim(0);
  auto pd = probs.data();
  auto td = targets.data();
  double total = 0.0;
  for (std::size_t i = 0; i < pd.size(); ++i) {
    if (pd[i] < 0.0) throw InvalidArgument("soft_cross_entropy: negative probability");
    total -= td[i] * std::log(eps + pd[i]);
  }
  total /= static_cast<double>(batch);
  NodePtr pn = probs.node();
  std::vector<double> t(td.begin(), td.end());
  return make_result(
      {}, {total}, {probs},
      [pn, t = std::move(t), batch, eps](TensorNode& self) {
        auto g = pn->grad_buffer();
        const double upstream = self.grad[0] / static_cast<double>(batch);
        for (std::size_t i = 0; i < g.size(); ++i) {
          g[i] -= upstream * t[i] / (eps + pn->data[i]);
        }
      },
      "soft_cross_entropy");
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("max_abs_diff: length mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace biasly
