#include "mambamil/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mambamil/errors.hpp"

namespace mambamil {

using detail::make_result;
using detail::Node;
using detail::wants_grad;

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double softplus(double t) {
  if (t > 30.0) return t;
  // exp underflows below about -745; softplus itself never reaches zero.
  return std::max(std::log1p(std::exp(t)), std::numeric_limits<double>::denorm_min());
}

double silu(double t) { return t * sigmoid(t); }

double inverse_softplus(double t) {
  if (!(t > 0.0)) throw ContractError("inverse_softplus requires a positive argument");
  if (t > 30.0) return t;
  return std::log(std::expm1(t));
}

namespace {

// Splits a shape around `axis` into (outer, extent, inner).
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

std::size_t normalize_axis(int axis, std::size_t rank) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) throw DimensionError("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  return static_cast<std::size_t>(a);
}

AxisSplit split_axis(const Shape& s, std::size_t axis) {
  AxisSplit out;
  for (std::size_t i = 0; i < axis; ++i) out.outer *= s[i];
  out.extent = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) out.inner *= s[i];
  return out;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                         " differ");
  }
}

}  // namespace

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() < 1 || w.rank() != 2 || x.dim(-1) != w.dim(0)) {
    throw DimensionError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                         shape_str(w.shape()));
  }
  const std::size_t in = w.dim(0), out = w.dim(1);
  if (b.defined() && (b.rank() != 1 || b.dim(0) != out)) {
    throw DimensionError("linear: bias " + shape_str(b.shape()) + " incompatible with weight " + shape_str(w.shape()));
  }
  const std::size_t rows = x.numel() / in;
  auto xd = x.data();
  auto wd = w.data();
  std::vector<double> y(rows * out, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double* yr = y.data() + r * out;
    if (b.defined()) std::copy(b.data().begin(), b.data().end(), yr);
    for (std::size_t i = 0; i < in; ++i) {
      const double xv = xd[r * in + i];
      const double* wr = wd.data() + i * out;
      for (std::size_t o = 0; o < out; ++o) yr[o] += xv * wr[o];
    }
  }
  Shape shape = x.shape();
  shape.back() = out;
  return make_result(std::move(shape), std::move(y), {x, w, b}, [rows, in, out](Node& self) {
    const auto& gy = self.grad;
    auto& xn = self.inputs[0];
    auto& wn = self.inputs[1];
    auto& bn = self.inputs[2];
    if (wants_grad(xn)) {
      auto& gx = xn->ensure_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t i = 0; i < in; ++i) {
          double acc = 0.0;
          const double* wr = wn->data.data() + i * out;
          const double* gr = gy.data() + r * out;
          for (std::size_t o = 0; o < out; ++o) acc += gr[o] * wr[o];
          gx[r * in + i] += acc;
        }
      }
    }
    if (wants_grad(wn)) {
      auto& gw = wn->ensure_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* gr = gy.data() + r * out;
        for (std::size_t i = 0; i < in; ++i) {
          const double xv = xn->data[r * in + i];
          double* gwr = gw.data() + i * out;
          for (std::size_t o = 0; o < out; ++o) gwr[o] += xv * gr[o];
        }
      }
    }
    if (wants_grad(bn)) {
      auto& gb = bn->ensure_grad();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t o = 0; o < out; ++o) gb[o] += gy[r * out + o];
    }
  });
}

Tensor elementwise(const Tensor& x, Unary f) {
  auto xd = x.data();
  std::vector<double> y(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) {
    const double t = xd[i];
    switch (f) {
      case Unary::kSilu: y[i] = silu(t); break;
      case Unary::kSigmoid: y[i] = sigmoid(t); break;
      case Unary::kSoftplus: y[i] = softplus(t); break;
      case Unary::kTanh: y[i] = std::tanh(t); break;
      case Unary::kExp: y[i] = std::exp(t); break;
      case Unary::kLog: y[i] = std::log(t); break;
    }
  }
  return make_result(x.shape(), std::move(y), {x}, [f](Node& self) {
    auto& xn = self.inputs[0];
    auto& gx = xn->ensure_grad();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const double t = xn->data[i];
      const double yv = self.data[i];
      double d = 0.0;
      switch (f) {
        case Unary::kSilu: {
          const double s = sigmoid(t);
          d = s * (1.0 + t * (1.0 - s));
          break;
        }
        case Unary::kSigmoid: d = yv * (1.0 - yv); break;
        case Unary::kSoftplus: d = sigmoid(t); break;
        case Unary::kTanh: d = 1.0 - yv * yv; break;
        case Unary::kExp: d = yv; break;
        case Unary::kLog: d = 1.0 / t; break;
      }
      gx[i] += self.grad[i] * d;
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  auto ad = a.data();
  auto bd = b.data();
  std::vector<double> y(ad.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = ad[i] + bd[i];
  return make_result(a.shape(), std::move(y), {a, b}, [](Node& self) {
    for (int k = 0; k < 2; ++k) {
      auto& n = self.inputs[k];
      if (!wants_grad(n)) continue;
      auto& g = n->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  auto ad = a.data();
  auto bd = b.data();
  std::vector<double> y(ad.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = ad[i] * bd[i];
  return make_result(a.shape(), std::move(y), {a, b}, [](Node& self) {
    auto& an = self.inputs[0];
    auto& bn = self.inputs[1];
    if (wants_grad(an)) {
      auto& g = an->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bn->data[i];
    }
    if (wants_grad(bn)) {
      auto& g = bn->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * an->data[i];
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  auto xd = x.data();
  std::vector<double> y(xd.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xd[i] * factor;
  return make_result(x.shape(), std::move(y), {x}, [factor](Node& self) {
    auto& g = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

Tensor sum(const Tensor& x) {
  auto xd = x.data();
  const double s = std::accumulate(xd.begin(), xd.end(), 0.0);
  return make_result({}, {s}, {x}, [](Node& self) {
    auto& g = self.inputs[0]->ensure_grad();
    for (auto& v : g) v += self.grad[0];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  auto xd = x.data();
  return make_result(std::move(shape), std::vector<double>(xd.begin(), xd.end()), {x}, [](Node& self) {
    auto& g = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm) {
  const auto& in_shape = x.shape();
  const std::size_t r = in_shape.size();
  if (perm.size() != r) throw DimensionError("permute: permutation length does not match rank of " + shape_str(in_shape));
  std::vector<bool> seen(r, false);
  for (auto p : perm) {
    if (p >= r || seen[p]) throw ContractError("permute: invalid axis permutation");
    seen[p] = true;
  }
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = in_shape[perm[i]];
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t i = r; i-- > 1;) in_strides[i - 1] = in_strides[i] * in_shape[i];
  // Source offset of each destination element, in destination order.
  const std::size_t n = x.numel();
  std::vector<std::size_t> source(n);
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t flat = 0; flat < n; ++flat) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < r; ++i) off += idx[i] * in_strides[perm[i]];
    source[flat] = off;
    for (std::size_t i = r; i-- > 0;) {
      if (++idx[i] < out_shape[i]) break;
      idx[i] = 0;
    }
  }
  auto xd = x.data();
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = xd[source[i]];
  return make_result(std::move(out_shape), std::move(y), {x}, [source = std::move(source)](Node& self) {
    auto& g = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < source.size(); ++i) g[source[i]] += self.grad[i];
  });
}

Tensor transpose(const Tensor& x) {
  if (x.rank() != 2) throw DimensionError("transpose expects a rank-2 tensor, got " + shape_str(x.shape()));
  return permute(x, {1, 0});
}

Tensor gather(const Tensor& x, int axis, const std::vector<std::int64_t>& index) {
  const std::size_t a = normalize_axis(axis, x.rank());
  const auto split = split_axis(x.shape(), a);
  for (auto i : index) {
    if (i < -1 || i >= static_cast<std::int64_t>(split.extent)) {
      throw DimensionError("gather: index " + std::to_string(i) + " out of range for axis extent " +
                           std::to_string(split.extent));
    }
  }
  const std::size_t p = index.size();
  auto xd = x.data();
  std::vector<double> y(split.outer * p * split.inner, 0.0);
  for (std::size_t o = 0; o < split.outer; ++o) {
    for (std::size_t q = 0; q < p; ++q) {
      if (index[q] < 0) continue;
      const double* src = xd.data() + (o * split.extent + static_cast<std::size_t>(index[q])) * split.inner;
      std::copy(src, src + split.inner, y.data() + (o * p + q) * split.inner);
    }
  }
  Shape shape = x.shape();
  shape[a] = p;
  return make_result(std::move(shape), std::move(y), {x}, [split, index](Node& self) {
    auto& g = self.inputs[0]->ensure_grad();
    const std::size_t p = index.size();
    for (std::size_t o = 0; o < split.outer; ++o) {
      for (std::size_t q = 0; q < p; ++q) {
        if (index[q] < 0) continue;
        double* dst = g.data() + (o * split.extent + static_cast<std::size_t>(index[q])) * split.inner;
        const double* src = self.grad.data() + (o * p + q) * split.inner;
        for (std::size_t k = 0; k < split.inner; ++k) dst[k] += src[k];
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (!(eps > 0.0)) throw ContractError("layer_norm: eps must be positive");
  const std::size_t d = x.dim(-1);
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
    throw DimensionError("layer_norm: input " + shape_str(x.shape()) + " with gamma " + shape_str(gamma.shape()) +
                         " and beta " + shape_str(beta.shape()));
  }
  const std::size_t rows = x.numel() / d;
  auto xd = x.data();
  auto gd = gamma.data();
  auto bd = beta.data();
  std::vector<double> xhat(x.numel()), rstd(rows), y(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xd.data() + r * d;
    double mean = 0.0;
    for (std::size_t i = 0; i < d; ++i) mean += xr[i];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) var += (xr[i] - mean) * (xr[i] - mean);
    var /= static_cast<double>(d);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < d; ++i) {
      xhat[r * d + i] = (xr[i] - mean) * rstd[r];
      y[r * d + i] = xhat[r * d + i] * gd[i] + bd[i];
    }
  }
  return make_result(x.shape(), std::move(y), {x, gamma, beta},
                     [rows, d, xhat = std::move(xhat), rstd = std::move(rstd)](Node& self) {
                       auto& xn = self.inputs[0];
                       auto& gn = self.inputs[1];
                       auto& bn = self.inputs[2];
                       const auto& gy = self.grad;
                       if (wants_grad(gn)) {
                         auto& gg = gn->ensure_grad();
                         for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t i = 0; i < d; ++i) gg[i] += gy[r * d + i] * xhat[r * d + i];
                       }
                       if (wants_grad(bn)) {
                         auto& gb = bn->ensure_grad();
                         for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t i = 0; i < d; ++i) gb[i] += gy[r * d + i];
                       }
                       if (wants_grad(xn)) {
                         auto& gx = xn->ensure_grad();
                         const double inv_d = 1.0 / static_cast<double>(d);
                         for (std::size_t r = 0; r < rows; ++r) {
                           double mean_g = 0.0, mean_gx = 0.0;
                           for (std::size_t i = 0; i < d; ++i) {
                             const double gh = gy[r * d + i] * gn->data[i];
                             mean_g += gh;
                             mean_gx += gh * xhat[r * d + i];
                           }
                           mean_g *= inv_d;
                           mean_gx *= inv_d;
                           for (std::size_t i = 0; i < d; ++i) {
                             const double gh = gy[r * d + i] * gn->data[i];
                             gx[r * d + i] += rstd[r] * (gh - mean_g - xhat[r * d + i] * mean_gx);
                           }
                         }
                       }
                     });
}

namespace {

Tensor softmax_impl(const Tensor& x, int axis, bool log_space) {
  const std::size_t a = normalize_axis(axis, x.rank());
  const auto split = split_axis(x.shape(), a);
  auto xd = x.data();
  std::vector<double> y(xd.size());
  const std::size_t k = split.extent, inner = split.inner;
  for (std::size_t o = 0; o < split.outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * k * inner + in;
      double mx = xd[base];
      for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, xd[base + j * inner]);
      double z = 0.0;
      for (std::size_t j = 0; j < k; ++j) z += std::exp(xd[base + j * inner] - mx);
      if (log_space) {
        const double lse = mx + std::log(z);
        for (std::size_t j = 0; j < k; ++j) y[base + j * inner] = xd[base + j * inner] - lse;
      } else {
        for (std::size_t j = 0; j < k; ++j) y[base + j * inner] = std::exp(xd[base + j * inner] - mx) / z;
      }
    }
  }
  return make_result(x.shape(), std::move(y), {x}, [split, log_space](Node& self) {
    auto& g = self.inputs[0]->ensure_grad();
    const std::size_t k = split.extent, inner = split.inner;
    for (std::size_t o = 0; o < split.outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * k * inner + in;
        double dot = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
          const std::size_t q = base + j * inner;
          dot += log_space ? self.grad[q] : self.grad[q] * self.data[q];
        }
        for (std::size_t j = 0; j < k; ++j) {
          const std::size_t q = base + j * inner;
          if (log_space) {
            g[q] += self.grad[q] - std::exp(self.data[q]) * dot;
          } else {
            g[q] += self.data[q] * (self.grad[q] - dot);
          }
        }
      }
    }
  });
}

}  // namespace

Tensor softmax(const Tensor& x, int axis) { return softmax_impl(x, axis, false); }
Tensor log_softmax(const Tensor& x, int axis) { return softmax_impl(x, axis, true); }

Tensor causal_conv1d(const Tensor& x, const Tensor& w, const Tensor& bias) {
  if (x.rank() < 2) throw DimensionError("causal_conv1d expects [..., M, E], got " + shape_str(x.shape()));
  const std::size_t m = x.dim(-2), e = x.dim(-1);
  if (w.rank() != 2 || w.dim(0) != e || bias.shape() != Shape{e}) {
    throw DimensionError("causal_conv1d: input " + shape_str(x.shape()) + " with weight " + shape_str(w.shape()) +
                         " and bias " + shape_str(bias.shape()));
  }
  const std::size_t k = w.dim(1);
  const std::size_t batches = x.numel() / (m * e);
  auto xd = x.data();
  auto wd = w.data();
  auto bd = bias.data();
  std::vector<double> y(x.numel());
  for (std::size_t b = 0; b < batches; ++b) {
    const double* xb = xd.data() + b * m * e;
    double* yb = y.data() + b * m * e;
    for (std::size_t t = 0; t < m; ++t) {
      for (std::size_t c = 0; c < e; ++c) {
        double acc = bd[c];
        for (std::size_t i = 0; i < k; ++i) {
          // source position t - (k - 1) + i, skipped when negative
          if (t + i + 1 < k) continue;
          acc += wd[c * k + i] * xb[(t + i + 1 - k) * e + c];
        }
        yb[t * e + c] = acc;
      }
    }
  }
  return make_result(x.shape(), std::move(y), {x, w, bias}, [batches, m, e, k](Node& self) {
    auto& xn = self.inputs[0];
    auto& wn = self.inputs[1];
    auto& bn = self.inputs[2];
    const auto& gy = self.grad;
    std::vector<double>* gx = wants_grad(xn) ? &xn->ensure_grad() : nullptr;
    std::vector<double>* gw = wants_grad(wn) ? &wn->ensure_grad() : nullptr;
    std::vector<double>* gb = wants_grad(bn) ? &bn->ensure_grad() : nullptr;
    for (std::size_t b = 0; b < batches; ++b) {
      for (std::size_t t = 0; t < m; ++t) {
        for (std::size_t c = 0; c < e; ++c) {
          const double g = gy[(b * m + t) * e + c];
          if (gb) (*gb)[c] += g;
          for (std::size_t i = 0; i < k; ++i) {
            if (t + i + 1 < k) continue;
            const std::size_t src = (b * m + t + i + 1 - k) * e + c;
            if (gw) (*gw)[c * k + i] += g * xn->data[src];
            if (gx) (*gx)[src] += g * wn->data[c * k + i];
          }
        }
      }
    }
  });
}

}  // namespace mambamil
