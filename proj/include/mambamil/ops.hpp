#pragma once

#include <cstdint>
#include <vector>

#include "mambamil/tensor.hpp"

namespace mambamil {

enum class Unary { kSilu, kSigmoid, kSoftplus, kTanh, kExp, kLog };

// Scalar kernels shared by the tensor ops and the tests.
double sigmoid(double t);
// log(1 + exp(t)); returns t for t > 30.
double softplus(double t);
double silu(double t);
// Inverse of softplus for t > 0.
double inverse_softplus(double t);

// y[..., o] = sum_i x[..., i] * w[i, o] (+ b[o]). `b` may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b = Tensor());

Tensor elementwise(const Tensor& x, Unary f);
inline Tensor silu(const Tensor& x) { return elementwise(x, Unary::kSilu); }
inline Tensor sigmoid(const Tensor& x) { return elementwise(x, Unary::kSigmoid); }
inline Tensor softplus(const Tensor& x) { return elementwise(x, Unary::kSoftplus); }
inline Tensor tanh(const Tensor& x) { return elementwise(x, Unary::kTanh); }
inline Tensor exp(const Tensor& x) { return elementwise(x, Unary::kExp); }
inline Tensor log(const Tensor& x) { return elementwise(x, Unary::kLog); }

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
// Sum of all entries, as a scalar.
Tensor sum(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);
// out.shape[i] = x.shape[perm[i]].
Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm);
Tensor transpose(const Tensor& x);  // rank 2

// Picks entries along `axis`: out[..., p, ...] = x[..., index[p], ...].
// An index of -1 produces a zero slice. Backward scatters additively.
Tensor gather(const Tensor& x, int axis, const std::vector<std::int64_t>& index);

// Population-variance normalisation over the last axis.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

Tensor softmax(const Tensor& x, int axis = -1);
Tensor log_softmax(const Tensor& x, int axis = -1);

// Depthwise causal convolution over the sequence axis of x[..., M, E]:
// y[t, e] = bias[e] + sum_i w[e, i] * x[t - (k - 1) + i, e], x[<0] = 0.
Tensor causal_conv1d(const Tensor& x, const Tensor& w, const Tensor& bias);

}  // namespace mambamil
