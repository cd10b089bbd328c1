#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mambamil/tensor.hpp"

namespace mambamil {

// Continuous diagonal system h'(t) = A h(t) + B x(t), y(t) = C h(t), sampled
// with step `delta`.
struct LTISystem {
  std::vector<double> a;
  std::vector<double> b;
  std::vector<double> c;
  double delta = 1.0;
};

struct DiscreteLTI {
  std::vector<double> a_bar;
  std::vector<double> b_bar;
};

// Zero-order hold: a_bar = exp(delta*A), b_bar = (delta*A)^-1 (exp(delta*A) - 1) delta*B.
// For |delta*A| < 1e-8 the series limit b_bar = delta*B (1 + delta*A/2) is used.
DiscreteLTI discretize_zoh(const LTISystem& sys);

// h_t = a_bar*h_{t-1} + b_bar*x_t, y_t = C.h_t with h_0 = 0.
std::vector<double> lti_recurrent(const DiscreteLTI& d, std::span<const double> c, std::span<const double> x);

// K[m] = sum_n C[n] a_bar[n]^m b_bar[n], m = 0..length-1.
std::vector<double> lti_kernel(const DiscreteLTI& d, std::span<const double> c, std::size_t length);

// Causal convolution y_t = sum_{m<=t} K[m] x[t-m].
std::vector<double> lti_conv_apply(std::span<const double> x, std::span<const double> kernel);

enum class ScanMode { kSequential, kParallel };

struct ScanOptions {
  std::size_t chunk = 64;
  std::size_t workers = 1;
};

// First-order recurrence h_t = a_t h_{t-1} + b_t with h_{-1} = 0.
//
// Parallel mode is a blocked two-pass scan: every chunk is scanned locally
// from a zero state while tracking its running decay product, the chunk
// summaries are combined with (a1,b1)+(a2,b2) = (a2 a1, a2 b1 + b2), and each
// chunk is then fixed up with its incoming state. Chunk boundaries depend only
// on `chunk`, so output bits do not depend on `workers`.
std::vector<double> affine_scan(std::span<const double> a, std::span<const double> b, ScanMode mode,
                                const ScanOptions& options = {});

// Input-dependent diagonal scan over u[B, M, E]:
//   h_t[n] = exp(delta[b,t,e] A[e,n]) h_{t-1}[n] + delta[b,t,e] Bseq[b,t,n] u[b,t,e]
//   y[b,t,e] = sum_n Cseq[b,t,n] h_t[n] (+ d_skip[e] u[b,t,e])
// The input gain is the first-order delta*B form, not the ZOH closed form.
// Differentiable in every argument; `d_skip` may be undefined.
Tensor selective_scan(const Tensor& u, const Tensor& delta, const Tensor& a, const Tensor& bseq, const Tensor& cseq,
                      const Tensor& d_skip = Tensor());

}  // namespace mambamil
