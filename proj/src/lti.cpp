#include <cmath>

#include "mambamil/errors.hpp"
#include "mambamil/ssm.hpp"

namespace mambamil {

DiscreteLTI discretize_zoh(const LTISystem& sys) {
  if (!(sys.delta > 0.0)) throw ContractError("discretize_zoh: delta must be positive");
  if (sys.a.size() != sys.b.size()) throw DimensionError("discretize_zoh: A and B lengths differ");
  DiscreteLTI d;
  d.a_bar.resize(sys.a.size());
  d.b_bar.resize(sys.a.size());
  for (std::size_t n = 0; n < sys.a.size(); ++n) {
    const double da = sys.delta * sys.a[n];
    d.a_bar[n] = std::exp(da);
    if (std::abs(da) < 1e-8) {
      d.b_bar[n] = sys.delta * sys.b[n] * (1.0 + 0.5 * da);
    } else {
      d.b_bar[n] = std::expm1(da) / da * sys.delta * sys.b[n];
    }
  }
  return d;
}

std::vector<double> lti_recurrent(const DiscreteLTI& d, std::span<const double> c, std::span<const double> x) {
  const std::size_t n_state = d.a_bar.size();
  if (d.b_bar.size() != n_state || c.size() != n_state) throw DimensionError("lti_recurrent: state lengths differ");
  std::vector<double> h(n_state, 0.0);
  std::vector<double> y(x.size());
  for (std::size_t t = 0; t < x.size(); ++t) {
    double acc = 0.0;
    for (std::size_t n = 0; n < n_state; ++n) {
      h[n] = d.a_bar[n] * h[n] + d.b_bar[n] * x[t];
      acc += c[n] * h[n];
    }
    y[t] = acc;
  }
  return y;
}

std::vector<double> lti_kernel(const DiscreteLTI& d, std::span<const double> c, std::size_t length) {
  const std::size_t n_state = d.a_bar.size();
  if (length < 1) throw ContractError("lti_kernel: length must be at least 1");
  if (d.b_bar.size() != n_state || c.size() != n_state) throw DimensionError("lti_kernel: state lengths differ");
  std::vector<double> k(length, 0.0);
  std::vector<double> power(n_state, 1.0);  // a_bar^m
  for (std::size_t m = 0; m < length; ++m) {
    double acc = 0.0;
    for (std::size_t n = 0; n < n_state; ++n) {
      acc += c[n] * power[n] * d.b_bar[n];
      power[n] *= d.a_bar[n];
    }
    k[m] = acc;
  }
  return k;
}

std::vector<double> lti_conv_apply(std::span<const double> x, std::span<const double> kernel) {
  if (x.size() != kernel.size()) {
    throw DimensionError("lti_conv_apply: input length " + std::to_string(x.size()) + " vs kernel length " +
                         std::to_string(kernel.size()));
  }
  std::vector<double> y(x.size(), 0.0);
  for (std::size_t t = 0; t < x.size(); ++t) {
    double acc = 0.0;
    for (std::size_t m = 0; m <= t; ++m) acc += kernel[m] * x[t - m];
    y[t] = acc;
  }
  return y;
}

}  // namespace mambamil
