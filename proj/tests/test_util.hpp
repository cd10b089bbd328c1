#pragma once

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mambamil/gradcheck.hpp"
#include "mambamil/ops.hpp"
#include "mambamil/rng.hpp"
#include "mambamil/tensor.hpp"

namespace mambamil::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = scale * rng.normal();
  return Tensor(std::move(shape), std::move(v));
}

inline Tensor uniform_tensor(Shape shape, Rng& rng, double lo, double hi) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v));
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  EXPECT_EQ(a.size(), b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  EXPECT_EQ(a.shape(), b.shape());
  return max_abs_diff(a.data(), b.data());
}

inline std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

// A loss that weights every output entry differently, so gradient errors in
// individual entries cannot cancel.
inline Tensor weighted_sum(const Tensor& y, std::uint64_t seed = 99) {
  Rng rng(seed);
  std::vector<double> w(y.numel());
  for (auto& v : w) v = rng.uniform(0.5, 1.5) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
  return sum(mul(y, Tensor(y.shape(), std::move(w))));
}

inline void expect_gradients(const std::function<Tensor()>& loss, std::vector<std::pair<std::string, Tensor>> leaves,
                             double tol = 1e-4) {
  const auto result = check_gradients(loss, std::move(leaves));
  for (const auto& e : result.entries) EXPECT_LT(e.rel_error, tol) << "tensor " << e.name;
}

}  // namespace mambamil::testing
