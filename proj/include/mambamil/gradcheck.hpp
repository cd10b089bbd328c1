#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mambamil/tensor.hpp"

namespace mambamil {

struct GradCheckEntry {
  std::string name;
  std::size_t size = 0;
  // ||analytic - numeric||_2 / max(||analytic||_2, ||numeric||_2); zero when
  // both norms fall below `zero_floor`.
  double rel_error = 0.0;
  double max_abs_error = 0.0;
};

struct GradCheckResult {
  std::vector<GradCheckEntry> entries;
  double max_rel_error() const;
};

// Compares reverse-mode gradients of `loss_fn` against central finite
// differences with step `h`, for every leaf in `leaves`. `loss_fn` must build
// a fresh scalar loss from the current leaf values each time it is called.
GradCheckResult check_gradients(const std::function<Tensor()>& loss_fn,
                                std::vector<std::pair<std::string, Tensor>> leaves, double h = 1e-5,
                                double zero_floor = 1e-10);

}  // namespace mambamil
