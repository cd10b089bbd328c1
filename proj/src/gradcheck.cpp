#include "mambamil/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace mambamil {

double GradCheckResult::max_rel_error() const {
  double m = 0.0;
  for (const auto& e : entries) m = std::max(m, e.rel_error);
  return m;
}

GradCheckResult check_gradients(const std::function<Tensor()>& loss_fn,
                                std::vector<std::pair<std::string, Tensor>> leaves, double h, double zero_floor) {
  for (auto& [name, t] : leaves) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = loss_fn();
    backward(loss, tape);
  }

  GradCheckResult result;
  for (auto& [name, t] : leaves) {
    const std::size_t n = t.numel();
    std::vector<double> analytic(n, 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
    std::vector<double> numeric(n);
    auto values = t.mutable_data();
    for (std::size_t i = 0; i < n; ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = loss_fn().item();
      values[i] = saved - h;
      const double down = loss_fn().item();
      values[i] = saved;
      numeric[i] = (up - down) / (2.0 * h);
    }
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0, max_abs = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = analytic[i] - numeric[i];
      diff2 += d * d;
      a2 += analytic[i] * analytic[i];
      n2 += numeric[i] * numeric[i];
      max_abs = std::max(max_abs, std::abs(d));
    }
    const double denom = std::sqrt(std::max(a2, n2));
    GradCheckEntry entry;
    entry.name = name;
    entry.size = n;
    entry.max_abs_error = max_abs;
    entry.rel_error = denom < zero_floor ? 0.0 : std::sqrt(diff2) / denom;
    result.entries.push_back(std::move(entry));
    t.zero_grad();
  }
  return result;
}

}  // namespace mambamil
