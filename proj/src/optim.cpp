#include <cmath>

#include "mambamil/errors.hpp"
#include "mambamil/train.hpp"

namespace mambamil {

OptimState make_optim_state(const std::vector<Tensor>& params, const AdamConfig& config) {
  OptimState s;
  s.config = config;
  for (const auto& p : params) {
    s.m.emplace_back(p.numel(), 0.0);
    s.v.emplace_back(p.numel(), 0.0);
  }
  return s;
}

void adam_step(std::vector<Tensor>& params, OptimState& state) {
  if (params.size() != state.m.size()) throw DimensionError("adam_step: parameter count differs from optimizer state");
  const auto& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto values = params[k].mutable_data();
    auto& m = state.m[k];
    auto& v = state.v[k];
    if (m.size() != values.size()) throw DimensionError("adam_step: moment shape differs from parameter shape");
    const auto grad = params[k].grad();
    const bool has = !grad.empty();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = has ? grad[i] : 0.0;
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      values[i] -= c.lr * (m_hat / (std::sqrt(v_hat) + c.eps) + c.weight_decay * values[i]);
    }
  }
}

}  // namespace mambamil
