#include "mambamil/block.hpp"

#include <cmath>

#include "mambamil/errors.hpp"
#include "mambamil/ops.hpp"
#include "mambamil/ssm.hpp"

namespace mambamil {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kSr: return "sr";
    case Variant::kVanilla: return "vanilla";
    case Variant::kBi: return "bi";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  if (s == "sr") return Variant::kSr;
  if (s == "vanilla") return Variant::kVanilla;
  if (s == "bi") return Variant::kBi;
  throw ContractError("unknown variant '" + s + "' (expected sr, vanilla or bi)");
}

void BlockConfig::validate() const {
  if (d_model < 1 || expand < 1 || n_state < 1 || segment < 1 || conv_k < 1) {
    throw ContractError("block config: D, expand, N_state, R and conv_k must all be at least 1");
  }
}

std::vector<std::pair<std::string, Tensor>> BlockParams::named_parameters(const std::string& prefix) const {
  std::vector<std::pair<std::string, Tensor>> out;
  auto put = [&](const std::string& name, const Tensor& t) {
    if (t.defined()) out.emplace_back(prefix + name, t);
  };
  put("norm_gamma", norm_gamma);
  put("norm_beta", norm_beta);
  put("w_z", w_z);
  put("w_x0", w_x0);
  put("w_x1", w_x1);
  auto branch = [&](const std::string& tag, const BranchParams& b) {
    put(tag + ".conv_w", b.conv_w);
    put(tag + ".conv_b", b.conv_b);
    put(tag + ".w_b", b.w_b);
    put(tag + ".w_c", b.w_c);
    put(tag + ".w_dt_down", b.w_dt_down);
    put(tag + ".w_dt_up", b.w_dt_up);
    put(tag + ".dt_bias", b.dt_bias);
    put(tag + ".a_log", b.a_log);
    put(tag + ".d_skip", b.d_skip);
  };
  branch("os", os);
  branch("rs", rs);
  put("w_out", w_out);
  put("b_out", b_out);
  return out;
}

namespace {

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return Tensor(std::move(shape), std::move(v));
}

BranchParams init_branch(const BlockConfig& c, Rng& rng) {
  const std::size_t e = c.inner(), n = c.n_state, k = c.conv_k, r = c.resolved_dt_rank();
  BranchParams b;
  const double conv_bound = 1.0 / std::sqrt(static_cast<double>(k));
  b.conv_w = uniform_tensor({e, k}, conv_bound, rng);
  b.conv_b = uniform_tensor({e}, conv_bound, rng);
  const double inner_bound = 1.0 / std::sqrt(static_cast<double>(e));
  b.w_b = uniform_tensor({e, n}, inner_bound, rng);
  b.w_c = uniform_tensor({e, n}, inner_bound, rng);
  b.w_dt_down = uniform_tensor({e, r}, inner_bound, rng);
  b.w_dt_up = uniform_tensor({r, e}, 1.0 / std::sqrt(static_cast<double>(r)), rng);
  // Initial step sizes log-uniform in [1e-3, 1e-1].
  std::vector<double> bias(e);
  for (auto& v : bias) v = inverse_softplus(std::exp(rng.uniform(std::log(1e-3), std::log(1e-1))));
  b.dt_bias = Tensor::vector(std::move(bias));
  std::vector<double> a_log(e * n);
  for (std::size_t i = 0; i < e; ++i)
    for (std::size_t j = 0; j < n; ++j) a_log[i * n + j] = std::log(static_cast<double>(j + 1));
  b.a_log = Tensor({e, n}, std::move(a_log));
  if (c.d_skip) b.d_skip = Tensor::ones({e});
  return b;
}

}  // namespace

BlockParams init_block(const BlockConfig& config, Rng& rng, const BlockInit& init) {
  config.validate();
  const std::size_t d = config.d_model, e = config.inner();
  BlockParams p;
  p.norm_gamma = Tensor::ones({d});
  p.norm_beta = Tensor::zeros({d});
  const double in_bound = 1.0 / std::sqrt(static_cast<double>(d));
  p.w_z = uniform_tensor({d, e}, in_bound, rng);
  p.w_x0 = uniform_tensor({d, e}, in_bound, rng);
  p.os = init_branch(config, rng);
  if (config.variant != Variant::kVanilla) {
    p.w_x1 = uniform_tensor({d, e}, in_bound, rng);
    p.rs = init_branch(config, rng);
  }
  if (init.zero_out) {
    p.w_out = Tensor::zeros({e, d});
  } else {
    p.w_out = uniform_tensor({e, d}, 1.0 / std::sqrt(static_cast<double>(e)), rng);
  }
  p.b_out = Tensor::zeros({d});
  return p;
}

std::size_t padded_length(std::size_t length, std::size_t segment) {
  if (segment < 1) throw ContractError("segment size must be at least 1");
  return (length + segment - 1) / segment * segment;
}

std::vector<std::int64_t> reorder_index(std::size_t length, std::size_t segment) {
  const std::size_t l_pad = padded_length(length, segment);
  const std::size_t n_seg = l_pad / segment;
  std::vector<std::int64_t> idx(l_pad);
  for (std::size_t i = 0; i < segment; ++i) {
    for (std::size_t j = 0; j < n_seg; ++j) {
      const std::size_t src = j * segment + i;
      idx[i * n_seg + j] = src < length ? static_cast<std::int64_t>(src) : -1;
    }
  }
  return idx;
}

std::vector<std::int64_t> restore_index(std::size_t length, std::size_t segment) {
  const std::size_t n_seg = padded_length(length, segment) / segment;
  std::vector<std::int64_t> idx(length);
  for (std::size_t q = 0; q < length; ++q) {
    const std::size_t j = q / segment, i = q % segment;
    idx[q] = static_cast<std::int64_t>(i * n_seg + j);
  }
  return idx;
}

Reordered reorder(const Tensor& x, std::size_t segment) {
  if (x.rank() < 2) throw DimensionError("reorder expects [..., L, D], got " + shape_str(x.shape()));
  const std::size_t length = x.dim(-2);
  return {gather(x, -2, reorder_index(length, segment)), padded_length(length, segment)};
}

Tensor restore(const Tensor& y, std::size_t length, std::size_t segment) {
  if (y.rank() < 2) throw DimensionError("restore expects [..., L_pad, D], got " + shape_str(y.shape()));
  const std::size_t l_pad = padded_length(length, segment);
  if (y.dim(-2) != l_pad) {
    throw ContractError("restore: sequence length " + std::to_string(y.dim(-2)) + " is not ceil(" +
                        std::to_string(length) + "/" + std::to_string(segment) + ")*" + std::to_string(segment));
  }
  return gather(y, -2, restore_index(length, segment));
}

Tensor branch_forward(const Tensor& x, const BranchParams& p, const BlockConfig& config) {
  const Tensor xc = silu(causal_conv1d(x, p.conv_w, p.conv_b));
  const Tensor bseq = linear(xc, p.w_b);
  const Tensor cseq = linear(xc, p.w_c);
  const Tensor delta = softplus(linear(linear(xc, p.w_dt_down), p.w_dt_up, p.dt_bias));
  const Tensor a = scale(exp(p.a_log), -1.0);
  return selective_scan(xc, delta, a, bseq, cseq, config.d_skip ? p.d_skip : Tensor());
}

BlockTrace block_forward_trace(const Tensor& x_in, const BlockParams& params, const BlockConfig& config) {
  config.validate();
  if (x_in.rank() != 2 && x_in.rank() != 3) {
    throw DimensionError("block_forward expects [M, D] or [B, M, D], got " + shape_str(x_in.shape()));
  }
  if (x_in.dim(-1) != config.d_model) {
    throw DimensionError("block_forward: input width " + std::to_string(x_in.dim(-1)) + " vs model width " +
                         std::to_string(config.d_model));
  }
  if (x_in.dim(-2) < 1) throw ContractError("block_forward: empty sequence");
  const std::size_t m = x_in.dim(-2);
  const Tensor x = x_in.rank() == 3 ? x_in : reshape(x_in, {1, m, config.d_model});

  const Tensor xn = layer_norm(x, params.norm_gamma, params.norm_beta);
  const Tensor z = linear(xn, params.w_z);
  BlockTrace trace;
  trace.gate = silu(z);
  trace.y_os = branch_forward(linear(xn, params.w_x0), params.os, config);
  Tensor fused = mul(trace.y_os, trace.gate);

  if (config.variant != Variant::kVanilla) {
    const Tensor x1 = linear(xn, params.w_x1);
    if (config.variant == Variant::kSr) {
      const Reordered r = reorder(x1, config.segment);
      trace.y_rs = restore(branch_forward(r.x, params.rs, config), m, config.segment);
    } else {
      std::vector<std::int64_t> rev(m);
      for (std::size_t t = 0; t < m; ++t) rev[t] = static_cast<std::int64_t>(m - 1 - t);
      trace.y_rs = gather(branch_forward(gather(x1, 1, rev), params.rs, config), 1, rev);
    }
    fused = add(fused, mul(trace.y_rs, trace.gate));
  }

  Tensor out = add(linear(fused, params.w_out, params.b_out), x);
  trace.out = x_in.rank() == 3 ? out : reshape(out, x_in.shape());
  return trace;
}

Tensor block_forward(const Tensor& x, const BlockParams& params, const BlockConfig& config) {
  return block_forward_trace(x, params, config).out;
}

}  // namespace mambamil
