#include "mambamil/model.hpp"

#include <cmath>

#include "mambamil/errors.hpp"
#include "mambamil/ops.hpp"

namespace mambamil {

std::string to_string(Task t) { return t == Task::kSubtype ? "subtype" : "survival"; }

Task parse_task(const std::string& s) {
  if (s == "subtype") return Task::kSubtype;
  if (s == "survival") return Task::kSurvival;
  throw ContractError("unknown task '" + s + "' (expected subtype or survival)");
}

void ModelConfig::validate() const {
  block.validate();
  if (n_layers < 1) throw ContractError("model config: n_layers must be at least 1");
  if (input_dim < 1 || attn_hidden < 1) throw ContractError("model config: input_dim and attn_hidden must be positive");
  if (task == Task::kSubtype && num_classes < 2) throw ContractError("model config: num_classes must be at least 2");
  if (task == Task::kSurvival && num_bins < 1) throw ContractError("model config: num_bins must be at least 1");
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  auto put = [&](const std::string& name, const Tensor& t) {
    if (t.defined()) out.emplace_back(name, t);
  };
  put("w_proj", w_proj);
  put("b_proj", b_proj);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    for (auto& entry : blocks[i].named_parameters("block" + std::to_string(i) + ".")) out.push_back(entry);
  }
  put("final_gamma", final_gamma);
  put("final_beta", final_beta);
  put("attn_v", attn_v);
  put("attn_v_b", attn_v_b);
  put("attn_u", attn_u);
  put("attn_u_b", attn_u_b);
  put("attn_w", attn_w);
  put("w_head", w_head);
  put("b_head", b_head);
  return out;
}

void visit_parameters(ModelParams& p, const std::function<void(Tensor&)>& fn) {
  auto put = [&](Tensor& t) {
    if (t.defined()) fn(t);
  };
  put(p.w_proj);
  put(p.b_proj);
  for (auto& b : p.blocks) {
    for (Tensor* t : {&b.norm_gamma, &b.norm_beta, &b.w_z, &b.w_x0, &b.w_x1}) put(*t);
    for (BranchParams* br : {&b.os, &b.rs}) {
      for (Tensor* t : {&br->conv_w, &br->conv_b, &br->w_b, &br->w_c, &br->w_dt_down, &br->w_dt_up, &br->dt_bias,
                        &br->a_log, &br->d_skip})
        put(*t);
    }
    put(b.w_out);
    put(b.b_out);
  }
  for (Tensor* t : {&p.final_gamma, &p.final_beta, &p.attn_v, &p.attn_v_b, &p.attn_u, &p.attn_u_b, &p.attn_w,
                    &p.w_head, &p.b_head})
    put(*t);
}

std::vector<Tensor> ModelParams::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

namespace {

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return Tensor(std::move(shape), std::move(v));
}

double inv_sqrt(std::size_t n) { return 1.0 / std::sqrt(static_cast<double>(n)); }

}  // namespace

ModelParams init_model(const ModelConfig& config, std::uint64_t seed, const ModelInit& init) {
  config.validate();
  Rng rng(seed);
  const std::size_t d = config.model_dim(), h = config.attn_hidden, k = config.num_outputs();
  ModelParams p;
  p.w_proj = uniform_tensor({config.input_dim, d}, inv_sqrt(config.input_dim), rng);
  p.b_proj = Tensor::zeros({d});
  for (std::size_t i = 0; i < config.n_layers; ++i) {
    p.blocks.push_back(init_block(config.block, rng, BlockInit{init.identity_blocks}));
  }
  if (config.final_norm) {
    p.final_gamma = Tensor::ones({d});
    p.final_beta = Tensor::zeros({d});
  }
  p.attn_v = uniform_tensor({d, h}, inv_sqrt(d), rng);
  p.attn_v_b = Tensor::zeros({h});
  p.attn_u = uniform_tensor({d, h}, inv_sqrt(d), rng);
  p.attn_u_b = Tensor::zeros({h});
  p.attn_w = uniform_tensor({h, 1}, inv_sqrt(h), rng);
  p.w_head = uniform_tensor({d, k}, inv_sqrt(d), rng);
  p.b_head = Tensor::zeros({k});
  return p;
}

Pooled attention_pool_from_scores(const Tensor& h, const Tensor& scores) {
  if (h.rank() != 2) throw DimensionError("attention pooling expects [M, D], got " + shape_str(h.shape()));
  const std::size_t m = h.dim(0);
  if (m == 0) throw EmptyBagError("attention pooling over an empty bag");
  if (scores.shape() != Shape{m}) {
    throw DimensionError("attention scores " + shape_str(scores.shape()) + " for instances " + shape_str(h.shape()));
  }
  Pooled out;
  out.attn = softmax(scores, 0);
  out.bag = reshape(linear(reshape(out.attn, {1, m}), h), {h.dim(1)});
  return out;
}

Pooled gated_attention_pool(const Tensor& h, const AttentionWeights& w) {
  if (h.rank() != 2) throw DimensionError("attention pooling expects [M, D], got " + shape_str(h.shape()));
  const std::size_t m = h.dim(0);
  if (m == 0) throw EmptyBagError("attention pooling over an empty bag");
  const Tensor a = tanh(linear(h, w.v, w.v_b));
  const Tensor g = sigmoid(linear(h, w.u, w.u_b));
  const Tensor scores = reshape(linear(mul(a, g), w.w), {m});
  return attention_pool_from_scores(h, scores);
}

ModelOutput model_forward(const Tensor& features, const ModelParams& params, const ModelConfig& config) {
  if (features.rank() != 2) throw DimensionError("bag features must be [L, D_in], got " + shape_str(features.shape()));
  if (features.dim(0) == 0) throw EmptyBagError("bag has no instances");
  if (features.dim(1) != config.input_dim) {
    throw DimensionError("feature width " + std::to_string(features.dim(1)) + " does not match model input width " +
                         std::to_string(config.input_dim));
  }
  Tensor h = linear(features, params.w_proj, params.b_proj);
  for (const auto& block : params.blocks) h = block_forward(h, block, config.block);
  if (params.final_gamma.defined()) h = layer_norm(h, params.final_gamma, params.final_beta);
  const Pooled pooled =
      gated_attention_pool(h, {params.attn_v, params.attn_v_b, params.attn_u, params.attn_u_b, params.attn_w});
  return {linear(pooled.bag, params.w_head, params.b_head), pooled.attn};
}

Tensor ce_loss(const Tensor& logits, std::size_t label) {
  if (logits.rank() != 1) throw DimensionError("ce_loss expects logits [C], got " + shape_str(logits.shape()));
  if (label >= logits.dim(0)) {
    throw ContractError("ce_loss: label " + std::to_string(label) + " out of range for " +
                        std::to_string(logits.dim(0)) + " classes");
  }
  const Tensor picked = gather(log_softmax(logits, 0), 0, {static_cast<std::int64_t>(label)});
  return scale(sum(picked), -1.0);
}

Tensor survival_nll_loss(const Tensor& hazard_logits, std::size_t time_bin, bool event) {
  if (hazard_logits.rank() != 1) {
    throw DimensionError("survival loss expects hazard logits [K], got " + shape_str(hazard_logits.shape()));
  }
  if (time_bin >= hazard_logits.dim(0)) {
    throw ContractError("survival loss: time bin " + std::to_string(time_bin) + " out of range for " +
                        std::to_string(hazard_logits.dim(0)) + " bins");
  }
  // -log(1 - sigmoid(x)) = softplus(x) and -log(sigmoid(x)) = softplus(-x).
  std::vector<std::int64_t> idx(time_bin + 1);
  std::vector<double> sign(time_bin + 1, 1.0);
  for (std::size_t k = 0; k <= time_bin; ++k) idx[k] = static_cast<std::int64_t>(k);
  if (event) sign[time_bin] = -1.0;
  const Tensor picked = gather(hazard_logits, 0, idx);
  return sum(softplus(mul(picked, Tensor::vector(std::move(sign)))));
}

double risk_score(const Tensor& hazard_logits) {
  double surv = 1.0, risk = 0.0;
  for (double x : hazard_logits.data()) {
    surv *= 1.0 - sigmoid(x);
    risk += 1.0 - surv;
  }
  return risk;
}

}  // namespace mambamil
