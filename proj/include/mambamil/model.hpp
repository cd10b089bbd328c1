#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mambamil/block.hpp"
#include "mambamil/rng.hpp"
#include "mambamil/tensor.hpp"

namespace mambamil {

enum class Task { kSubtype, kSurvival };

std::string to_string(Task t);
Task parse_task(const std::string& s);

struct ModelConfig {
  std::size_t input_dim = 1024;
  std::size_t n_layers = 2;
  BlockConfig block;  // block.d_model is the model width D
  Task task = Task::kSubtype;
  std::size_t num_classes = 2;
  std::size_t num_bins = 4;
  std::size_t attn_hidden = 128;
  bool final_norm = true;

  std::size_t model_dim() const { return block.d_model; }
  std::size_t num_outputs() const { return task == Task::kSubtype ? num_classes : num_bins; }
  void validate() const;
};

struct ModelParams {
  Tensor w_proj, b_proj;  // [D_in, D], [D]
  std::vector<BlockParams> blocks;
  Tensor final_gamma, final_beta;  // undefined when final_norm is off
  Tensor attn_v, attn_v_b;         // tanh branch, [D, H], [H]
  Tensor attn_u, attn_u_b;         // sigmoid gate, [D, H], [H]
  Tensor attn_w;                   // [H, 1]
  Tensor w_head, b_head;           // [D, K], [K]

  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> parameters() const;
};

struct ModelInit {
  // Every block starts as the identity map (zero output projection).
  bool identity_blocks = false;
};

// Applies `fn` to every defined parameter tensor, in named_parameters() order.
void visit_parameters(ModelParams& params, const std::function<void(Tensor&)>& fn);

ModelParams init_model(const ModelConfig& config, std::uint64_t seed, const ModelInit& init = {});

struct Pooled {
  Tensor bag;   // [D]
  Tensor attn;  // [M]
};

struct AttentionWeights {
  const Tensor& v;
  const Tensor& v_b;
  const Tensor& u;
  const Tensor& u_b;
  const Tensor& w;
};

// ABMIL gated attention: attn = softmax_i(w . (tanh(V h_i) * sigmoid(U h_i))),
// bag = sum_i attn_i h_i.
Pooled gated_attention_pool(const Tensor& h, const AttentionWeights& weights);
// Attention from precomputed pre-softmax scores [M].
Pooled attention_pool_from_scores(const Tensor& h, const Tensor& scores);

struct ModelOutput {
  Tensor logits;  // [K]
  Tensor attn;    // [L]
};

ModelOutput model_forward(const Tensor& features, const ModelParams& params, const ModelConfig& config);

// -log softmax(logits)[label].
Tensor ce_loss(const Tensor& logits, std::size_t label);

// Discrete-time hazard negative log-likelihood with hazards sigmoid(logits):
// event -> -log(S_{t-1} h_t), censored -> -log(S_t), S_k = prod_{j<=k}(1 - h_j).
Tensor survival_nll_loss(const Tensor& hazard_logits, std::size_t time_bin, bool event);

// sum_k (1 - S_k); larger means worse prognosis.
double risk_score(const Tensor& hazard_logits);

}  // namespace mambamil
