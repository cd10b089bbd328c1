#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mambamil/data.hpp"
#include "mambamil/model.hpp"
#include "mambamil/tensor.hpp"

namespace mambamil {

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

// Mann-Whitney AUC for binary labels; tied scores count one half.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);
// Macro one-vs-rest AUC over class probability rows; classes absent from
// `labels` are skipped (at least two must be present).
double auc_ovr(const std::vector<std::vector<double>>& probs, const std::vector<std::size_t>& labels);
double accuracy(const std::vector<std::size_t>& preds, const std::vector<std::size_t>& labels);
// Index of the largest entry, lowest index on ties.
std::size_t argmax(const std::vector<double>& v);
// Harrell's C: pairs with time_i < time_j and event_i are comparable; risk
// ties count one half.
double c_index(const std::vector<double>& risks, const std::vector<double>& times, const std::vector<bool>& events);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // n-1 denominator; 0 for a single value
};
MeanStd mean_std(const std::vector<double>& values);

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-5;
};

struct OptimState {
  AdamConfig config;
  std::size_t step = 0;
  std::vector<std::vector<double>> m, v;
};

OptimState make_optim_state(const std::vector<Tensor>& params, const AdamConfig& config);

// Decoupled weight decay:
//   p -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * p)
// Parameters without a gradient are treated as having a zero gradient.
void adam_step(std::vector<Tensor>& params, OptimState& state);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainHyper {
  AdamConfig adam;
  std::size_t epochs = 50;
  std::size_t patience = 10;  // epochs without val-loss improvement; 0 disables early stopping
  std::uint64_t seed = 1;
  std::size_t accum_steps = 1;
  std::size_t workers = 1;  // evaluation fan-out
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  std::optional<double> val_auc, val_acc, val_cindex;
};

struct FoldResult {
  std::optional<double> auc, acc, cindex;
  std::size_t best_epoch = 0;
  std::vector<EpochRecord> history;
  ModelParams params;  // parameters at the best-val-loss epoch
  std::vector<double> bin_edges;
};

struct EvalReport {
  std::vector<FoldResult> folds;
  std::optional<MeanStd> auc, acc, cindex;
};

struct Evaluation {
  double loss = 0.0;
  std::optional<double> auc, acc, cindex;
  std::vector<std::vector<double>> outputs;  // logits per bag
};

// Mean loss and task metrics for `bags` (indices into `data`). Bags are
// evaluated independently and may run on `workers` threads; results do not
// depend on the worker count.
Evaluation evaluate(const ModelConfig& config, const ModelParams& params, const std::vector<Bag>& data,
                    const std::vector<std::size_t>& bags, const std::vector<double>& bin_edges, std::size_t workers);

using EpochCallback = std::function<void(std::size_t fold, const EpochRecord&)>;

// Trains one fresh model per fold. Steps are single bags in a seeded shuffled
// order. Reported metrics come from the best-val-loss epoch: validation metrics
// for folds without a test subset, test metrics otherwise.
EvalReport train(const ModelConfig& config, const std::vector<Bag>& data, const std::vector<Fold>& folds,
                 const TrainHyper& hyper, const EpochCallback& on_epoch = {});

// Deep copy of parameter values.
ModelParams clone_params(const ModelParams& params);

}  // namespace mambamil
