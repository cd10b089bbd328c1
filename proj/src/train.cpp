#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

#include "mambamil/errors.hpp"
#include "mambamil/ops.hpp"
#include "mambamil/rng.hpp"
#include "mambamil/train.hpp"

namespace mambamil {

ModelParams clone_params(const ModelParams& params) {
  ModelParams copy = params;
  visit_parameters(copy, [](Tensor& t) { t = t.detach(); });
  return copy;
}

namespace {

Tensor bag_loss(const ModelConfig& config, const Tensor& logits, const Bag& bag, const std::vector<double>& edges) {
  if (config.task == Task::kSubtype) {
    if (!bag.label) throw ContractError("bag " + bag.id + " has no class label");
    return ce_loss(logits, *bag.label);
  }
  if (!bag.survival) throw ContractError("bag " + bag.id + " has no survival target");
  return survival_nll_loss(logits, survival_bin(bag.survival->time, edges), bag.survival->event);
}

template <typename T>
std::optional<double> try_metric(T&& fn) {
  try {
    return fn();
  } catch (const UndefinedMetricError&) {
    return std::nullopt;
  }
}

std::vector<double> fold_bin_edges(const ModelConfig& config, const std::vector<Bag>& data, const Fold& fold) {
  if (config.task != Task::kSurvival) return {};
  std::vector<double> times;
  std::vector<bool> events;
  for (auto i : fold.train) {
    times.push_back(data[i].survival.value().time);
    events.push_back(data[i].survival->event);
  }
  return survival_bin_edges(times, events, config.num_bins);
}

}  // namespace

Evaluation evaluate(const ModelConfig& config, const ModelParams& params, const std::vector<Bag>& data,
                    const std::vector<std::size_t>& bags, const std::vector<double>& bin_edges, std::size_t workers) {
  const std::size_t n = bags.size();
  std::vector<double> losses(n);
  Evaluation ev;
  ev.outputs.resize(n);
  auto run = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t k = lo; k < hi; ++k) {
      const Bag& bag = data[bags[k]];
      const auto out = model_forward(bag.features, params, config);
      losses[k] = bag_loss(config, out.logits, bag, bin_edges).item();
      ev.outputs[k].assign(out.logits.data().begin(), out.logits.data().end());
    }
  };
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers <= 1) {
    run(0, n);
  } else {
    std::vector<std::jthread> pool;
    const std::size_t per = (n + workers - 1) / workers;
    for (std::size_t lo = 0; lo < n; lo += per) pool.emplace_back(run, lo, std::min(n, lo + per));
  }
  if (n == 0) return ev;
  for (double l : losses) ev.loss += l;
  ev.loss /= static_cast<double>(n);

  if (config.task == Task::kSubtype) {
    std::vector<std::vector<double>> probs;
    std::vector<std::size_t> labels, preds;
    for (std::size_t k = 0; k < n; ++k) {
      probs.emplace_back();
      const Tensor p = softmax(Tensor::vector(ev.outputs[k]), 0);
      probs.back().assign(p.data().begin(), p.data().end());
      labels.push_back(data[bags[k]].label.value());
      preds.push_back(argmax(ev.outputs[k]));
    }
    ev.auc = try_metric([&] { return auc_ovr(probs, labels); });
    ev.acc = accuracy(preds, labels);
  } else {
    std::vector<double> risks, times;
    std::vector<bool> events;
    for (std::size_t k = 0; k < n; ++k) {
      risks.push_back(risk_score(Tensor::vector(ev.outputs[k])));
      times.push_back(data[bags[k]].survival.value().time);
      events.push_back(data[bags[k]].survival->event);
    }
    ev.cindex = try_metric([&] { return c_index(risks, times, events); });
  }
  return ev;
}

EvalReport train(const ModelConfig& config, const std::vector<Bag>& data, const std::vector<Fold>& folds,
                 const TrainHyper& hyper, const EpochCallback& on_epoch) {
  config.validate();
  if (folds.empty()) throw ContractError("train: no folds");
  const std::size_t accum = std::max<std::size_t>(1, hyper.accum_steps);
  EvalReport report;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    const Fold& fold = folds[f];
    if (fold.train.empty() || fold.val.empty()) throw ContractError("train: fold " + std::to_string(f) + " is empty");
    const auto edges = fold_bin_edges(config, data, fold);
    ModelParams params = init_model(config, hyper.seed + 1000003ULL * f);
    std::vector<Tensor> leaves = params.parameters();
    for (auto& t : leaves) t.set_requires_grad(true);
    OptimState opt = make_optim_state(leaves, hyper.adam);
    Rng order_rng(hyper.seed ^ (0x5851f42d4c957f2dULL * (f + 1)));

    FoldResult result;
    result.bin_edges = edges;
    double best_loss = std::numeric_limits<double>::infinity();
    Evaluation best_eval;
    std::size_t since_best = 0;
    for (std::size_t epoch = 1; epoch <= hyper.epochs; ++epoch) {
      std::vector<std::size_t> order = fold.train;
      order_rng.shuffle(order);
      double train_loss = 0.0;
      for (std::size_t s = 0; s < order.size(); ++s) {
        const Bag& bag = data[order[s]];
        Tape tape;
        double value = 0.0;
        {
          TapeScope scope(tape);
          const auto out = model_forward(bag.features, params, config);
          Tensor loss = bag_loss(config, out.logits, bag, edges);
          value = loss.item();
          if (!std::isfinite(value)) {
            throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + " on bag " + bag.id, int(epoch),
                                bag.id);
          }
          if (accum > 1) loss = scale(loss, 1.0 / static_cast<double>(accum));
          backward(loss, tape);
        }
        train_loss += value;
        if ((s + 1) % accum == 0 || s + 1 == order.size()) {
          adam_step(leaves, opt);
          for (auto& t : leaves) t.zero_grad();
        }
      }
      EpochRecord rec;
      rec.epoch = epoch;
      rec.train_loss = train_loss / static_cast<double>(order.size());
      Evaluation val = evaluate(config, params, data, fold.val, edges, hyper.workers);
      if (!std::isfinite(val.loss)) {
        throw TrainingError("non-finite validation loss at epoch " + std::to_string(epoch), int(epoch), "");
      }
      rec.val_loss = val.loss;
      rec.val_auc = val.auc;
      rec.val_acc = val.acc;
      rec.val_cindex = val.cindex;
      result.history.push_back(rec);
      if (on_epoch) on_epoch(f, rec);
      if (val.loss < best_loss) {
        best_loss = val.loss;
        best_eval = std::move(val);
        result.best_epoch = epoch;
        result.params = clone_params(params);
        since_best = 0;
      } else if (hyper.patience > 0 && ++since_best >= hyper.patience) {
        break;
      }
    }
    if (!fold.test.empty()) {
      best_eval = evaluate(config, result.params, data, fold.test, edges, hyper.workers);
    }
    result.auc = best_eval.auc;
    result.acc = best_eval.acc;
    result.cindex = best_eval.cindex;
    report.folds.push_back(std::move(result));
  }

  auto aggregate = [&](auto member) -> std::optional<MeanStd> {
    std::vector<double> vals;
    for (const auto& fr : report.folds)
      if ((fr.*member).has_value()) vals.push_back(*(fr.*member));
    if (vals.empty()) return std::nullopt;
    return mean_std(vals);
  };
  report.auc = aggregate(&FoldResult::auc);
  report.acc = aggregate(&FoldResult::acc);
  report.cindex = aggregate(&FoldResult::cindex);
  return report;
}

}  // namespace mambamil
