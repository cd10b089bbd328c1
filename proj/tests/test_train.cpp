#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <unistd.h>

#include "mambamil/checkpoint.hpp"
#include "mambamil/errors.hpp"
#include "mambamil/train.hpp"
#include "test_util.hpp"

namespace mambamil {
namespace {

namespace fs = std::filesystem;
using testing::values;

// Direct O(n^2) pair enumeration.
double auc_pairs(const std::vector<double>& s, const std::vector<int>& y) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        den += 1.0;
        num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
  return num / den;
}

TEST(Auc, Examples) {
  EXPECT_EQ(auc({0.9, 0.8, 0.3, 0.2}, {1, 0, 1, 0}), 0.75);
  EXPECT_EQ(auc({0.9, 0.8, 0.3, 0.2}, {1, 1, 0, 0}), 1.0);
  EXPECT_EQ(auc({0.4, 0.4, 0.4, 0.4}, {1, 0, 1, 0}), 0.5);
  EXPECT_THROW(auc({0.1, 0.2}, {1, 1}), UndefinedMetricError);
  EXPECT_THROW(auc({0.1}, {1, 0}), DimensionError);
}

TEST(Auc, MatchesPairEnumerationWithTies) {
  Rng rng(70);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(40);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.below(6));
      y[i] = static_cast<int>(i % 2);
    }
    EXPECT_DOUBLE_EQ(auc(s, y), auc_pairs(s, y));
  }
}

TEST(Auc, InvariantUnderMonotoneTransforms) {
  Rng rng(71);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(50);
    std::vector<double> s(n), t1(n), t2(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = rng.normal();
      y[i] = i < 1 ? 1 : (i < 2 ? 0 : static_cast<int>(rng.below(2)));
      t1[i] = std::exp(3.0 * s[i]);
      t2[i] = std::atan(s[i]) * 7.0 - 2.0;
    }
    const double a = auc(s, y);
    EXPECT_EQ(auc(t1, y), a);
    EXPECT_EQ(auc(t2, y), a);
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, 1.0);
  }
}

TEST(Auc, MacroOneVsRest) {
  const std::vector<std::vector<double>> probs{{0.8, 0.1, 0.1}, {0.1, 0.8, 0.1}, {0.1, 0.1, 0.8}, {0.6, 0.3, 0.1}};
  EXPECT_EQ(auc_ovr(probs, {0, 1, 2, 0}), 1.0);
  // Binary rows reduce to the positive-class AUC.
  const std::vector<std::vector<double>> bin{{0.1, 0.9}, {0.2, 0.8}, {0.7, 0.3}, {0.8, 0.2}};
  EXPECT_EQ(auc_ovr(bin, {1, 0, 1, 0}), auc({0.9, 0.8, 0.3, 0.2}, {1, 0, 1, 0}));
}

TEST(Accuracy, Examples) {
  EXPECT_EQ(accuracy({0, 1, 2}, {0, 1, 2}), 1.0);
  EXPECT_EQ(accuracy({1, 0}, {0, 1}), 0.0);
  EXPECT_EQ(accuracy({1, 1, 0, 0}, {1, 1, 0, 1}), 0.75);
  EXPECT_THROW(accuracy({}, {}), ContractError);
  EXPECT_EQ(argmax({0.3, 0.7, 0.7}), 1u);
}

TEST(CIndex, Examples) {
  EXPECT_EQ(c_index({3, 2, 1}, {1, 2, 3}, {true, true, true}), 1.0);
  EXPECT_EQ(c_index({3, 1, 2}, {1, 2, 3}, {true, true, true}), 2.0 / 3.0);
  EXPECT_THROW(c_index({3, 1, 2}, {1, 2, 3}, {false, false, false}), UndefinedMetricError);
  EXPECT_EQ(c_index({1, 1}, {1, 2}, {true, true}), 0.5);
}

TEST(CIndex, InvariancesAndReversal) {
  Rng rng(72);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 3 + rng.below(40);
    std::vector<double> r(n), t(n), rt(n), neg(n);
    std::vector<bool> e(n);
    for (std::size_t i = 0; i < n; ++i) {
      r[i] = rng.normal();
      t[i] = rng.uniform(0.1, 5.0);
      e[i] = i == 0 || rng.uniform() < 0.7;
      rt[i] = std::exp(r[i]) + 1.0;
      neg[i] = -r[i];
    }
    // Event at the smallest time guarantees a comparable pair.
    t[0] = 0.01;
    const double c = c_index(r, t, e);
    EXPECT_EQ(c_index(rt, t, e), c);
    EXPECT_NEAR(c_index(neg, t, e), 1.0 - c, 1e-15);
    EXPECT_GE(c, 0.0);
    EXPECT_LE(c, 1.0);
  }
}

TEST(MeanStd, SampleStandardDeviation) {
  const auto m = mean_std({1, 2, 3, 4});
  EXPECT_DOUBLE_EQ(m.mean, 2.5);
  EXPECT_DOUBLE_EQ(m.std, std::sqrt(5.0 / 3.0));
  EXPECT_EQ(mean_std({7}).std, 0.0);
}

TEST(Adam, ZeroGradientWithoutDecayLeavesParameters) {
  std::vector<Tensor> p{Tensor::vector({1.5, -2})};
  auto s = make_optim_state(p, {.lr = 0.1, .weight_decay = 0.0});
  for (int i = 0; i < 3; ++i) adam_step(p, s);
  EXPECT_EQ(values(p[0]), (std::vector<double>{1.5, -2}));
}

TEST(Adam, FirstStepIsBiasCorrected) {
  std::vector<Tensor> p{Tensor::scalar(1.0)};
  p[0].set_requires_grad();
  auto s = make_optim_state(p, {.lr = 0.1, .weight_decay = 0.0});
  Tape tape;
  {
    TapeScope scope(tape);
    backward(sum(p[0]), tape);
  }
  adam_step(p, s);
  // m_hat = v_hat = 1 -> step lr / (1 + eps)
  EXPECT_DOUBLE_EQ(p[0].item(), 1.0 - 0.1 / (1.0 + 1e-8));
  EXPECT_NEAR(1.0 - p[0].item(), 0.0999999990, 1e-10);
}

TEST(Adam, DecoupledDecay) {
  std::vector<Tensor> p{Tensor::scalar(1.0)};
  auto s = make_optim_state(p, {.lr = 0.1, .weight_decay = 0.01});
  adam_step(p, s);
  EXPECT_DOUBLE_EQ(p[0].item(), 0.999);
}

SynthConfig small_synth(Task task = Task::kSubtype, std::size_t n = 30) {
  SynthConfig c;
  c.n_bags = n;
  c.min_len = 6;
  c.max_len = 12;
  c.input_dim = 6;
  c.shift = 3.0;
  c.task = task;
  return c;
}

ModelConfig small_model(Task task = Task::kSubtype) {
  ModelConfig c;
  c.input_dim = 6;
  c.n_layers = 1;
  c.block.d_model = 4;
  c.block.n_state = 3;
  c.block.segment = 3;
  c.attn_hidden = 4;
  c.task = task;
  return c;
}

std::vector<std::vector<std::uint64_t>> snapshot(const ModelParams& p) {
  std::vector<std::vector<std::uint64_t>> out;
  for (const auto& [name, t] : p.named_parameters()) {
    out.emplace_back();
    for (double v : t.data()) out.back().push_back(std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

TEST(Train, ZeroLearningRateIsAMetricsOnlyPass) {
  const auto bags = synth_bags(small_synth()).bags;
  const auto folds = make_splits(bags.size(), strata_for(bags), {SplitScheme::kKFold, 5, 0});
  const std::vector<Fold> one{folds[0]};
  TrainHyper h;
  h.adam.lr = 0.0;
  h.adam.weight_decay = 1e-2;
  h.epochs = 3;
  h.patience = 0;
  const auto cfg = small_model();
  const auto r = train(cfg, bags, one, h);
  const auto& hist = r.folds[0].history;
  ASSERT_EQ(hist.size(), 3u);
  for (const auto& e : hist) {
    EXPECT_EQ(e.val_loss, hist[0].val_loss);
    EXPECT_EQ(e.val_auc, hist[0].val_auc);
    EXPECT_EQ(e.val_acc, hist[0].val_acc);
  }
  EXPECT_EQ(snapshot(r.folds[0].params), snapshot(init_model(cfg, h.seed)));
}

TEST(Train, DeterministicGivenSeed) {
  const auto bags = synth_bags(small_synth()).bags;
  const auto folds = make_splits(bags.size(), strata_for(bags), {SplitScheme::kKFold, 5, 0});
  const std::vector<Fold> two{folds[0], folds[1]};
  TrainHyper h;
  h.adam.lr = 5e-3;
  h.epochs = 3;
  const auto cfg = small_model();
  const auto a = train(cfg, bags, two, h);
  h.workers = 3;
  const auto b = train(cfg, bags, two, h);
  for (std::size_t f = 0; f < 2; ++f) {
    ASSERT_EQ(a.folds[f].history.size(), b.folds[f].history.size());
    for (std::size_t e = 0; e < a.folds[f].history.size(); ++e) {
      EXPECT_EQ(a.folds[f].history[e].train_loss, b.folds[f].history[e].train_loss);
      EXPECT_EQ(a.folds[f].history[e].val_loss, b.folds[f].history[e].val_loss);
      EXPECT_EQ(a.folds[f].history[e].val_auc, b.folds[f].history[e].val_auc);
    }
    EXPECT_EQ(snapshot(a.folds[f].params), snapshot(b.folds[f].params));
  }
  EXPECT_EQ(a.auc->mean, b.auc->mean);
}

TEST(Train, LearnsAndReportsTheBestEpoch) {
  const auto bags = synth_bags(small_synth(Task::kSubtype, 40)).bags;
  const auto folds = make_splits(bags.size(), strata_for(bags), {SplitScheme::kKFold, 5, 0});
  TrainHyper h;
  h.adam.lr = 5e-3;
  h.epochs = 6;
  h.patience = 0;
  const auto r = train(small_model(), bags, {folds[0]}, h);
  const auto& fr = r.folds[0];
  ASSERT_EQ(fr.history.size(), 6u);
  EXPECT_LT(fr.history.back().train_loss, fr.history.front().train_loss);
  double best = INFINITY;
  std::size_t best_epoch = 0;
  for (const auto& e : fr.history) {
    if (e.val_loss < best) {
      best = e.val_loss;
      best_epoch = e.epoch;
    }
  }
  EXPECT_EQ(fr.best_epoch, best_epoch);
  EXPECT_EQ(fr.auc, fr.history[best_epoch - 1].val_auc);
  for (std::size_t e = 0; e < fr.history.size(); ++e) EXPECT_EQ(fr.history[e].epoch, e + 1);
}

TEST(Train, EarlyStoppingCutsHistoryShort) {
  const auto bags = synth_bags(small_synth()).bags;
  const auto folds = make_splits(bags.size(), strata_for(bags), {SplitScheme::kKFold, 5, 0});
  TrainHyper h;
  h.adam.lr = 0.0;
  h.epochs = 10;
  h.patience = 2;
  // With a frozen model the first epoch stays best and training stops two epochs later.
  EXPECT_EQ(train(small_model(), bags, {folds[0]}, h).folds[0].history.size(), 3u);
}

TEST(Train, MonteCarloReportsTestMetrics) {
  const auto bags = synth_bags(small_synth(Task::kSubtype, 40)).bags;
  const auto folds = make_splits(bags.size(), strata_for(bags), {SplitScheme::kMonteCarlo, 2, 0});
  TrainHyper h;
  h.adam.lr = 0.0;
  h.epochs = 1;
  const auto cfg = small_model();
  const auto r = train(cfg, bags, folds, h);
  ASSERT_EQ(r.folds.size(), 2u);
  const auto ev = evaluate(cfg, r.folds[0].params, bags, folds[0].test, {}, 1);
  EXPECT_EQ(r.folds[0].acc, ev.acc);
}

TEST(Train, SurvivalBinsComeFromTheTrainingSubsetOnly) {
  const auto bags = synth_bags(small_synth(Task::kSurvival, 40)).bags;
  const auto folds = make_splits(bags.size(), strata_for(bags), {SplitScheme::kKFold, 5, 0});
  TrainHyper h;
  h.adam.lr = 1e-3;
  h.epochs = 2;
  const auto r = train(small_model(Task::kSurvival), bags, {folds[0]}, h);
  std::vector<double> times;
  std::vector<bool> events;
  for (auto i : folds[0].train) {
    times.push_back(bags[i].survival->time);
    events.push_back(bags[i].survival->event);
  }
  EXPECT_EQ(r.folds[0].bin_edges, survival_bin_edges(times, events, 4));
  ASSERT_TRUE(r.folds[0].history[0].val_cindex.has_value());
  EXPECT_FALSE(r.folds[0].history[0].val_auc.has_value());
  EXPECT_TRUE(r.cindex.has_value());
}

TEST(Train, NonFiniteLossAbortsWithTheBag) {
  auto bags = synth_bags(small_synth()).bags;
  std::vector<double> v(bags[4].features.data().begin(), bags[4].features.data().end());
  for (auto& x : v) x = 1e308;
  bags[4].features = Tensor(bags[4].features.shape(), v);
  Fold fold;
  for (std::size_t i = 0; i < bags.size(); ++i) (i < 24 ? fold.train : fold.val).push_back(i);
  TrainHyper h;
  h.epochs = 1;
  try {
    train(small_model(), bags, {fold}, h);
    FAIL() << "expected the run to abort";
  } catch (const TrainingError& e) {
    EXPECT_EQ(e.epoch(), 1);
    EXPECT_EQ(e.bag_id(), bags[4].id);
  }
}

TEST(Evaluate, WorkerCountDoesNotChangeResults) {
  const auto bags = synth_bags(small_synth(Task::kSubtype, 25)).bags;
  const auto cfg = small_model();
  const auto p = init_model(cfg, 8);
  std::vector<std::size_t> all(bags.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const auto a = evaluate(cfg, p, bags, all, {}, 1);
  for (std::size_t w : {2u, 4u, 7u, 64u}) {
    const auto b = evaluate(cfg, p, bags, all, {}, w);
    EXPECT_EQ(a.outputs, b.outputs);
    EXPECT_EQ(a.loss, b.loss);
    EXPECT_EQ(a.auc, b.auc);
  }
}

TEST(Checkpoint, RoundTripsConfigAndParameters) {
  const fs::path dir = fs::temp_directory_path() / ("mambamil_ckpt_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  ModelConfig cfg = small_model(Task::kSurvival);
  cfg.block.variant = Variant::kBi;
  cfg.block.d_skip = false;
  cfg.num_bins = 3;
  const Checkpoint ck{cfg, init_model(cfg, 12), {0.25, 1.0 / 3.0}};
  save_checkpoint(dir / "m.ckpt", ck);
  const Checkpoint back = load_checkpoint(dir / "m.ckpt");
  EXPECT_EQ(back.config.task, Task::kSurvival);
  EXPECT_EQ(back.config.block.variant, Variant::kBi);
  EXPECT_FALSE(back.config.block.d_skip);
  EXPECT_EQ(back.config.num_bins, 3u);
  EXPECT_EQ(back.config.block.segment, cfg.block.segment);
  EXPECT_EQ(back.bin_edges, ck.bin_edges);
  EXPECT_EQ(snapshot(back.params), snapshot(ck.params));

  std::ifstream in(dir / "m.ckpt", std::ios::binary);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), {});
  bytes.resize(bytes.size() - 5);
  std::ofstream(dir / "short.ckpt", std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  EXPECT_THROW(load_checkpoint(dir / "short.ckpt"), FormatError);
  std::ofstream(dir / "junk.ckpt") << "not a checkpoint";
  EXPECT_THROW(load_checkpoint(dir / "junk.ckpt"), FormatError);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace mambamil
