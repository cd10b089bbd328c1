#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "mambamil/checkpoint.hpp"
#include "mambamil/errors.hpp"
#include "mambamil/verify.hpp"
#include "options.hpp"

namespace mambamil::cli {

namespace fs = std::filesystem;

namespace {

std::string fmt(std::optional<double> v) {
  if (!v) return "";
  std::ostringstream os;
  os << std::setprecision(10) << *v;
  return os.str();
}

std::string fmt(double v) { return fmt(std::optional<double>(v)); }

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw FormatError(FormatError::Kind::kIo, "cannot open " + path.string() + " for writing");
  return f;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw FormatError(FormatError::Kind::kIo, "cannot create output directory " + dir.string() + ": " + ec.message());
  }
}

std::size_t infer_classes(const std::vector<Bag>& bags) {
  std::size_t k = 2;
  for (const auto& b : bags)
    if (b.label) k = std::max(k, *b.label + 1);
  return k;
}

void oracle_report(const SynthDataset& ds, std::size_t k_pos, Task task) {
  if (task == Task::kSubtype) {
    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& b : ds.bags) {
      scores.push_back(max_projection(b.features, ds.direction));
      labels.push_back(static_cast<int>(*b.label));
    }
    std::printf("oracle auc (max projection on the true direction): %.6f\n", auc(scores, labels));
  } else {
    std::vector<double> risks, times;
    std::vector<bool> events;
    for (const auto& b : ds.bags) {
      risks.push_back(top_k_mean_projection(b.features, ds.direction, k_pos));
      times.push_back(b.survival->time);
      events.push_back(b.survival->event);
    }
    std::printf("oracle c-index (top-%zu mean projection): %.6f\n", k_pos, c_index(risks, times, events));
  }
}

std::string pm(const std::optional<MeanStd>& m) {
  if (!m) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f±%.3f", m->mean, m->std);
  return buf;
}

}  // namespace

int cmd_synth(const RunOptions& o) {
  const Task task = parse_task(o.task);
  const SynthDataset ds = synth_bags(o.synth.to_config(task));
  ensure_dir(o.out / "features");
  Manifest m;
  m.task = task;
  m.base_dir = o.out;
  for (const auto& b : ds.bags) {
    const std::string rel = "features/" + b.id + ".mmf";
    write_feature_file(o.out / rel, b.features);
    m.records.push_back({b.id, rel, b.label, b.survival});
  }
  write_manifest(o.out / "manifest.csv", m);
  std::printf("wrote %zu bags to %s\n", ds.bags.size(), (o.out / "manifest.csv").string().c_str());
  oracle_report(ds, o.synth.k_pos, task);
  return kExitOk;
}

int cmd_train(const RunOptions& o) {
  std::vector<Bag> bags;
  Task task = parse_task(o.task);
  if (o.manifest.empty()) {
    const SynthDataset ds = synth_bags(o.synth.to_config(task));
    bags = ds.bags;
    std::printf("training on %zu synthetic bags\n", bags.size());
    oracle_report(ds, o.synth.k_pos, task);
  } else {
    const Manifest m = read_manifest(o.manifest);
    task = m.task;
    bags = load_bags(m);
    std::printf("training on %zu bags from %s\n", bags.size(), o.manifest.string().c_str());
  }
  if (bags.empty()) throw FormatError(FormatError::Kind::kManifest, "no bags to train on");
  const ModelConfig config = model_config(o.model, task, bags.front().features.dim(1), infer_classes(bags));
  const TrainHyper hyper = train_hyper(o.hyper, o.workers);
  const auto folds = make_splits(bags.size(), strata_for(bags), split_spec(o.split));
  ensure_dir(o.out);

  std::vector<std::ofstream> histories;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    histories.push_back(open_out(o.out / ("fold" + std::to_string(f) + "_history.csv")));
    histories.back() << "epoch,train_loss,val_loss,val_auc,val_acc" << (task == Task::kSurvival ? ",val_cindex" : "")
                     << '\n';
  }
  auto on_epoch = [&](std::size_t fold, const EpochRecord& r) {
    auto& h = histories[fold];
    h << r.epoch << ',' << fmt(r.train_loss) << ',' << fmt(r.val_loss) << ',' << fmt(r.val_auc) << ','
      << fmt(r.val_acc);
    if (task == Task::kSurvival) h << ',' << fmt(r.val_cindex);
    h << '\n';
    h.flush();
    std::printf("fold %zu epoch %3zu  train %.4f  val %.4f", fold, r.epoch, r.train_loss, r.val_loss);
    if (r.val_auc) std::printf("  auc %.4f", *r.val_auc);
    if (r.val_acc) std::printf("  acc %.4f", *r.val_acc);
    if (r.val_cindex) std::printf("  c-index %.4f", *r.val_cindex);
    std::printf("\n");
    std::fflush(stdout);
  };
  const EvalReport report = train(config, bags, folds, hyper, on_epoch);

  auto summary = open_out(o.out / "summary.csv");
  summary << "fold,auc,acc,cindex\n";
  for (std::size_t f = 0; f < report.folds.size(); ++f) {
    const auto& r = report.folds[f];
    summary << f << ',' << fmt(r.auc) << ',' << fmt(r.acc) << ',' << fmt(r.cindex) << '\n';
    save_checkpoint(o.out / ("fold" + std::to_string(f) + ".ckpt"), {config, r.params, r.bin_edges});
  }
  auto field = [](const std::optional<MeanStd>& m, bool mean) -> std::string {
    return m ? fmt(mean ? m->mean : m->std) : "";
  };
  summary << "mean," << field(report.auc, true) << ',' << field(report.acc, true) << ',' << field(report.cindex, true)
          << '\n';
  summary << "std," << field(report.auc, false) << ',' << field(report.acc, false) << ','
          << field(report.cindex, false) << '\n';
  if (!summary) throw FormatError(FormatError::Kind::kIo, "write failed for " + (o.out / "summary.csv").string());

  if (task == Task::kSubtype) {
    std::printf("variant %s  AUC %s  ACC %s\n", o.model.variant.c_str(), pm(report.auc).c_str(), pm(report.acc).c_str());
  } else {
    std::printf("variant %s  C-index %s\n", o.model.variant.c_str(), pm(report.cindex).c_str());
  }
  return kExitOk;
}

int cmd_eval(const fs::path& checkpoint, const fs::path& manifest, const fs::path& out, std::size_t workers) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const Manifest m = read_manifest(manifest);
  if (m.task != ckpt.config.task) {
    throw FormatError(FormatError::Kind::kManifest, "manifest task " + to_string(m.task) +
                                                        " does not match checkpoint task " + to_string(ckpt.config.task));
  }
  const auto bags = load_bags(m);
  std::vector<std::size_t> all(bags.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const Evaluation ev = evaluate(ckpt.config, ckpt.params, bags, all, ckpt.bin_edges, workers);

  ensure_dir(out);
  auto pred = open_out(out / "predictions.csv");
  pred << "id";
  for (std::size_t k = 0; k < ckpt.config.num_outputs(); ++k) pred << ",logit" << k;
  pred << '\n';
  for (std::size_t i = 0; i < bags.size(); ++i) {
    pred << bags[i].id;
    for (double v : ev.outputs[i]) pred << ',' << fmt(v);
    pred << '\n';
  }
  auto summary = open_out(out / "summary.csv");
  summary << "fold,auc,acc,cindex\n"
          << "0," << fmt(ev.auc) << ',' << fmt(ev.acc) << ',' << fmt(ev.cindex) << '\n'
          << "mean," << fmt(ev.auc) << ',' << fmt(ev.acc) << ',' << fmt(ev.cindex) << '\n'
          << "std," << (ev.auc ? "0" : "") << ',' << (ev.acc ? "0" : "") << ',' << (ev.cindex ? "0" : "") << '\n';
  std::printf("loss %.6f", ev.loss);
  if (ev.auc) std::printf("  auc %.4f", *ev.auc);
  if (ev.acc) std::printf("  acc %.4f", *ev.acc);
  if (ev.cindex) std::printf("  c-index %.4f", *ev.cindex);
  std::printf("\n");
  return kExitOk;
}

int cmd_verify(const std::string& inject_fault) {
  VerifyOptions opts;
  if (inject_fault == "bbar-sign") {
    opts.flip_bbar_sign = true;
  } else if (!inject_fault.empty()) {
    throw ContractError("unknown fault '" + inject_fault + "'");
  }
  bool all = true;
  std::printf("%-20s %-6s %-14s %s\n", "suite", "result", "max_error", "tolerance");
  for (const auto& r : run_all_suites(opts)) {
    all = all && r.passed;
    std::printf("%-20s %-6s %-14.3e %.1e%s%s\n", r.name.c_str(), r.passed ? "pass" : "FAIL", r.max_error, r.tolerance,
                r.detail.empty() ? "" : "  ", r.detail.c_str());
  }
  return all ? kExitOk : kExitVerify;
}

}  // namespace mambamil::cli
