#include <algorithm>
#include <cstdio>
#include <exception>
#include <filesystem>

#include "mambamil/errors.hpp"
#include "options.hpp"

using namespace mambamil;
using namespace mambamil::cli;

int main(int argc, char** argv) {
  CLI::App app{"MambaMIL: selective state-space multiple instance learning"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  RunOptions synth_opts;
  auto* synth = app.add_subcommand("synth", "write a synthetic scattered-positive dataset");
  add_config_file(*synth);
  synth->add_option("--out", synth_opts.out, "output directory")->capture_default_str();
  synth->add_option("--task", synth_opts.task, "subtype or survival")
      ->check(CLI::IsMember({"subtype", "survival"}))
      ->capture_default_str();
  add_synth_options(*synth, synth_opts.synth);

  RunOptions train_opts;
  auto* train = app.add_subcommand("train", "cross-validated training and evaluation");
  add_config_file(*train);
  train->add_option("--manifest", train_opts.manifest, "dataset manifest; synthesizes in memory when absent");
  train->add_option("--out", train_opts.out, "output directory")->capture_default_str();
  train->add_option("--task", train_opts.task, "task for synthetic data: subtype or survival")
      ->check(CLI::IsMember({"subtype", "survival"}))
      ->capture_default_str();
  train->add_option("--workers", train_opts.workers, "evaluation threads")->check(CLI::PositiveNumber)->capture_default_str();
  train->add_option("--preset", train_opts.preset, "dataset preset setting lr and segment size");
  add_synth_options(*train, train_opts.synth);
  add_model_options(*train, train_opts.model);
  add_hyper_options(*train, train_opts.hyper);
  add_split_options(*train, train_opts.split);

  std::filesystem::path eval_ckpt, eval_manifest, eval_out = "out";
  std::size_t eval_workers = 1;
  auto* eval = app.add_subcommand("eval", "score a manifest with a saved checkpoint");
  add_config_file(*eval);
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint written by train")->required();
  eval->add_option("--manifest", eval_manifest, "dataset manifest")->required();
  eval->add_option("--out", eval_out, "output directory")->capture_default_str();
  eval->add_option("--workers", eval_workers, "evaluation threads")->check(CLI::PositiveNumber)->capture_default_str();

  std::string fault;
  auto* verify = app.add_subcommand("verify", "run the kernel and gradient verification suites");
  verify->add_option("--inject-fault", fault)->group("");

  BenchOptions bench_opts;
  auto* bench = app.add_subcommand("bench-scan", "time block inference and the affine scan against length");
  add_config_file(*bench);
  bench->add_option("--lengths", bench_opts.lengths, "comma-separated ascending lengths");
  bench->add_option("--min_log2", bench_opts.min_log2, "smallest length as a power of two")->capture_default_str();
  bench->add_option("--max_log2", bench_opts.max_log2, "largest length as a power of two")->capture_default_str();
  bench->add_option("--mode", bench_opts.mode, "block or scan")
      ->check(CLI::IsMember({"block", "scan"}))
      ->capture_default_str();
  bench->add_option("--model_dim", bench_opts.model_dim, "block width")->capture_default_str();
  bench->add_option("--n_state", bench_opts.n_state, "SSM state size")->capture_default_str();
  bench->add_option("--segment", bench_opts.segment, "segment size")->capture_default_str();
  bench->add_option("--repeats", bench_opts.repeats, "timed samples per length, the fastest is kept")->capture_default_str();
  bench->add_option("--workers", bench_opts.workers, "threads for the parallel scan")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  bench->add_option("--seed", bench_opts.seed, "input seed")->capture_default_str();
  bench->add_option("--out", bench_opts.out, "output directory")->capture_default_str();

  try {
    auto args = expand_config(argc, argv);
    std::reverse(args.begin(), args.end());
    app.parse(std::move(args));
  } catch (const ContractError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*synth) return cmd_synth(synth_opts);
    if (*train) {
      apply_preset(*train, train_opts);
      return cmd_train(train_opts);
    }
    if (*eval) return cmd_eval(eval_ckpt, eval_manifest, eval_out, eval_workers);
    if (*verify) return cmd_verify(fault);
    if (*bench) return cmd_bench_scan(bench_opts);
  } catch (const ContractError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const TrainingError& e) {
    std::fprintf(stderr, "training aborted: %s\n", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  }
  return kExitUsage;
}
