#pragma once

#include <filesystem>
#include <string>

#include "CLI11.hpp"
#include "mambamil/data.hpp"
#include "mambamil/model.hpp"
#include "mambamil/train.hpp"

namespace mambamil::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitVerify = 3;

struct SynthOptions {
  std::size_t n_bags = 200;
  std::size_t min_len = 64;
  std::size_t max_len = 128;
  std::size_t input_dim = 32;
  std::size_t k_pos = 3;
  double shift = 2.0;
  std::uint64_t seed = 7;

  SynthConfig to_config(Task task) const;
};

struct ModelOptions {
  std::size_t model_dim = 256;
  std::size_t expand = 2;
  std::size_t n_state = 16;
  std::size_t n_layers = 2;
  std::size_t segment = 10;
  std::size_t conv_k = 4;
  std::size_t dt_rank = 0;
  bool d_skip = true;
  std::string variant = "sr";
  std::size_t attn_hidden = 128;
  bool final_norm = true;
  std::size_t num_bins = 4;
};

struct HyperOptions {
  double lr = 2e-4;
  double wd = 1e-5;
  std::size_t epochs = 50;
  std::size_t patience = 10;
  std::uint64_t seed = 1;
  std::size_t accum_steps = 1;
};

struct SplitOptions {
  std::string split = "kfold";
  std::size_t folds = 5;
  std::uint64_t split_seed = 0;
};

struct RunOptions {
  std::string task = "subtype";
  std::filesystem::path manifest;
  std::filesystem::path out = "out";
  std::size_t workers = 1;
  std::string preset;
  SynthOptions synth;
  ModelOptions model;
  HyperOptions hyper;
  SplitOptions split;
};

// Registers `--config FILE` (flat key=value, `#` comments) on `app`. Every
// option is also a config key; command-line flags take precedence.
void add_config_file(CLI::App& app);

// Command-line arguments with any `--config FILE` replaced by one `--key value`
// pair per file entry, placed right after the subcommand so that later flags
// win.
std::vector<std::string> expand_config(int argc, char** argv);
void add_synth_options(CLI::App& app, SynthOptions& o);
void add_model_options(CLI::App& app, ModelOptions& o);
void add_hyper_options(CLI::App& app, HyperOptions& o);
void add_split_options(CLI::App& app, SplitOptions& o);

// Per-dataset learning rate and segment size. Values already given on the
// command line or in the config file are kept.
void apply_preset(CLI::App& app, RunOptions& o);

ModelConfig model_config(const ModelOptions& o, Task task, std::size_t input_dim, std::size_t num_classes);
TrainHyper train_hyper(const HyperOptions& o, std::size_t workers);
SplitSpec split_spec(const SplitOptions& o);

int cmd_synth(const RunOptions& o);
int cmd_train(const RunOptions& o);
int cmd_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& manifest,
             const std::filesystem::path& out, std::size_t workers);
int cmd_verify(const std::string& inject_fault);

struct BenchOptions {
  std::string lengths;  // comma separated; empty means 2^min_log2 .. 2^max_log2
  std::size_t min_log2 = 12;
  std::size_t max_log2 = 17;
  std::string mode = "block";
  std::size_t model_dim = 16;
  std::size_t n_state = 16;
  std::size_t segment = 10;
  std::size_t repeats = 3;
  std::size_t workers = 4;
  std::uint64_t seed = 3;
  std::filesystem::path out = "out";
};
int cmd_bench_scan(const BenchOptions& o);

}  // namespace mambamil::cli
