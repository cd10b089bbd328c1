#include "options.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

#include "mambamil/errors.hpp"

namespace mambamil::cli {

SynthConfig SynthOptions::to_config(Task task) const {
  SynthConfig c;
  c.n_bags = n_bags;
  c.min_len = min_len;
  c.max_len = max_len;
  c.input_dim = input_dim;
  c.k_pos = k_pos;
  c.shift = shift;
  c.seed = seed;
  c.task = task;
  return c;
}

void add_config_file(CLI::App& app) {
  // Only listed for --help; expand_config consumes the flag before parsing.
  app.add_option("--config", "flat key=value file; flags override its values");
}

std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::vector<std::string> files;
  for (std::size_t i = 0; i < args.size();) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      files.push_back(args[i + 1]);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
    } else if (args[i].rfind("--config=", 0) == 0) {
      files.push_back(args[i].substr(9));
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
    } else {
      ++i;
    }
  }
  if (files.empty()) return args;
  if (args.empty()) throw ContractError("--config needs a subcommand");

  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
  };
  std::vector<std::string> expanded;
  for (const auto& file : files) {
    std::ifstream in(file);
    if (!in) throw FormatError(FormatError::Kind::kIo, "cannot open config file " + file);
    std::string line;
    for (std::size_t no = 1; std::getline(in, line); ++no) {
      line = trim(line.substr(0, line.find('#')));
      if (line.empty()) continue;
      const auto eq = line.find('=');
      const std::string key = eq == std::string::npos ? "" : trim(line.substr(0, eq));
      if (key.empty()) throw ContractError(file + ":" + std::to_string(no) + ": expected key=value");
      expanded.push_back("--" + key);
      expanded.push_back(trim(line.substr(eq + 1)));
    }
  }
  args.insert(args.begin() + 1, expanded.begin(), expanded.end());
  return args;
}

void add_synth_options(CLI::App& app, SynthOptions& o) {
  const char* g = "Synthetic data";
  app.add_option("--n_bags", o.n_bags, "number of bags")->group(g)->capture_default_str();
  app.add_option("--min_len", o.min_len, "shortest bag")->group(g)->capture_default_str();
  app.add_option("--max_len", o.max_len, "longest bag")->group(g)->capture_default_str();
  app.add_option("--input_dim", o.input_dim, "instance feature width")->group(g)->capture_default_str();
  app.add_option("--k_pos", o.k_pos, "positive instances per positive bag")->group(g)->capture_default_str();
  app.add_option("--shift", o.shift, "mean shift of positive instances")->group(g)->capture_default_str();
  app.add_option("--synth_seed", o.seed, "generator seed")->group(g)->capture_default_str();
}

void add_model_options(CLI::App& app, ModelOptions& o) {
  const char* g = "Model";
  app.add_option("--model_dim", o.model_dim, "width D after projection")->group(g)->capture_default_str();
  app.add_option("--expand", o.expand, "inner width factor, E = expand * D")->group(g)->capture_default_str();
  app.add_option("--n_state", o.n_state, "SSM state size")->group(g)->capture_default_str();
  app.add_option("--n_layers", o.n_layers, "stacked blocks")->group(g)->capture_default_str();
  app.add_option("--segment", o.segment, "segment size R for reordering")->group(g)->capture_default_str();
  app.add_option("--conv_k", o.conv_k, "causal conv width")->group(g)->capture_default_str();
  app.add_option("--dt_rank", o.dt_rank, "rank of the step projection, 0 = ceil(D/16)")->group(g)->capture_default_str();
  app.add_option("--d_skip", o.d_skip, "include the D skip term")->group(g)->capture_default_str();
  app.add_option("--variant", o.variant, "sr, vanilla or bi")
      ->check(CLI::IsMember({"sr", "vanilla", "bi"}))
      ->group(g)
      ->capture_default_str();
  app.add_option("--attn_hidden", o.attn_hidden, "attention pooling width")->group(g)->capture_default_str();
  app.add_option("--final_norm", o.final_norm, "layer norm before pooling")->group(g)->capture_default_str();
  app.add_option("--num_bins", o.num_bins, "survival time bins")->group(g)->capture_default_str();
}

void add_hyper_options(CLI::App& app, HyperOptions& o) {
  const char* g = "Training";
  app.add_option("--lr", o.lr, "Adam learning rate")->group(g)->capture_default_str();
  app.add_option("--wd", o.wd, "decoupled weight decay")->group(g)->capture_default_str();
  app.add_option("--epochs", o.epochs, "epoch budget per fold")->group(g)->capture_default_str();
  app.add_option("--patience", o.patience, "early-stop patience on val loss, 0 disables")->group(g)->capture_default_str();
  app.add_option("--seed", o.seed, "initialization and shuffling seed")->group(g)->capture_default_str();
  app.add_option("--accum_steps", o.accum_steps, "bags per optimizer step")->group(g)->capture_default_str();
}

void add_split_options(CLI::App& app, SplitOptions& o) {
  const char* g = "Splits";
  app.add_option("--split", o.split, "kfold or mc (8:1:1 Monte Carlo)")
      ->check(CLI::IsMember({"kfold", "mc"}))
      ->group(g)
      ->capture_default_str();
  app.add_option("--folds", o.folds, "folds or Monte Carlo draws")->group(g)->capture_default_str();
  app.add_option("--split_seed", o.split_seed, "split seed")->group(g)->capture_default_str();
}

namespace {

struct Preset {
  double lr;
  std::size_t segment;
};

const std::map<std::string, Preset>& presets() {
  static const std::map<std::string, Preset> table = {
      {"blca", {2e-4, 5}},  {"brca", {2e-5, 5}},  {"coadread", {2e-5, 10}}, {"kirc", {2e-4, 10}}, {"kirp", {2e-4, 10}},
      {"luad", {2e-4, 5}},  {"stad", {2e-4, 5}},  {"bracs", {1e-5, 10}},    {"nsclc", {2e-5, 5}},
  };
  return table;
}

}  // namespace

void apply_preset(CLI::App& app, RunOptions& o) {
  if (o.preset.empty()) return;
  std::string key = o.preset;
  std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
  const auto it = presets().find(key);
  if (it == presets().end()) throw ContractError("unknown preset '" + o.preset + "'");
  if (app.count("--lr") == 0) o.hyper.lr = it->second.lr;
  if (app.count("--segment") == 0) o.model.segment = it->second.segment;
}

ModelConfig model_config(const ModelOptions& o, Task task, std::size_t input_dim, std::size_t num_classes) {
  ModelConfig c;
  c.input_dim = input_dim;
  c.n_layers = o.n_layers;
  c.block.d_model = o.model_dim;
  c.block.expand = o.expand;
  c.block.n_state = o.n_state;
  c.block.segment = o.segment;
  c.block.conv_k = o.conv_k;
  c.block.dt_rank = o.dt_rank;
  c.block.d_skip = o.d_skip;
  c.block.variant = parse_variant(o.variant);
  c.task = task;
  c.num_classes = num_classes;
  c.num_bins = o.num_bins;
  c.attn_hidden = o.attn_hidden;
  c.final_norm = o.final_norm;
  c.validate();
  return c;
}

TrainHyper train_hyper(const HyperOptions& o, std::size_t workers) {
  TrainHyper h;
  h.adam.lr = o.lr;
  h.adam.weight_decay = o.wd;
  h.epochs = o.epochs;
  h.patience = o.patience;
  h.seed = o.seed;
  h.accum_steps = o.accum_steps;
  h.workers = workers;
  return h;
}

SplitSpec split_spec(const SplitOptions& o) {
  SplitSpec s;
  s.scheme = o.split == "mc" ? SplitScheme::kMonteCarlo : SplitScheme::kKFold;
  s.n = o.folds;
  s.seed = o.split_seed;
  return s;
}

}  // namespace mambamil::cli
