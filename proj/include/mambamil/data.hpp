#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mambamil/model.hpp"
#include "mambamil/tensor.hpp"

namespace mambamil {

struct SurvivalTarget {
  double time = 0.0;
  bool event = false;
};

// One slide: the instance-feature matrix [L, D_in] and its supervision.
struct Bag {
  std::string id;
  Tensor features;
  std::optional<std::size_t> label;        // subtyping
  std::optional<SurvivalTarget> survival;  // survival
};

// ---------------------------------------------------------------------------
// MMF1 feature files
//
//   offset  size     field
//   0       4        magic "MMF1"
//   4       2        version, u16 LE = 1
//   6       4        L (rows), u32 LE
//   10      4        D (columns), u32 LE
//   14      8*L*D    row-major float64 LE payload
//   ...     4        optional CRC-32 (zlib polynomial) of the payload bytes, u32 LE
// ---------------------------------------------------------------------------

inline constexpr char kFeatureMagic[4] = {'M', 'M', 'F', '1'};
inline constexpr std::uint16_t kFeatureVersion = 1;
inline constexpr std::size_t kFeatureHeaderSize = 14;

std::vector<unsigned char> encode_features(const Tensor& features, bool with_crc = true);
Tensor decode_features(const std::vector<unsigned char>& bytes, const std::string& origin = "<memory>");

void write_feature_file(const std::filesystem::path& path, const Tensor& features, bool with_crc = true);
Tensor read_feature_file(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Manifests: UTF-8 CSV with header `id,path,label` or `id,path,time,event`.
// Relative paths resolve against the manifest's directory.
// ---------------------------------------------------------------------------

struct ManifestRecord {
  std::string id;
  std::string path;
  std::optional<std::size_t> label;
  std::optional<SurvivalTarget> survival;
};

struct Manifest {
  Task task = Task::kSubtype;
  std::filesystem::path base_dir;
  std::vector<ManifestRecord> records;
};

Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
// Loads every referenced feature file.
std::vector<Bag> load_bags(const Manifest& manifest);

bool valid_bag_id(const std::string& id);

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

enum class SplitScheme { kKFold, kMonteCarlo };

struct SplitSpec {
  SplitScheme scheme = SplitScheme::kKFold;
  // Fold count for k-fold (train:val = (n-1):1), draw count for Monte Carlo (8:1:1).
  std::size_t n = 5;
  std::uint64_t seed = 0;
};

struct Fold {
  std::vector<std::size_t> train, val, test;  // indices into the dataset
};

// Stratum key per sample: class label for subtyping, event flag for survival.
std::vector<std::size_t> strata_for(const std::vector<Bag>& bags);

std::vector<Fold> make_splits(std::size_t n_samples, const std::vector<std::size_t>& strata, const SplitSpec& spec);

// Quartile cut points of training event times (all training times if the fold
// has no events). Bin k covers (edge[k-1], edge[k]].
std::vector<double> survival_bin_edges(const std::vector<double>& times, const std::vector<bool>& events,
                                       std::size_t bins = 4);
std::size_t survival_bin(double time, const std::vector<double>& edges);

// ---------------------------------------------------------------------------
// Synthetic scattered-positive bags
// ---------------------------------------------------------------------------

struct SynthConfig {
  std::size_t n_bags = 200;
  std::size_t min_len = 64;
  std::size_t max_len = 128;
  std::size_t input_dim = 32;
  std::size_t k_pos = 3;
  double shift = 2.0;
  std::uint64_t seed = 7;
  Task task = Task::kSubtype;
};

struct SynthDataset {
  std::vector<Bag> bags;
  std::vector<double> direction;  // unit vector the positive instances are shifted along
  // Subtyping: which instances of each bag are positive. Survival: latent severity per bag.
  std::vector<std::vector<std::size_t>> positives;
  std::vector<double> severity;
};

// Subtyping: labels alternate 1, 0 so the classes are balanced; negatives hold
// only N(0, I) instances, positives hold k_pos instances drawn from
// N(shift * u, I) at distinct random positions.
//
// Survival: every bag carries k_pos instances shifted by shift * (1 + 2 s)
// along u for a latent severity s ~ U(0, 1); times are exp(-2 s + noise) and
// about one bag in four is censored at a uniformly earlier time.
SynthDataset synth_bags(const SynthConfig& config);

// Generator-side oracles that use the true direction.
double max_projection(const Tensor& features, const std::vector<double>& direction);
double top_k_mean_projection(const Tensor& features, const std::vector<double>& direction, std::size_t k);

}  // namespace mambamil
