#include <algorithm>
#include <cmath>
#include <map>

#include "mambamil/data.hpp"
#include "mambamil/errors.hpp"
#include "mambamil/rng.hpp"

namespace mambamil {

std::vector<std::size_t> strata_for(const std::vector<Bag>& bags) {
  std::vector<std::size_t> s;
  s.reserve(bags.size());
  for (const auto& b : bags) {
    if (b.label) {
      s.push_back(*b.label);
    } else if (b.survival) {
      s.push_back(b.survival->event ? 1 : 0);
    } else {
      throw ContractError("bag " + b.id + " has no target");
    }
  }
  return s;
}

namespace {

// Members of every stratum, each shuffled, concatenated in ascending stratum order.
std::vector<std::size_t> stratified_order(const std::vector<std::size_t>& strata, Rng& rng) {
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < strata.size(); ++i) groups[strata[i]].push_back(i);
  std::vector<std::size_t> order;
  order.reserve(strata.size());
  for (auto& [key, members] : groups) {
    rng.shuffle(members);
    order.insert(order.end(), members.begin(), members.end());
  }
  return order;
}

void check_strata(const std::vector<std::size_t>& strata, std::size_t min_count, const char* scheme) {
  std::map<std::size_t, std::size_t> counts;
  for (auto s : strata) ++counts[s];
  for (auto [key, count] : counts) {
    if (count < min_count) {
      throw StratificationError(std::string(scheme) + " split: stratum " + std::to_string(key) + " has " +
                                std::to_string(count) + " samples, need at least " + std::to_string(min_count));
    }
  }
}

std::uint64_t draw_seed(std::uint64_t seed, std::size_t draw) {
  return seed ^ (0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(draw) + 1));
}

}  // namespace

std::vector<Fold> make_splits(std::size_t n_samples, const std::vector<std::size_t>& strata, const SplitSpec& spec) {
  if (strata.size() != n_samples) throw DimensionError("make_splits: strata length differs from sample count");
  std::vector<Fold> folds;
  if (spec.scheme == SplitScheme::kKFold) {
    const std::size_t k = spec.n;
    if (k < 2) throw ContractError("k-fold split needs at least 2 folds");
    check_strata(strata, k, "k-fold");
    Rng rng(spec.seed);
    const auto order = stratified_order(strata, rng);
    folds.resize(k);
    for (std::size_t p = 0; p < order.size(); ++p) {
      for (std::size_t f = 0; f < k; ++f) (f == p % k ? folds[f].val : folds[f].train).push_back(order[p]);
    }
  } else {
    if (spec.n < 1) throw ContractError("Monte Carlo split needs at least 1 draw");
    if (n_samples < 10) throw StratificationError("Monte Carlo 8:1:1 split needs at least 10 samples");
    check_strata(strata, 2, "Monte Carlo");
    // Slot pattern per run of ten positions; keeps each subset within one
    // sample of the exact 8:1:1 share for any n.
    static constexpr char kPattern[10] = {'T', 'T', 'T', 'T', 'V', 'T', 'T', 'T', 'T', 'S'};
    for (std::size_t d = 0; d < spec.n; ++d) {
      Rng rng(draw_seed(spec.seed, d));
      const auto order = stratified_order(strata, rng);
      Fold fold;
      for (std::size_t p = 0; p < order.size(); ++p) {
        switch (kPattern[p % 10]) {
          case 'T': fold.train.push_back(order[p]); break;
          case 'V': fold.val.push_back(order[p]); break;
          default: fold.test.push_back(order[p]); break;
        }
      }
      folds.push_back(std::move(fold));
    }
  }
  for (auto& f : folds) {
    std::sort(f.train.begin(), f.train.end());
    std::sort(f.val.begin(), f.val.end());
    std::sort(f.test.begin(), f.test.end());
  }
  return folds;
}

std::vector<double> survival_bin_edges(const std::vector<double>& times, const std::vector<bool>& events,
                                       std::size_t bins) {
  if (times.size() != events.size()) throw DimensionError("survival_bin_edges: times and events differ in length");
  if (bins < 1) throw ContractError("survival_bin_edges: need at least one bin");
  std::vector<double> pool;
  for (std::size_t i = 0; i < times.size(); ++i)
    if (events[i]) pool.push_back(times[i]);
  if (pool.empty()) pool = times;
  if (pool.empty()) throw ContractError("survival_bin_edges: no training times");
  std::sort(pool.begin(), pool.end());
  std::vector<double> edges;
  for (std::size_t k = 1; k < bins; ++k) {
    // linear interpolation between order statistics
    const double pos = static_cast<double>(k) / static_cast<double>(bins) * static_cast<double>(pool.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, pool.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    edges.push_back(pool[lo] + frac * (pool[hi] - pool[lo]));
  }
  return edges;
}

std::size_t survival_bin(double time, const std::vector<double>& edges) {
  std::size_t bin = 0;
  for (double e : edges)
    if (time > e) ++bin;
  return bin;
}

}  // namespace mambamil
