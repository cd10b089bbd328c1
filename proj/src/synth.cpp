#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "mambamil/data.hpp"
#include "mambamil/errors.hpp"
#include "mambamil/rng.hpp"

namespace mambamil {

namespace {

std::string bag_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "bag_%04zu", i);
  return buf;
}

std::vector<double> random_unit(std::size_t dim, Rng& rng) {
  std::vector<double> u(dim);
  double norm = 0.0;
  while (norm < 1e-6) {
    norm = 0.0;
    for (auto& v : u) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
  }
  for (auto& v : u) v /= norm;
  return u;
}

}  // namespace

SynthDataset synth_bags(const SynthConfig& c) {
  if (c.n_bags < 1 || c.input_dim < 1 || c.min_len < 1 || c.max_len < c.min_len) {
    throw ContractError("synth config: need n_bags >= 1, input_dim >= 1 and 1 <= min_len <= max_len");
  }
  if (c.k_pos < 1) throw ContractError("synth config: k_pos must be at least 1");
  Rng rng(c.seed);
  SynthDataset ds;
  ds.direction = random_unit(c.input_dim, rng);
  for (std::size_t i = 0; i < c.n_bags; ++i) {
    const std::size_t len = c.min_len + rng.below(c.max_len - c.min_len + 1);
    std::vector<double> x(len * c.input_dim);
    for (auto& v : x) v = rng.normal();

    bool carries_signal = true;
    double amplitude = c.shift;
    Bag bag;
    bag.id = bag_id(i);
    if (c.task == Task::kSubtype) {
      carries_signal = i % 2 == 0;
      bag.label = carries_signal ? 1 : 0;
    } else {
      const double s = rng.uniform();
      ds.severity.push_back(s);
      amplitude = c.shift * (1.0 + 2.0 * s);
      const double time = std::exp(-2.0 * s + 0.1 * rng.normal());
      const bool censored = rng.uniform() < 0.25;
      bag.survival = SurvivalTarget{censored ? time * rng.uniform(0.3, 1.0) : time, !censored};
    }

    std::vector<std::size_t> pos;
    if (carries_signal) {
      std::vector<std::size_t> all(len);
      std::iota(all.begin(), all.end(), std::size_t{0});
      rng.shuffle(all);
      pos.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(std::min(c.k_pos, len)));
      std::sort(pos.begin(), pos.end());
      for (auto p : pos)
        for (std::size_t j = 0; j < c.input_dim; ++j) x[p * c.input_dim + j] += amplitude * ds.direction[j];
    }
    ds.positives.push_back(std::move(pos));
    bag.features = Tensor({len, c.input_dim}, std::move(x));
    ds.bags.push_back(std::move(bag));
  }
  return ds;
}

double max_projection(const Tensor& features, const std::vector<double>& direction) {
  return top_k_mean_projection(features, direction, 1);
}

double top_k_mean_projection(const Tensor& features, const std::vector<double>& direction, std::size_t k) {
  if (features.rank() != 2 || features.dim(1) != direction.size()) {
    throw DimensionError("projection oracle: features " + shape_str(features.shape()) + " vs direction of length " +
                         std::to_string(direction.size()));
  }
  const std::size_t l = features.dim(0), d = features.dim(1);
  std::vector<double> proj(l);
  auto x = features.data();
  for (std::size_t i = 0; i < l; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) acc += x[i * d + j] * direction[j];
    proj[i] = acc;
  }
  k = std::max<std::size_t>(1, std::min(k, l));
  std::partial_sort(proj.begin(), proj.begin() + static_cast<std::ptrdiff_t>(k), proj.end(), std::greater<>());
  return std::accumulate(proj.begin(), proj.begin() + static_cast<std::ptrdiff_t>(k), 0.0) / static_cast<double>(k);
}

}  // namespace mambamil
