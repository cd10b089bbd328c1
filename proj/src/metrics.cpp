#include <algorithm>
#include <cmath>
#include <numeric>

#include "mambamil/errors.hpp"
#include "mambamil/train.hpp"

namespace mambamil {

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw DimensionError("auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of (1-based, tie-averaged) ranks of the positives.
  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) {
        rank_sum += avg_rank;
        ++n_pos;
      } else if (labels[order[k]] != 0) {
        throw ContractError("auc: labels must be 0 or 1");
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw UndefinedMetricError("auc: both classes must be present");
  const double np = static_cast<double>(n_pos);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

double auc_ovr(const std::vector<std::vector<double>>& probs, const std::vector<std::size_t>& labels) {
  if (probs.size() != labels.size()) throw DimensionError("auc_ovr: scores and labels differ in length");
  if (probs.empty()) throw UndefinedMetricError("auc_ovr: no samples");
  const std::size_t k = probs.front().size();
  if (k == 2) {
    std::vector<double> s;
    std::vector<int> y;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      s.push_back(probs[i][1]);
      y.push_back(labels[i] == 1 ? 1 : 0);
    }
    return auc(s, y);
  }
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<double> s;
    std::vector<int> y;
    std::size_t pos = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      s.push_back(probs[i][c]);
      y.push_back(labels[i] == c ? 1 : 0);
      pos += labels[i] == c;
    }
    if (pos == 0 || pos == probs.size()) continue;
    total += auc(s, y);
    ++used;
  }
  if (used < 2 && k > 2) throw UndefinedMetricError("auc_ovr: fewer than two classes present");
  return total / static_cast<double>(used);
}

double accuracy(const std::vector<std::size_t>& preds, const std::vector<std::size_t>& labels) {
  if (preds.size() != labels.size()) throw DimensionError("accuracy: predictions and labels differ in length");
  if (preds.empty()) throw ContractError("accuracy: empty input");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hit += preds[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(preds.size());
}

std::size_t argmax(const std::vector<double>& v) {
  if (v.empty()) throw ContractError("argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

double c_index(const std::vector<double>& risks, const std::vector<double>& times, const std::vector<bool>& events) {
  if (risks.size() != times.size() || risks.size() != events.size()) {
    throw DimensionError("c_index: risks, times and events differ in length");
  }
  const std::size_t n = risks.size();
  double concordant = 0.0;
  std::size_t comparable = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!events[i]) continue;
    for (std::size_t j = 0; j < n; ++j) {
      if (!(times[i] < times[j])) continue;
      ++comparable;
      if (risks[i] > risks[j]) {
        concordant += 1.0;
      } else if (risks[i] == risks[j]) {
        concordant += 0.5;
      }
    }
  }
  if (comparable == 0) throw UndefinedMetricError("c_index: no comparable pairs");
  return concordant / static_cast<double>(comparable);
}

MeanStd mean_std(const std::vector<double>& values) {
  if (values.empty()) throw ContractError("mean_std of no values");
  MeanStd out;
  for (double v : values) out.mean += v;
  out.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return out;
}

}  // namespace mambamil
