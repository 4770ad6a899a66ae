#include "icast/metrics.hpp"

#include <algorithm>

namespace icast {

ClassificationMetrics precision_recall_f1(const std::vector<double>& predictions,
                                          const std::vector<int>& labels,
                                          double threshold) {
  if (predictions.size() != labels.size())
    throw ContractViolation("precision_recall_f1: length mismatch");
  std::size_t tp = 0, fp = 0, fn = 0, pos = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const bool pred = predictions[i] > threshold;
    const bool truth = labels[i] == 1;
    if (truth) ++pos;
    if (pred && truth) ++tp;
    else if (pred && !truth) ++fp;
    else if (!pred && truth) ++fn;
  }
  if (pos == 0)
    throw ContractViolation("precision_recall_f1: no positive labels in evaluation set");
  ClassificationMetrics m;
  m.precision = (tp + fp) ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  m.f1 = (m.precision + m.recall) > 0.0
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  return m;
}

GroupRanking rank_group(std::int64_t group_id, const std::vector<double>& probabilities,
                        std::size_t positive_index) {
  if (positive_index >= probabilities.size())
    throw ContractViolation("rank_group: positive index out of range");
  // Rank = 1 + number of candidates strictly ahead; earlier index wins ties.
  std::size_t rank = 1;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    if (i == positive_index) continue;
    if (probabilities[i] > probabilities[positive_index] ||
        (probabilities[i] == probabilities[positive_index] && i < positive_index))
      ++rank;
  }
  return {group_id, probabilities.size(), rank};
}

double mean_average_precision(const std::vector<GroupRanking>& groups) {
  if (groups.empty()) throw ContractViolation("mean_average_precision: no groups");
  double sum = 0.0;
  for (const auto& g : groups) {
    if (g.positive_rank == 0 || g.positive_rank > g.group_size)
      throw ContractViolation("mean_average_precision: invalid positive rank");
    sum += 1.0 / static_cast<double>(g.positive_rank);
  }
  return sum / static_cast<double>(groups.size());
}

double recall_at_k(const std::vector<GroupRanking>& groups, std::size_t k) {
  if (groups.empty()) throw ContractViolation("recall_at_k: no groups");
  std::size_t hits = 0;
  for (const auto& g : groups) {
    if (k < 1 || k > g.group_size)
      throw ContractViolation("recall_at_k: k out of range for group");
    if (g.positive_rank <= k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(groups.size());
}

}  // namespace icast
