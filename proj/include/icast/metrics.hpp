#pragma once

#include <cstdint>
#include <vector>

#include "icast/errors.hpp"

namespace icast {

struct ClassificationMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Positive class metrics at `threshold` (predicted positive iff p > threshold).
// Precision is reported as 0 when nothing is predicted positive.
ClassificationMetrics precision_recall_f1(const std::vector<double>& predictions,
                                          const std::vector<int>& labels,
                                          double threshold = 0.5);

// One evaluated candidate group: the 1-based rank of its single positive
// under descending-probability order with stable index tie-breaking.
struct GroupRanking {
  std::int64_t group_id = 0;
  std::size_t group_size = 0;
  std::size_t positive_rank = 0;  // 1-based
};

GroupRanking rank_group(std::int64_t group_id, const std::vector<double>& probabilities,
                        std::size_t positive_index);

// With one positive per group, AP = 1 / positive_rank.
double mean_average_precision(const std::vector<GroupRanking>& groups);

// Fraction of groups whose positive lands in the top k.
double recall_at_k(const std::vector<GroupRanking>& groups, std::size_t k);

}  // namespace icast
