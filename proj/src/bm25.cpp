#include "icast/bm25.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "icast/errors.hpp"

namespace icast {

Bm25Index::Bm25Index(const std::vector<TokenList>& pool, Bm25Params params)
    : params_(params) {
  if (pool.empty()) throw ContractViolation("bm25: empty document pool");
  docs_.reserve(pool.size());
  std::size_t total_len = 0;
  for (const auto& tokens : pool) {
    Doc d;
    d.length = tokens.size();
    for (const auto& t : tokens) ++d.tf[t];
    total_len += d.length;
    for (const auto& [term, tf] : d.tf) ++df_[term];
    docs_.push_back(std::move(d));
  }
  avg_len_ = static_cast<double>(total_len) / static_cast<double>(docs_.size());
}

double Bm25Index::score(const TokenList& query, std::size_t doc) const {
  const Doc& d = docs_[doc];
  const double n = static_cast<double>(docs_.size());
  double s = 0.0;
  for (const auto& term : query) {
    auto it = d.tf.find(term);
    if (it == d.tf.end()) continue;  // zero tf, zero contribution
    const auto df_it = df_.find(term);
    const double df = df_it == df_.end() ? 0.0 : static_cast<double>(df_it->second);
    const double idf = std::log((n - df + 0.5) / (df + 0.5) + 1.0);
    const double tf = static_cast<double>(it->second);
    const double norm =
        avg_len_ > 0.0 ? d.length / avg_len_ : 0.0;
    s += idf * tf * (params_.k1 + 1.0) /
         (tf + params_.k1 * (1.0 - params_.b + params_.b * norm));
  }
  return s;
}

std::vector<std::size_t> Bm25Index::retrieve(const TokenList& query,
                                             std::size_t k) const {
  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(docs_.size());
  for (std::size_t i = 0; i < docs_.size(); ++i)
    scored.emplace_back(score(query, i), i);
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  const std::size_t take = std::min(k, scored.size());
  std::vector<std::size_t> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(scored[i].second);
  return out;
}

std::vector<std::size_t> bm25_retrieve(const TokenList& query,
                                       const std::vector<TokenList>& pool,
                                       std::size_t k, Bm25Params params) {
  if (k == 0) throw ContractViolation("bm25: k must be >= 1");
  return Bm25Index(pool, params).retrieve(query, k);
}

}  // namespace icast
