#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

namespace icast {

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

using TokenList = std::vector<std::string>;

// Okapi BM25 with the Robertson-Sparck-Jones idf:
//   idf(t) = ln((N - df + 0.5) / (df + 0.5) + 1)
// Scores are computed against corpus statistics of `pool`.
class Bm25Index {
 public:
  Bm25Index(const std::vector<TokenList>& pool, Bm25Params params = {});

  double score(const TokenList& query, std::size_t doc) const;

  // Top-k document indices by descending score; ties broken by index order.
  std::vector<std::size_t> retrieve(const TokenList& query, std::size_t k) const;

 private:
  struct Doc {
    std::unordered_map<std::string, std::size_t> tf;
    std::size_t length = 0;
  };
  std::vector<Doc> docs_;
  std::unordered_map<std::string, std::size_t> df_;
  Bm25Params params_;
  double avg_len_ = 0.0;
};

// One-shot convenience wrapper.
std::vector<std::size_t> bm25_retrieve(const TokenList& query,
                                       const std::vector<TokenList>& pool,
                                       std::size_t k, Bm25Params params = {});

}  // namespace icast
