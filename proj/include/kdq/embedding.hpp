#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace kdq {

/// Dense row-major float32 matrix of query or document embeddings. Row
/// indices are the ids. Immutable after construction.
class EmbeddingSet {
 public:
  EmbeddingSet() = default;
  explicit EmbeddingSet(std::size_t dim);
  /// Throws ContractError unless values.size() == count * dim, dim > 0 and
  /// every value is finite.
  EmbeddingSet(std::size_t count, std::size_t dim, std::vector<float> values);

  std::size_t count() const noexcept { return count_; }
  std::size_t dim() const noexcept { return dim_; }
  bool empty() const noexcept { return count_ == 0; }

  std::span<const float> row(std::size_t i) const {
    return {values_.data() + i * dim_, dim_};
  }
  std::span<const float> values() const noexcept { return values_; }

 private:
  std::size_t count_ = 0;
  std::size_t dim_ = 0;
  std::vector<float> values_;
};

/// Ground-truth document ids per query row.
class RelevanceJudgments {
 public:
  RelevanceJudgments() = default;
  explicit RelevanceJudgments(std::vector<std::vector<std::uint32_t>> per_query)
      : lists_(std::move(per_query)) {}

  std::size_t query_count() const noexcept { return lists_.size(); }
  std::span<const std::uint32_t> relevant(std::size_t query) const { return lists_.at(query); }
  const std::vector<std::vector<std::uint32_t>>& lists() const noexcept { return lists_; }

  /// Throws ContractError on a doc id >= doc_count or a duplicate within a query.
  void validate(std::size_t doc_count) const;

 private:
  std::vector<std::vector<std::uint32_t>> lists_;
};

float inner_product(std::span<const float> a, std::span<const float> b);
float l2_distance_sq(std::span<const float> a, std::span<const float> b);
float squared_norm(std::span<const float> a);

/// Double-accumulated inner product used on the training path.
double inner_product_f64(std::span<const double> a, std::span<const float> b);
double inner_product_f64(std::span<const float> a, std::span<const float> b);

struct ScoredId {
  std::uint32_t id;
  float score;
};

/// Orders by descending score, then ascending id.
inline bool ranks_before(const ScoredId& a, const ScoredId& b) noexcept {
  return a.score > b.score || (a.score == b.score && a.id < b.id);
}

/// Bounded selector keeping the best k entries under ranks_before.
class TopKSelector {
 public:
  explicit TopKSelector(std::size_t k) : k_(k) { heap_.reserve(k); }

  void push(std::uint32_t id, float score);
  /// Best entries in rank order; leaves the selector empty.
  std::vector<ScoredId> take_sorted();

 private:
  std::size_t k_;
  std::vector<ScoredId> heap_;  // worst element at front
};

/// Exact top-k by inner product of query against every row of docs.
std::vector<ScoredId> exact_top_k(std::span<const float> query, const EmbeddingSet& docs,
                                  std::size_t k);

}  // namespace kdq
