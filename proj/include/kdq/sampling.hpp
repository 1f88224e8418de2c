#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "kdq/embedding.hpp"

namespace kdq {

enum class CandidateOrigin : std::uint8_t { ground_truth, topk, in_batch };

/// Distillation candidates for one query with their cached teacher scores.
struct CandidateSet {
  std::uint32_t query_row = 0;
  std::vector<std::uint32_t> doc_ids;
  std::vector<double> teacher_scores;
  std::vector<CandidateOrigin> origins;

  std::size_t size() const noexcept { return doc_ids.size(); }
};

struct SamplingStrategy {
  bool use_ground_truth = false;
  /// Size of each query's Top-K pool; 0 disables Top-K candidates.
  std::size_t topk_pool = 200;
  /// Number of documents drawn uniformly from the pool; 0 takes all.
  std::size_t topk_take = 0;
  bool use_in_batch = true;
  std::uint64_t seed = 0;

  /// Throws ConfigError when no source can produce a query's own
  /// candidates (in-batch alone only borrows other queries' candidates).
  void validate() const;
};

/// Per query, the K doc ids with the largest teacher inner product.
using TopkCache = std::vector<std::vector<std::uint32_t>>;

/// Exact Top-K by <v_q, v_d>, descending, ties by lowest doc id. K larger
/// than the corpus is clamped with a warning.
TopkCache mine_topk(const EmbeddingSet& queries, const EmbeddingSet& docs, std::size_t k);

/// <v_q, v_d> on the fixed embeddings, in doc_ids order.
std::vector<double> teacher_scores(std::size_t query_row, std::span<const std::uint32_t> doc_ids,
                                   const EmbeddingSet& queries, const EmbeddingSet& docs);

/// Builds D_q for every query of the batch. A query's own selection is its
/// ground truth (if enabled) followed by its Top-K selection; with in-batch
/// sampling the own selections of the other batch queries are appended.
/// Duplicates keep their first (highest-priority) origin.
std::vector<CandidateSet> sample_candidates(std::span<const std::uint32_t> batch,
                                            const SamplingStrategy& strategy,
                                            const RelevanceJudgments* judgments,
                                            const TopkCache* topk, const EmbeddingSet& queries,
                                            const EmbeddingSet& docs, std::mt19937_64& rng);

}  // namespace kdq
