#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "kdq/distill.hpp"
#include "kdq/embedding.hpp"
#include "kdq/ivfpq.hpp"

namespace kdq {

struct SearchParams {
  std::size_t nprobe = 1;  // posting lists visited
  std::size_t top_k = 10;
};

/// Descending score, ties by lowest doc id.
using RankedResult = std::vector<ScoredId>;

/// Query-side lookup table for inner-product ADC: partials[b * p + j] holds
/// <q segment b, codeword j of book b>. A document in list l scores
/// list_bias(l) + sum_b partials[b * p + code_b].
struct AdcTable {
  std::vector<double> partials;
  std::size_t m = 0;
  std::size_t p = 0;

  double score(double list_bias, std::span<const std::uint16_t> code) const;
};

AdcTable build_adc_table(std::span<const double> query, const PqCodebooks& codebooks);

/// IVF-probed ADC search. The query passes through `transform` when one is
/// given. Lists are probed in order of <q', centroid>; nprobe above the list
/// count is clamped with a warning.
RankedResult search(std::span<const float> query, const QueryTransform* transform,
                    const IndexArtifact& index, const SearchParams& params);

/// Exact top-k by inner product over the original embeddings.
RankedResult brute_force_search(std::span<const float> query, const EmbeddingSet& docs,
                                std::size_t k);

std::vector<RankedResult> search_all(const EmbeddingSet& queries, const QueryTransform* transform,
                                     const IndexArtifact& index, const SearchParams& params);

/// Fraction of queries with at least one ground-truth doc whose top-k
/// contains one of them. Queries without judgments are skipped; throws
/// ContractError when none remain.
double recall_at_k(std::span<const RankedResult> results, const RelevanceJudgments& judgments,
                   std::size_t k);

/// Mean reciprocal rank of the first ground-truth doc within the top k
/// (0 when absent), over queries with at least one ground-truth doc.
double mrr_at_k(std::span<const RankedResult> results, const RelevanceJudgments& judgments,
                std::size_t k = 10);

}  // namespace kdq
