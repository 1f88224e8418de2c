#include "kdq/search.hpp"

#include <algorithm>
#include <string>

#include "kdq/error.hpp"
#include "kdq/parallel.hpp"

namespace kdq {

double AdcTable::score(double list_bias, std::span<const std::uint16_t> code) const {
  double s = list_bias;
  for (std::size_t b = 0; b < m; ++b) s += partials[b * p + code[b]];
  return s;
}

AdcTable build_adc_table(std::span<const double> query, const PqCodebooks& codebooks) {
  if (query.size() != codebooks.dim()) throw ContractError("adc table: dimension mismatch");
  AdcTable table;
  table.m = codebooks.m;
  table.p = codebooks.p;
  table.partials.resize(codebooks.m * codebooks.p);
  const std::size_t sub = codebooks.sub_dim;
  for (std::size_t b = 0; b < codebooks.m; ++b) {
    const auto segment = query.subspan(b * sub, sub);
    for (std::size_t j = 0; j < codebooks.p; ++j) {
      table.partials[b * codebooks.p + j] = inner_product_f64(segment, codebooks.codeword(b, j));
    }
  }
  return table;
}

RankedResult search(std::span<const float> query, const QueryTransform* transform,
                    const IndexArtifact& index, const SearchParams& params) {
  if (query.size() != index.dim()) throw ContractError("search: dimension mismatch");
  if (params.top_k == 0) throw ContractError("search: top_k must be at least 1");
  if (params.nprobe == 0) throw ContractError("search: nprobe must be at least 1");
  const std::size_t lists = index.centroids.lists;
  std::size_t nprobe = params.nprobe;
  if (nprobe > lists) {
    log_warning("nprobe " + std::to_string(nprobe) + " clamped to the list count " +
                std::to_string(lists));
    nprobe = lists;
  }

  std::vector<double> q;
  if (transform != nullptr) {
    q = transform->apply(query);
  } else {
    q.assign(query.begin(), query.end());
  }

  std::vector<double> bias(lists);
  for (std::size_t l = 0; l < lists; ++l) bias[l] = inner_product_f64(q, index.centroids.row(l));
  std::vector<std::uint32_t> probed(lists);
  for (std::size_t l = 0; l < lists; ++l) probed[l] = static_cast<std::uint32_t>(l);
  std::partial_sort(probed.begin(), probed.begin() + static_cast<std::ptrdiff_t>(nprobe),
                    probed.end(), [&](std::uint32_t a, std::uint32_t b) {
                      return bias[a] > bias[b] || (bias[a] == bias[b] && a < b);
                    });
  probed.resize(nprobe);

  const auto table = build_adc_table(q, index.codebooks);
  TopKSelector best(params.top_k);
  for (const auto list : probed) {
    for (const auto d : index.posting_lists[list]) {
      best.push(d, static_cast<float>(table.score(bias[list], index.pq_code(d))));
    }
  }
  return best.take_sorted();
}

RankedResult brute_force_search(std::span<const float> query, const EmbeddingSet& docs,
                                std::size_t k) {
  return exact_top_k(query, docs, k);
}

std::vector<RankedResult> search_all(const EmbeddingSet& queries, const QueryTransform* transform,
                                     const IndexArtifact& index, const SearchParams& params) {
  std::vector<RankedResult> results(queries.count());
  parallel_chunks(queries.count(), 32, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t q = begin; q < end; ++q) {
      results[q] = search(queries.row(q), transform, index, params);
    }
  });
  return results;
}

namespace {

// 1-based rank of the first relevant doc within the top k; 0 if none.
std::size_t first_hit(const RankedResult& result, std::span<const std::uint32_t> relevant,
                      std::size_t k) {
  const std::size_t limit = std::min(k, result.size());
  for (std::size_t r = 0; r < limit; ++r) {
    if (std::find(relevant.begin(), relevant.end(), result[r].id) != relevant.end()) return r + 1;
  }
  return 0;
}

template <class Score>
double mean_over_judged(std::span<const RankedResult> results, const RelevanceJudgments& judgments,
                        Score&& score) {
  if (results.size() != judgments.query_count()) {
    throw ContractError("metric: " + std::to_string(results.size()) + " results for " +
                        std::to_string(judgments.query_count()) + " judged queries");
  }
  double sum = 0.0;
  std::size_t judged = 0;
  for (std::size_t q = 0; q < results.size(); ++q) {
    const auto relevant = judgments.relevant(q);
    if (relevant.empty()) continue;
    ++judged;
    sum += score(results[q], relevant);
  }
  if (judged == 0) throw ContractError("metric: no query has ground-truth documents");
  return sum / static_cast<double>(judged);
}

}  // namespace

double recall_at_k(std::span<const RankedResult> results, const RelevanceJudgments& judgments,
                   std::size_t k) {
  return mean_over_judged(results, judgments, [k](const RankedResult& r, auto relevant) {
    return first_hit(r, relevant, k) > 0 ? 1.0 : 0.0;
  });
}

double mrr_at_k(std::span<const RankedResult> results, const RelevanceJudgments& judgments,
                std::size_t k) {
  return mean_over_judged(results, judgments, [k](const RankedResult& r, auto relevant) {
    const auto rank = first_hit(r, relevant, k);
    return rank == 0 ? 0.0 : 1.0 / static_cast<double>(rank);
  });
}

}  // namespace kdq
