#include "kdq/sampling.hpp"

#include <algorithm>
#include <numeric>
#include <string>
#include <unordered_map>

#include "kdq/error.hpp"
#include "kdq/parallel.hpp"

namespace kdq {

void SamplingStrategy::validate() const {
  if (!use_ground_truth && topk_pool == 0) {
    throw ConfigError(use_in_batch
                          ? "in-batch sampling needs ground-truth or Top-K candidates to share"
                          : "sampling strategy enables no candidate source");
  }
  if (topk_take > topk_pool) {
    throw ConfigError("topk_take (" + std::to_string(topk_take) + ") exceeds topk_pool (" +
                      std::to_string(topk_pool) + ")");
  }
}

TopkCache mine_topk(const EmbeddingSet& queries, const EmbeddingSet& docs, std::size_t k) {
  if (queries.dim() != docs.dim()) throw ContractError("mine_topk: dimension mismatch");
  if (k > docs.count()) {
    log_warning("Top-K of " + std::to_string(k) + " clamped to the corpus size " +
                std::to_string(docs.count()));
    k = docs.count();
  }
  TopkCache cache(queries.count());
  parallel_chunks(queries.count(), 16, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t q = begin; q < end; ++q) {
      const auto top = exact_top_k(queries.row(q), docs, k);
      auto& ids = cache[q];
      ids.reserve(top.size());
      for (const auto& hit : top) ids.push_back(hit.id);
    }
  });
  return cache;
}

std::vector<double> teacher_scores(std::size_t query_row, std::span<const std::uint32_t> doc_ids,
                                   const EmbeddingSet& queries, const EmbeddingSet& docs) {
  if (query_row >= queries.count()) throw ContractError("teacher_scores: query out of range");
  std::vector<double> out;
  out.reserve(doc_ids.size());
  const auto q = queries.row(query_row);
  for (const auto d : doc_ids) {
    if (d >= docs.count()) throw ContractError("teacher_scores: doc id out of range");
    out.push_back(inner_product_f64(q, docs.row(d)));
  }
  return out;
}

namespace {

struct OwnSelection {
  std::vector<std::uint32_t> ids;
  std::vector<CandidateOrigin> origins;
};

OwnSelection own_selection(std::uint32_t q, const SamplingStrategy& strategy,
                           const RelevanceJudgments* judgments, const TopkCache* topk,
                           std::mt19937_64& rng) {
  OwnSelection sel;
  if (strategy.use_ground_truth) {
    if (judgments == nullptr) throw ConfigError("ground-truth sampling needs judgments");
    for (const auto d : judgments->relevant(q)) {
      sel.ids.push_back(d);
      sel.origins.push_back(CandidateOrigin::ground_truth);
    }
  }
  if (strategy.topk_pool > 0) {
    if (topk == nullptr || q >= topk->size()) {
      throw ConfigError("Top-K sampling needs a mined Top-K cache covering every query");
    }
    const auto& cached = (*topk)[q];
    const std::size_t pool = std::min(strategy.topk_pool, cached.size());
    if (strategy.topk_take == 0 || strategy.topk_take >= pool) {
      for (std::size_t i = 0; i < pool; ++i) {
        sel.ids.push_back(cached[i]);
        sel.origins.push_back(CandidateOrigin::topk);
      }
    } else {
      // Partial Fisher-Yates over pool positions; positions are then sorted
      // so the selection keeps the teacher's rank order.
      std::vector<std::size_t> positions(pool);
      std::iota(positions.begin(), positions.end(), 0);
      for (std::size_t i = 0; i < strategy.topk_take; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng() % (pool - i));
        std::swap(positions[i], positions[j]);
      }
      positions.resize(strategy.topk_take);
      std::sort(positions.begin(), positions.end());
      for (const auto p : positions) {
        sel.ids.push_back(cached[p]);
        sel.origins.push_back(CandidateOrigin::topk);
      }
    }
  }
  return sel;
}

}  // namespace

std::vector<CandidateSet> sample_candidates(std::span<const std::uint32_t> batch,
                                            const SamplingStrategy& strategy,
                                            const RelevanceJudgments* judgments,
                                            const TopkCache* topk, const EmbeddingSet& queries,
                                            const EmbeddingSet& docs, std::mt19937_64& rng) {
  strategy.validate();
  std::vector<OwnSelection> own;
  own.reserve(batch.size());
  for (const auto q : batch) {
    if (q >= queries.count()) throw ContractError("sample_candidates: query out of range");
    own.push_back(own_selection(q, strategy, judgments, topk, rng));
  }

  std::vector<CandidateSet> out(batch.size());
  std::unordered_map<std::uint32_t, std::size_t> position;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    auto& set = out[b];
    set.query_row = batch[b];
    position.clear();
    auto add = [&](std::uint32_t d, CandidateOrigin origin) {
      if (d >= docs.count()) throw ContractError("candidate doc id out of range");
      const auto [it, inserted] = position.emplace(d, set.doc_ids.size());
      if (inserted) {
        set.doc_ids.push_back(d);
        set.origins.push_back(origin);
      } else if (origin < set.origins[it->second]) {
        set.origins[it->second] = origin;
      }
    };
    for (std::size_t i = 0; i < own[b].ids.size(); ++i) add(own[b].ids[i], own[b].origins[i]);
    if (strategy.use_in_batch) {
      for (std::size_t other = 0; other < batch.size(); ++other) {
        if (other == b) continue;
        for (const auto d : own[other].ids) add(d, CandidateOrigin::in_batch);
      }
    }
    set.teacher_scores = teacher_scores(set.query_row, set.doc_ids, queries, docs);
  }
  return out;
}

}  // namespace kdq
