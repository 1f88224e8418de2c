#include "kdq/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

#include "kdq/error.hpp"

namespace kdq {

EmbeddingSet::EmbeddingSet(std::size_t dim) : dim_(dim) {
  if (dim == 0) throw ContractError("embedding dimension must be positive");
}

EmbeddingSet::EmbeddingSet(std::size_t count, std::size_t dim, std::vector<float> values)
    : count_(count), dim_(dim), values_(std::move(values)) {
  if (dim == 0) throw ContractError("embedding dimension must be positive");
  if (values_.size() != count * dim) {
    throw ContractError("embedding buffer holds " + std::to_string(values_.size()) +
                        " values, expected " + std::to_string(count * dim));
  }
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      throw ContractError("non-finite embedding value in row " + std::to_string(i / dim));
    }
  }
}

void RelevanceJudgments::validate(std::size_t doc_count) const {
  std::unordered_set<std::uint32_t> seen;
  for (std::size_t q = 0; q < lists_.size(); ++q) {
    seen.clear();
    for (const auto d : lists_[q]) {
      if (d >= doc_count) {
        throw ContractError("judgment for query " + std::to_string(q) + " names doc " +
                            std::to_string(d) + " but only " + std::to_string(doc_count) +
                            " docs exist");
      }
      if (!seen.insert(d).second) {
        throw ContractError("duplicate doc " + std::to_string(d) + " in judgments of query " +
                            std::to_string(q));
      }
    }
  }
}

namespace {

void check_dims(std::size_t a, std::size_t b) {
  if (a != b) {
    throw ContractError("dimension mismatch: " + std::to_string(a) + " vs " + std::to_string(b));
  }
}

}  // namespace

// Eight independent accumulators let the compiler vectorise without
// reassociating a single running sum; the summation order is fixed.
float inner_product(std::span<const float> a, std::span<const float> b) {
  check_dims(a.size(), b.size());
  const std::size_t n = a.size();
  float acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t j = 0; j < 8; ++j) acc[j] += a[i + j] * b[i + j];
  }
  for (std::size_t j = 0; i < n; ++i, ++j) acc[j] += a[i] * b[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

float l2_distance_sq(std::span<const float> a, std::span<const float> b) {
  check_dims(a.size(), b.size());
  const std::size_t n = a.size();
  float acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t j = 0; j < 8; ++j) {
      const float d = a[i + j] - b[i + j];
      acc[j] += d * d;
    }
  }
  for (std::size_t j = 0; i < n; ++i, ++j) {
    const float d = a[i] - b[i];
    acc[j] += d * d;
  }
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

float squared_norm(std::span<const float> a) {
  double s = 0.0;
  for (const float x : a) s += static_cast<double>(x) * x;
  return static_cast<float>(s);
}

double inner_product_f64(std::span<const double> a, std::span<const float> b) {
  check_dims(a.size(), b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double inner_product_f64(std::span<const float> a, std::span<const float> b) {
  check_dims(a.size(), b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

void TopKSelector::push(std::uint32_t id, float score) {
  if (k_ == 0) return;
  const ScoredId item{id, score};
  // Heap comparator puts the worst-ranked element at the front.
  if (heap_.size() < k_) {
    heap_.push_back(item);
    std::push_heap(heap_.begin(), heap_.end(), ranks_before);
  } else if (ranks_before(item, heap_.front())) {
    std::pop_heap(heap_.begin(), heap_.end(), ranks_before);
    heap_.back() = item;
    std::push_heap(heap_.begin(), heap_.end(), ranks_before);
  }
}

std::vector<ScoredId> TopKSelector::take_sorted() {
  std::vector<ScoredId> out = std::move(heap_);
  heap_.clear();
  std::sort(out.begin(), out.end(), ranks_before);
  return out;
}

std::vector<ScoredId> exact_top_k(std::span<const float> query, const EmbeddingSet& docs,
                                  std::size_t k) {
  check_dims(query.size(), docs.dim());
  TopKSelector selector(std::min(k, docs.count()));
  for (std::size_t d = 0; d < docs.count(); ++d) {
    selector.push(static_cast<std::uint32_t>(d), inner_product(query, docs.row(d)));
  }
  return selector.take_sorted();
}

}  // namespace kdq
