#pragma once

#include <cstddef>
#include <cstdint>

#include "kdq/embedding.hpp"

namespace kdq {

/// Clustered stand-in for encoder output. Documents scatter around random
/// unit cluster directions and are scaled to a common norm; every query is
/// a perturbed copy of a random document, which becomes its ground truth.
struct SynthConfig {
  std::size_t docs = 20000;
  std::size_t queries = 2000;
  std::size_t eval_queries = 500;
  std::size_t dim = 64;
  std::size_t clusters = 50;
  /// Norm of the per-document offset from its cluster direction.
  double cluster_spread = 2.0;
  /// Log-normal sigma of a per-cluster multiplier on cluster_spread.
  double spread_jitter = 0.5;
  /// Log-normal sigma of a per-document multiplier on the document norm.
  double norm_jitter = 0.1;
  /// Norm of the query perturbation relative to a unit document; 0 makes
  /// each query an exact copy of its source document.
  double query_noise = 1.0;
  /// Common norm of documents and queries; sets the teacher score scale.
  double norm = 6.0;
  std::uint64_t seed = 0;
};

struct SynthData {
  EmbeddingSet docs;
  EmbeddingSet queries;
  RelevanceJudgments judgments;
  EmbeddingSet eval_queries;
  RelevanceJudgments eval_judgments;
};

SynthData synthesize(const SynthConfig& cfg);

}  // namespace kdq
