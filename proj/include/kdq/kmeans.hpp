#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "kdq/embedding.hpp"

namespace kdq {

struct KMeansConfig {
  std::size_t k = 1;
  std::size_t max_iters = 25;
  std::uint64_t seed = 0;
  /// Stop once the relative decrease of the objective falls below this.
  double rel_tolerance = 1e-4;
};

struct KMeansResult {
  std::size_t k = 0;
  std::size_t dim = 0;
  std::vector<float> centroids;  // k x dim, row-major
  /// Sum of squared distances to the nearest centroid, one entry per
  /// assignment pass. Non-increasing.
  std::vector<double> objective;
};

/// Lloyd's algorithm with k-means++ seeding. Clusters that end up empty are
/// reseeded to the points farthest from their assigned centroids, so k
/// may exceed the number of points. Deterministic for a given seed.
KMeansResult kmeans(std::span<const float> data, std::size_t rows, std::size_t dim,
                    const KMeansConfig& cfg);
KMeansResult kmeans(const EmbeddingSet& data, const KMeansConfig& cfg);

/// Index of the l2-nearest centroid; ties go to the lowest index.
std::size_t assign_nearest(std::span<const float> v, std::span<const float> centroids,
                           std::size_t dim);

}  // namespace kdq
