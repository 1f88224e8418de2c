#include "kdq/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "kdq/error.hpp"
#include "kdq/parallel.hpp"

namespace kdq {

namespace {

constexpr std::size_t kGrain = 1024;

struct Nearest {
  std::uint32_t index;
  float distance;
};

Nearest nearest(std::span<const float> v, const std::vector<float>& centroids, std::size_t k,
                std::size_t dim) {
  Nearest best{0, std::numeric_limits<float>::infinity()};
  for (std::size_t c = 0; c < k; ++c) {
    const float d = l2_distance_sq(v, {centroids.data() + c * dim, dim});
    if (d < best.distance) best = {static_cast<std::uint32_t>(c), d};
  }
  return best;
}

// Uniform in [0, 1) with 53 random bits; independent of the standard
// library's distribution implementation.
double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::vector<float> seed_plus_plus(std::span<const float> data, std::size_t rows, std::size_t dim,
                                  std::size_t k, std::mt19937_64& rng) {
  std::vector<float> centroids(k * dim);
  auto point = [&](std::size_t i) { return data.subspan(i * dim, dim); };
  auto set_centroid = [&](std::size_t c, std::size_t i) {
    std::copy_n(data.data() + i * dim, dim, centroids.data() + c * dim);
  };

  set_centroid(0, static_cast<std::size_t>(rng() % rows));
  std::vector<double> min_dist(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    min_dist[i] = l2_distance_sq(point(i), {centroids.data(), dim});
  }
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (const double d : min_dist) total += d;
    std::size_t chosen = 0;
    if (total > 0.0) {
      const double target = uniform01(rng) * total;
      double running = 0.0;
      chosen = rows - 1;
      for (std::size_t i = 0; i < rows; ++i) {
        running += min_dist[i];
        if (running > target && min_dist[i] > 0.0) {
          chosen = i;
          break;
        }
      }
    } else {
      // Fewer distinct points than clusters.
      chosen = static_cast<std::size_t>(rng() % rows);
    }
    set_centroid(c, chosen);
    const std::span<const float> fresh{centroids.data() + c * dim, dim};
    for (std::size_t i = 0; i < rows; ++i) {
      min_dist[i] = std::min<double>(min_dist[i], l2_distance_sq(point(i), fresh));
    }
  }
  return centroids;
}

}  // namespace

std::size_t assign_nearest(std::span<const float> v, std::span<const float> centroids,
                           std::size_t dim) {
  if (dim == 0 || centroids.empty()) throw ContractError("assign_nearest: empty centroid set");
  if (v.size() != dim || centroids.size() % dim != 0) {
    throw ContractError("assign_nearest: dimension mismatch");
  }
  const std::size_t k = centroids.size() / dim;
  std::size_t best = 0;
  float best_d = std::numeric_limits<float>::infinity();
  for (std::size_t c = 0; c < k; ++c) {
    const float d = l2_distance_sq(v, centroids.subspan(c * dim, dim));
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

KMeansResult kmeans(std::span<const float> data, std::size_t rows, std::size_t dim,
                    const KMeansConfig& cfg) {
  if (rows == 0) throw ContractError("kmeans: no training points");
  if (cfg.k == 0) throw ContractError("kmeans: k must be at least 1");
  if (dim == 0 || data.size() != rows * dim) throw ContractError("kmeans: bad data shape");
  if (cfg.max_iters == 0) throw ContractError("kmeans: max_iters must be positive");

  const std::size_t k = cfg.k;
  std::mt19937_64 rng(cfg.seed);
  KMeansResult result;
  result.k = k;
  result.dim = dim;
  result.centroids = seed_plus_plus(data, rows, dim, k, rng);

  std::vector<Nearest> assignment(rows);
  const std::size_t chunks = chunk_count(rows, kGrain);
  std::vector<double> chunk_objective(chunks);
  std::vector<std::vector<double>> chunk_sums(chunks);
  std::vector<std::vector<std::size_t>> chunk_counts(chunks);

  // max_iters centroid updates, each followed by an assignment pass.
  for (std::size_t iter = 0; iter <= cfg.max_iters; ++iter) {
    parallel_chunks(rows, kGrain, [&](std::size_t c, std::size_t begin, std::size_t end) {
      auto& sums = chunk_sums[c];
      auto& counts = chunk_counts[c];
      sums.assign(k * dim, 0.0);
      counts.assign(k, 0);
      double objective = 0.0;
      for (std::size_t i = begin; i < end; ++i) {
        const auto v = data.subspan(i * dim, dim);
        assignment[i] = nearest(v, result.centroids, k, dim);
        objective += assignment[i].distance;
        const std::size_t a = assignment[i].index;
        ++counts[a];
        for (std::size_t j = 0; j < dim; ++j) sums[a * dim + j] += v[j];
      }
      chunk_objective[c] = objective;
    });

    double objective = 0.0;
    std::vector<double> sums(k * dim, 0.0);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t c = 0; c < chunks; ++c) {
      objective += chunk_objective[c];
      for (std::size_t j = 0; j < k * dim; ++j) sums[j] += chunk_sums[c][j];
      for (std::size_t j = 0; j < k; ++j) counts[j] += chunk_counts[c][j];
    }
    const double previous = result.objective.empty() ? 0.0 : result.objective.back();
    result.objective.push_back(objective);
    if (iter > 0) {
      const double decrease = previous - objective;
      if (previous <= 0.0 || decrease <= cfg.rel_tolerance * previous) break;
    }
    if (iter == cfg.max_iters) break;

    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      for (std::size_t j = 0; j < dim; ++j) {
        result.centroids[c * dim + j] =
            static_cast<float>(sums[c * dim + j] / static_cast<double>(counts[c]));
      }
    }

    // Reseed each empty cluster at the point farthest from its assigned
    // centroid; a point is used at most once.
    std::vector<char> used(rows, 0);
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      std::size_t far = rows;
      float far_d = -1.0f;
      for (std::size_t i = 0; i < rows; ++i) {
        if (used[i]) continue;
        const float d = l2_distance_sq(
            data.subspan(i * dim, dim),
            {result.centroids.data() + assignment[i].index * dim, dim});
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      if (far == rows) break;
      used[far] = 1;
      std::copy_n(data.data() + far * dim, dim, result.centroids.data() + c * dim);
    }
  }
  return result;
}

KMeansResult kmeans(const EmbeddingSet& data, const KMeansConfig& cfg) {
  return kmeans(data.values(), data.count(), data.dim(), cfg);
}

}  // namespace kdq
