#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "kdq/embedding.hpp"
#include "kdq/ivfpq.hpp"

namespace kdq::test {

using Lists = std::vector<std::vector<std::uint32_t>>;

inline std::vector<float> gaussian(std::size_t n, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, scale);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(nd(rng));
  return v;
}

inline EmbeddingSet random_set(std::size_t count, std::size_t dim, std::uint64_t seed,
                               double scale = 1.0) {
  return EmbeddingSet(count, dim, gaussian(count * dim, seed, scale));
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "kdq_tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Index with random parameters and random codes; posting lists rebuilt.
inline IndexArtifact random_index(std::size_t docs, std::size_t dim, std::size_t lists,
                                  std::size_t m, std::size_t p, std::uint64_t seed) {
  IndexArtifact idx;
  idx.centroids = {lists, dim, gaussian(lists * dim, seed)};
  idx.codebooks = {m, p, dim / m, gaussian(m * p * (dim / m), seed + 1, 0.5)};
  std::mt19937_64 rng(seed + 2);
  for (std::size_t d = 0; d < docs; ++d) {
    idx.ivf_ids.push_back(static_cast<std::uint32_t>(rng() % lists));
    for (std::size_t b = 0; b < m; ++b) idx.pq_ids.push_back(static_cast<std::uint16_t>(rng() % p));
  }
  idx.rebuild_posting_lists();
  return idx;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace kdq::test
