#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "kdq/embedding.hpp"

namespace kdq {

/// Coarse quantizer: `lists` centroids of dimension `dim`.
struct IvfCentroids {
  std::size_t lists = 0;
  std::size_t dim = 0;
  std::vector<float> values;  // lists x dim

  std::span<const float> row(std::size_t i) const { return {values.data() + i * dim, dim}; }
  std::span<float> row(std::size_t i) { return {values.data() + i * dim, dim}; }
};

/// Product quantizer over post-IVF residuals: `m` codebooks of `p`
/// codewords, each of dimension sub_dim = dim / m.
struct PqCodebooks {
  std::size_t m = 0;
  std::size_t p = 0;
  std::size_t sub_dim = 0;
  std::vector<float> values;  // m x p x sub_dim

  std::size_t dim() const noexcept { return m * sub_dim; }
  std::span<const float> codeword(std::size_t book, std::size_t word) const {
    return {values.data() + (book * p + word) * sub_dim, sub_dim};
  }
  std::span<float> codeword(std::size_t book, std::size_t word) {
    return {values.data() + (book * p + word) * sub_dim, sub_dim};
  }
};

struct DocumentCode {
  std::uint32_t ivf_id = 0;
  std::vector<std::uint16_t> pq_ids;

  bool operator==(const DocumentCode&) const = default;
};

struct IndexParams {
  std::size_t lists = 10000;
  std::size_t m = 64;
  std::size_t p = 256;
  std::uint64_t seed = 0;
  std::size_t kmeans_iters = 25;
  double kmeans_tolerance = 1e-4;
};

/// Learned quantizer parameters plus the per-document codes and the
/// posting lists derived from the codes' IVF ids.
struct IndexArtifact {
  IvfCentroids centroids;
  PqCodebooks codebooks;
  std::vector<std::uint32_t> ivf_ids;             // one per doc
  std::vector<std::uint16_t> pq_ids;              // doc_count x m
  std::vector<std::vector<std::uint32_t>> posting_lists;

  std::size_t doc_count() const noexcept { return ivf_ids.size(); }
  std::size_t dim() const noexcept { return centroids.dim; }

  DocumentCode code(std::size_t doc) const;
  std::span<const std::uint16_t> pq_code(std::size_t doc) const {
    return {pq_ids.data() + doc * codebooks.m, codebooks.m};
  }

  void rebuild_posting_lists();
  /// Throws ContractError when shapes, id ranges or the posting-list
  /// partition are inconsistent.
  void check_invariants() const;
};

/// Trains IVF centroids on the documents, then one codebook per subspace
/// on the post-IVF residuals, and encodes every document.
IndexArtifact init_index(const EmbeddingSet& docs, const IndexParams& params);

DocumentCode encode_document(std::span<const float> v, const IvfCentroids& centroids,
                             const PqCodebooks& codebooks);

/// PQ ids of the residual v - centroids[ivf_id].
void encode_residual(std::span<const float> v, std::uint32_t ivf_id,
                     const IvfCentroids& centroids, const PqCodebooks& codebooks,
                     std::span<std::uint16_t> out);

std::vector<float> reconstruct_ivf(const DocumentCode& code, const IvfCentroids& centroids);
std::vector<float> reconstruct_full(const DocumentCode& code, const IvfCentroids& centroids,
                                    const PqCodebooks& codebooks);

/// Recomputes PQ ids against the current centroids and codebooks while
/// keeping every document's IVF id fixed.
void reencode_pq(IndexArtifact& index, const EmbeddingSet& docs);

struct Distortion {
  double ivf = 0.0;   // mean ||v - reconstruct_ivf||^2
  double full = 0.0;  // mean ||v - reconstruct_full||^2
};
Distortion measure_distortion(const IndexArtifact& index, const EmbeddingSet& docs);

inline constexpr std::uint32_t kIndexFormatVersion = 1;

std::vector<char> serialize_index(const IndexArtifact& index);
IndexArtifact deserialize_index(const std::vector<char>& bytes);
void save_index(const IndexArtifact& index, const std::filesystem::path& path);
IndexArtifact load_index(const std::filesystem::path& path);

}  // namespace kdq
