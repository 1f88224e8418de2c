#include "kdq/ivfpq.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>

#include "binary.hpp"
#include "kdq/error.hpp"
#include "kdq/io.hpp"
#include "kdq/kmeans.hpp"
#include "kdq/parallel.hpp"
#include "kdq/seed.hpp"

namespace kdq {

namespace {

constexpr std::array<char, 4> kMagic = {'K', 'D', 'Q', 'I'};
constexpr std::size_t kEncodeGrain = 512;

void check_code(const DocumentCode& code, const IvfCentroids& centroids) {
  if (code.ivf_id >= centroids.lists) {
    throw ContractError("ivf id " + std::to_string(code.ivf_id) + " out of range [0," +
                        std::to_string(centroids.lists) + ")");
  }
}

}  // namespace

DocumentCode IndexArtifact::code(std::size_t doc) const {
  if (doc >= doc_count()) throw ContractError("doc id " + std::to_string(doc) + " out of range");
  const auto ids = pq_code(doc);
  return {ivf_ids[doc], {ids.begin(), ids.end()}};
}

void IndexArtifact::rebuild_posting_lists() {
  posting_lists.assign(centroids.lists, {});
  for (std::size_t d = 0; d < ivf_ids.size(); ++d) {
    posting_lists.at(ivf_ids[d]).push_back(static_cast<std::uint32_t>(d));
  }
}

void IndexArtifact::check_invariants() const {
  if (centroids.lists == 0 || centroids.dim == 0) throw ContractError("index has no centroids");
  if (centroids.values.size() != centroids.lists * centroids.dim) {
    throw ContractError("centroid buffer has the wrong size");
  }
  if (codebooks.m == 0 || codebooks.p < 2 || codebooks.dim() != centroids.dim) {
    throw ContractError("codebook shape inconsistent with centroid dimension");
  }
  if (codebooks.values.size() != codebooks.m * codebooks.p * codebooks.sub_dim) {
    throw ContractError("codebook buffer has the wrong size");
  }
  if (pq_ids.size() != doc_count() * codebooks.m) throw ContractError("pq code buffer size");
  for (const auto id : ivf_ids) {
    if (id >= centroids.lists) throw ContractError("ivf id out of range");
  }
  for (const auto id : pq_ids) {
    if (id >= codebooks.p) throw ContractError("pq id out of range");
  }
  if (posting_lists.size() != centroids.lists) throw ContractError("posting list count");
  std::vector<char> seen(doc_count(), 0);
  for (std::size_t l = 0; l < posting_lists.size(); ++l) {
    for (const auto d : posting_lists[l]) {
      if (d >= doc_count() || seen[d]) {
        throw ContractError("posting lists do not partition the document ids");
      }
      if (ivf_ids[d] != l) throw ContractError("posting list membership disagrees with code");
      seen[d] = 1;
    }
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) {
    throw ContractError("posting lists miss some documents");
  }
}

void encode_residual(std::span<const float> v, std::uint32_t ivf_id,
                     const IvfCentroids& centroids, const PqCodebooks& codebooks,
                     std::span<std::uint16_t> out) {
  if (v.size() != centroids.dim || codebooks.dim() != centroids.dim) {
    throw ContractError("encode: dimension mismatch");
  }
  if (ivf_id >= centroids.lists) throw ContractError("encode: ivf id out of range");
  const auto centroid = centroids.row(ivf_id);
  const std::size_t sub = codebooks.sub_dim;
  std::vector<float> residual(sub);
  for (std::size_t b = 0; b < codebooks.m; ++b) {
    for (std::size_t j = 0; j < sub; ++j) residual[j] = v[b * sub + j] - centroid[b * sub + j];
    const std::span<const float> book{codebooks.values.data() + b * codebooks.p * sub,
                                      codebooks.p * sub};
    out[b] = static_cast<std::uint16_t>(assign_nearest(residual, book, sub));
  }
}

DocumentCode encode_document(std::span<const float> v, const IvfCentroids& centroids,
                             const PqCodebooks& codebooks) {
  if (v.size() != centroids.dim) throw ContractError("encode: dimension mismatch");
  DocumentCode code;
  code.ivf_id = static_cast<std::uint32_t>(assign_nearest(v, centroids.values, centroids.dim));
  code.pq_ids.resize(codebooks.m);
  encode_residual(v, code.ivf_id, centroids, codebooks, code.pq_ids);
  return code;
}

std::vector<float> reconstruct_ivf(const DocumentCode& code, const IvfCentroids& centroids) {
  check_code(code, centroids);
  const auto row = centroids.row(code.ivf_id);
  return {row.begin(), row.end()};
}

std::vector<float> reconstruct_full(const DocumentCode& code, const IvfCentroids& centroids,
                                    const PqCodebooks& codebooks) {
  check_code(code, centroids);
  if (code.pq_ids.size() != codebooks.m || codebooks.dim() != centroids.dim) {
    throw ContractError("reconstruct: code does not match codebook shape");
  }
  std::vector<float> out = reconstruct_ivf(code, centroids);
  const std::size_t sub = codebooks.sub_dim;
  for (std::size_t b = 0; b < codebooks.m; ++b) {
    if (code.pq_ids[b] >= codebooks.p) throw ContractError("pq id out of range");
    const auto word = codebooks.codeword(b, code.pq_ids[b]);
    for (std::size_t j = 0; j < sub; ++j) out[b * sub + j] += word[j];
  }
  return out;
}

IndexArtifact init_index(const EmbeddingSet& docs, const IndexParams& params) {
  if (docs.empty()) throw ContractError("init_index: no documents");
  const std::size_t h = docs.dim();
  if (params.m == 0 || h % params.m != 0) {
    throw ContractError("embedding dimension " + std::to_string(h) +
                        " is not divisible by the codebook count " + std::to_string(params.m));
  }
  if (params.lists == 0) throw ContractError("init_index: list count must be positive");
  if (params.p < 2 || params.p > 65536) throw ContractError("init_index: P must be in [2, 65536]");
  if (docs.count() > std::numeric_limits<std::uint32_t>::max()) {
    throw ContractError("init_index: too many documents");
  }

  IndexArtifact index;
  KMeansConfig ivf_cfg{params.lists, params.kmeans_iters, mix_seed(params.seed, 0),
                       params.kmeans_tolerance};
  auto ivf = kmeans(docs, ivf_cfg);
  index.centroids = {params.lists, h, std::move(ivf.centroids)};

  const std::size_t n = docs.count();
  index.ivf_ids.resize(n);
  parallel_chunks(n, kEncodeGrain, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t d = begin; d < end; ++d) {
      index.ivf_ids[d] =
          static_cast<std::uint32_t>(assign_nearest(docs.row(d), index.centroids.values, h));
    }
  });

  const std::size_t sub = h / params.m;
  index.codebooks = {params.m, params.p, sub, std::vector<float>(params.m * params.p * sub)};
  std::vector<float> segment(n * sub);
  for (std::size_t b = 0; b < params.m; ++b) {
    for (std::size_t d = 0; d < n; ++d) {
      const auto v = docs.row(d);
      const auto o = index.centroids.row(index.ivf_ids[d]);
      for (std::size_t j = 0; j < sub; ++j) {
        segment[d * sub + j] = v[b * sub + j] - o[b * sub + j];
      }
    }
    KMeansConfig pq_cfg{params.p, params.kmeans_iters, mix_seed(params.seed, 1 + b),
                        params.kmeans_tolerance};
    const auto book = kmeans(segment, n, sub, pq_cfg);
    std::copy(book.centroids.begin(), book.centroids.end(),
              index.codebooks.values.begin() + static_cast<std::ptrdiff_t>(b * params.p * sub));
  }

  index.pq_ids.resize(n * params.m);
  reencode_pq(index, docs);
  index.rebuild_posting_lists();
  return index;
}

void reencode_pq(IndexArtifact& index, const EmbeddingSet& docs) {
  if (docs.count() != index.doc_count() || docs.dim() != index.dim()) {
    throw ContractError("reencode_pq: documents do not match the index");
  }
  const std::size_t m = index.codebooks.m;
  parallel_chunks(docs.count(), kEncodeGrain, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t d = begin; d < end; ++d) {
      encode_residual(docs.row(d), index.ivf_ids[d], index.centroids, index.codebooks,
                      {index.pq_ids.data() + d * m, m});
    }
  });
}

Distortion measure_distortion(const IndexArtifact& index, const EmbeddingSet& docs) {
  if (docs.count() != index.doc_count()) throw ContractError("distortion: doc count mismatch");
  Distortion out;
  if (docs.empty()) return out;
  for (std::size_t d = 0; d < docs.count(); ++d) {
    const auto code = index.code(d);
    out.ivf += l2_distance_sq(docs.row(d), reconstruct_ivf(code, index.centroids));
    out.full += l2_distance_sq(docs.row(d),
                               reconstruct_full(code, index.centroids, index.codebooks));
  }
  out.ivf /= static_cast<double>(docs.count());
  out.full /= static_cast<double>(docs.count());
  return out;
}

std::vector<char> serialize_index(const IndexArtifact& index) {
  index.check_invariants();
  detail::ByteWriter w;
  w.put_raw(kMagic.data(), kMagic.size());
  w.put<std::uint32_t>(kIndexFormatVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(index.centroids.lists));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(index.codebooks.m));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(index.codebooks.p));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(index.centroids.dim));
  w.put<std::uint64_t>(index.doc_count());
  w.put_array(index.centroids.values.data(), index.centroids.values.size());
  w.put_array(index.codebooks.values.data(), index.codebooks.values.size());
  const bool narrow = index.codebooks.p <= 256;
  for (std::size_t d = 0; d < index.doc_count(); ++d) {
    w.put<std::uint32_t>(index.ivf_ids[d]);
    for (const auto id : index.pq_code(d)) {
      if (narrow) {
        w.put<std::uint8_t>(static_cast<std::uint8_t>(id));
      } else {
        w.put<std::uint16_t>(id);
      }
    }
  }
  for (const auto& list : index.posting_lists) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(list.size()));
    w.put_array(list.data(), list.size());
  }
  auto& bytes = w.bytes();
  const auto crc = static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
  w.put<std::uint32_t>(crc);
  return std::move(bytes);
}

IndexArtifact deserialize_index(const std::vector<char>& bytes) {
  constexpr std::size_t kHeader = 4 + 5 * 4 + 8;
  if (bytes.size() < kHeader + 4) throw FormatError("index file too short for header", 0);
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw FormatError("not an index file (bad magic)", 0);
  }
  std::uint32_t version = 0;
  std::memcpy(&version, bytes.data() + 4, 4);
  if (version != kIndexFormatVersion) {
    throw FormatError("unsupported index format version " + std::to_string(version), 4);
  }
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored_crc = 0;
  std::memcpy(&stored_crc, bytes.data() + body, 4);
  const auto crc = static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(body)));
  if (crc != stored_crc) throw FormatError("index checksum mismatch", body);

  detail::ByteReader r(bytes.data(), body);
  r.get<std::uint32_t>("magic");
  r.get<std::uint32_t>("version");
  IndexArtifact index;
  index.centroids.lists = r.get<std::uint32_t>("header");
  index.codebooks.m = r.get<std::uint32_t>("header");
  index.codebooks.p = r.get<std::uint32_t>("header");
  index.centroids.dim = r.get<std::uint32_t>("header");
  const auto doc_count = r.get<std::uint64_t>("header");
  const std::size_t h = index.centroids.dim;
  const std::size_t m = index.codebooks.m;
  if (index.centroids.lists == 0 || m == 0 || h == 0 || h % m != 0 || index.codebooks.p < 2 ||
      index.codebooks.p > 65536) {
    throw FormatError("inconsistent index header", 8);
  }
  index.codebooks.sub_dim = h / m;

  const std::size_t centroid_floats = index.centroids.lists * h;
  const std::size_t codebook_floats = m * index.codebooks.p * index.codebooks.sub_dim;
  r.require((centroid_floats + codebook_floats) * 4, "parameter block");
  index.centroids.values.resize(centroid_floats);
  r.get_array(index.centroids.values.data(), centroid_floats, "centroids");
  index.codebooks.values.resize(codebook_floats);
  r.get_array(index.codebooks.values.data(), codebook_floats, "codebooks");

  const bool narrow = index.codebooks.p <= 256;
  r.require(doc_count * (4 + m * (narrow ? 1 : 2)), "codes");
  index.ivf_ids.resize(doc_count);
  index.pq_ids.resize(doc_count * m);
  for (std::size_t d = 0; d < doc_count; ++d) {
    index.ivf_ids[d] = r.get<std::uint32_t>("codes");
    for (std::size_t b = 0; b < m; ++b) {
      index.pq_ids[d * m + b] =
          narrow ? r.get<std::uint8_t>("codes") : r.get<std::uint16_t>("codes");
    }
  }
  index.posting_lists.resize(index.centroids.lists);
  for (auto& list : index.posting_lists) {
    const auto n = r.get<std::uint32_t>("posting list");
    list.resize(n);
    r.get_array(list.data(), n, "posting list");
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after posting lists", r.offset());
  for (const float x : index.centroids.values) {
    if (!std::isfinite(x)) throw FormatError("non-finite centroid value", 32);
  }
  for (const float x : index.codebooks.values) {
    if (!std::isfinite(x)) throw FormatError("non-finite codebook value", 32);
  }
  try {
    index.check_invariants();
  } catch (const ContractError& e) {
    throw FormatError(std::string("inconsistent index: ") + e.what(), 0);
  }
  return index;
}

void save_index(const IndexArtifact& index, const std::filesystem::path& path) {
  write_file_bytes(path, serialize_index(index));
}

IndexArtifact load_index(const std::filesystem::path& path) {
  return deserialize_index(read_file_bytes(path));
}

}  // namespace kdq
