#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "kdq/embedding.hpp"

namespace kdq {

// Vector files: little-endian records of [int32 dim][dim x float32].
// An empty file holds zero vectors; its dimension must be supplied by the
// caller through dim_hint.
EmbeddingSet read_embeddings(const std::filesystem::path& path,
                             std::optional<std::size_t> dim_hint = std::nullopt);
void write_embeddings(const EmbeddingSet& set, const std::filesystem::path& path);

// Integer-id files: records of [int32 n][n x int32].
std::vector<std::vector<std::uint32_t>> read_id_lists(const std::filesystem::path& path);
void write_id_lists(const std::vector<std::vector<std::uint32_t>>& lists,
                    const std::filesystem::path& path);

/// Loads judgments from an id-list file or, for a `.tsv` extension, from
/// `query_row<TAB>doc_row` lines. The result always has query_count entries.
RelevanceJudgments read_judgments(const std::filesystem::path& path, std::size_t query_count,
                                  std::size_t doc_count);
void write_judgments_tsv(const RelevanceJudgments& judgments, const std::filesystem::path& path);

std::vector<char> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<char>& bytes);

}  // namespace kdq
