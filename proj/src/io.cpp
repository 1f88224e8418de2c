#include "kdq/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

#include "binary.hpp"
#include "kdq/error.hpp"

namespace kdq {

std::vector<char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<char> bytes(size);
  if (size > 0 && !in.read(bytes.data(), static_cast<std::streamsize>(size))) {
    throw FormatError("short read of " + path.string(), 0);
  }
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ConfigError("write failed for " + path.string());
}

EmbeddingSet read_embeddings(const std::filesystem::path& path,
                             std::optional<std::size_t> dim_hint) {
  const auto bytes = read_file_bytes(path);
  if (bytes.empty()) {
    if (!dim_hint || *dim_hint == 0) {
      throw FormatError("empty vector file " + path.string() + " carries no dimension", 0);
    }
    return EmbeddingSet(*dim_hint);
  }
  detail::ByteReader reader(bytes.data(), bytes.size());
  std::vector<float> values;
  std::size_t dim = 0;
  std::size_t record = 0;
  while (reader.remaining() > 0) {
    const std::size_t record_offset = reader.offset();
    const auto d = reader.get<std::int32_t>("record header");
    if (d <= 0) {
      throw FormatError("record " + std::to_string(record) + " has non-positive dimension " +
                            std::to_string(d),
                        record_offset);
    }
    if (record == 0) {
      dim = static_cast<std::size_t>(d);
      if (dim_hint && *dim_hint != dim) {
        throw FormatError("dimension " + std::to_string(dim) + " disagrees with expected " +
                              std::to_string(*dim_hint),
                          record_offset);
      }
      if (bytes.size() % (4 + 4 * dim) == 0) values.reserve(bytes.size() / (4 + 4 * dim) * dim);
    } else if (static_cast<std::size_t>(d) != dim) {
      throw FormatError("record " + std::to_string(record) + " has dimension " +
                            std::to_string(d) + " but record 0 has " + std::to_string(dim),
                        record_offset);
    }
    reader.require(dim * sizeof(float), "record payload");
    const std::size_t start = values.size();
    values.resize(start + dim);
    const std::size_t data_offset = reader.offset();
    reader.get_array(values.data() + start, dim, "record payload");
    for (std::size_t i = 0; i < dim; ++i) {
      if (!std::isfinite(values[start + i])) {
        throw FormatError("non-finite value in record " + std::to_string(record),
                          data_offset + 4 * i);
      }
    }
    ++record;
  }
  return EmbeddingSet(record, dim, std::move(values));
}

void write_embeddings(const EmbeddingSet& set, const std::filesystem::path& path) {
  detail::ByteWriter writer;
  const auto dim = static_cast<std::int32_t>(set.dim());
  for (std::size_t i = 0; i < set.count(); ++i) {
    writer.put(dim);
    writer.put_array(set.row(i).data(), set.dim());
  }
  write_file_bytes(path, writer.bytes());
}

std::vector<std::vector<std::uint32_t>> read_id_lists(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  detail::ByteReader reader(bytes.data(), bytes.size());
  std::vector<std::vector<std::uint32_t>> lists;
  while (reader.remaining() > 0) {
    const std::size_t record_offset = reader.offset();
    const auto n = reader.get<std::int32_t>("record header");
    if (n < 0) {
      throw FormatError("record " + std::to_string(lists.size()) + " has negative length",
                        record_offset);
    }
    reader.require(static_cast<std::size_t>(n) * sizeof(std::int32_t), "record payload");
    std::vector<std::int32_t> raw(static_cast<std::size_t>(n));
    const std::size_t data_offset = reader.offset();
    reader.get_array(raw.data(), raw.size(), "record payload");
    auto& out = lists.emplace_back();
    out.reserve(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (raw[i] < 0) throw FormatError("negative id", data_offset + 4 * i);
      out.push_back(static_cast<std::uint32_t>(raw[i]));
    }
  }
  return lists;
}

void write_id_lists(const std::vector<std::vector<std::uint32_t>>& lists,
                    const std::filesystem::path& path) {
  detail::ByteWriter writer;
  for (const auto& list : lists) {
    writer.put(static_cast<std::int32_t>(list.size()));
    for (const auto id : list) {
      if (id > static_cast<std::uint32_t>(std::numeric_limits<std::int32_t>::max())) {
        throw ContractError("id " + std::to_string(id) + " does not fit an int32 record");
      }
      writer.put(static_cast<std::int32_t>(id));
    }
  }
  write_file_bytes(path, writer.bytes());
}

namespace {

std::uint32_t parse_row(std::string_view field, std::size_t line_no, std::size_t offset) {
  std::uint32_t value = 0;
  const auto* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc{} || ptr != end) {
    throw FormatError("line " + std::to_string(line_no) + ": expected a row index, got '" +
                          std::string(field) + "'",
                      offset);
  }
  return value;
}

RelevanceJudgments read_judgments_tsv(const std::filesystem::path& path,
                                      std::size_t query_count) {
  const auto bytes = read_file_bytes(path);
  std::vector<std::vector<std::uint32_t>> lists(query_count);
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < bytes.size()) {
    std::size_t eol = pos;
    while (eol < bytes.size() && bytes[eol] != '\n') ++eol;
    std::string_view line(bytes.data() + pos, eol - pos);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) {
      const auto tab = line.find('\t');
      if (tab == std::string_view::npos) {
        throw FormatError("line " + std::to_string(line_no) + ": missing tab separator", pos);
      }
      const auto q = parse_row(line.substr(0, tab), line_no, pos);
      const auto d = parse_row(line.substr(tab + 1), line_no, pos + tab + 1);
      if (q >= query_count) {
        throw FormatError("line " + std::to_string(line_no) + ": query row " +
                              std::to_string(q) + " out of range",
                          pos);
      }
      lists[q].push_back(d);
    }
    pos = eol + 1;
  }
  return RelevanceJudgments(std::move(lists));
}

}  // namespace

RelevanceJudgments read_judgments(const std::filesystem::path& path, std::size_t query_count,
                                  std::size_t doc_count) {
  RelevanceJudgments judgments;
  if (path.extension() == ".tsv") {
    judgments = read_judgments_tsv(path, query_count);
  } else {
    auto lists = read_id_lists(path);
    if (lists.size() != query_count) {
      throw FormatError(path.string() + " holds " + std::to_string(lists.size()) +
                            " records for " + std::to_string(query_count) + " queries",
                        0);
    }
    judgments = RelevanceJudgments(std::move(lists));
  }
  judgments.validate(doc_count);
  return judgments;
}

void write_judgments_tsv(const RelevanceJudgments& judgments, const std::filesystem::path& path) {
  std::ostringstream out;
  for (std::size_t q = 0; q < judgments.query_count(); ++q) {
    for (const auto d : judgments.relevant(q)) out << q << '\t' << d << '\n';
  }
  const auto text = out.str();
  write_file_bytes(path, std::vector<char>(text.begin(), text.end()));
}

}  // namespace kdq
