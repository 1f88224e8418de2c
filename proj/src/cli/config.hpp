#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kdq::cli {

enum class KeyKind { path, integer, real, boolean, text, integer_list };

struct KeyInfo {
  std::string_view name;
  KeyKind kind;
  std::string_view default_value;  // empty: unset
  std::string_view help;
};

/// Every key a config file or flag may set.
std::span<const KeyInfo> known_keys();
const KeyInfo* find_key(std::string_view name);

/// Flat `key = value` run configuration. Values from a file resolve
/// relative paths against the file's directory; values set directly
/// resolve against the working directory.
class RunConfig {
 public:
  RunConfig();

  static RunConfig from_file(const std::filesystem::path& path);
  /// Parses `key = value` lines; '#' starts a comment.
  void merge_text(std::string_view text, const std::filesystem::path& base_dir);
  /// Throws ConfigError for unknown keys or malformed values.
  void set(std::string_view key, std::string value,
           const std::filesystem::path& base_dir = std::filesystem::current_path());

  bool has(std::string_view key) const;
  std::string text(std::string_view key) const;
  std::filesystem::path path(std::string_view key) const;
  std::optional<std::filesystem::path> optional_path(std::string_view key) const;
  std::size_t size(std::string_view key) const;
  std::uint64_t u64(std::string_view key) const;
  double real(std::string_view key) const;
  bool boolean(std::string_view key) const;
  std::vector<std::size_t> sizes(std::string_view key) const;

  /// Writes `# key = value` for each listed key that has a value.
  void echo(std::ostream& out, std::span<const std::string_view> keys) const;

 private:
  struct Entry {
    std::string value;
    std::filesystem::path base_dir;
  };
  const Entry* entry(std::string_view key) const;
  std::map<std::string, Entry, std::less<>> values_;
};

}  // namespace kdq::cli
