#include "cli/config.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <sstream>

#include "kdq/error.hpp"
#include "kdq/io.hpp"

namespace kdq::cli {

namespace {

constexpr std::array kKeys = {
    // data
    KeyInfo{"queries", KeyKind::path, "", "query embedding file"},
    KeyInfo{"docs", KeyKind::path, "", "document embedding file"},
    KeyInfo{"judgments", KeyKind::path, "", "ground truth for `queries` (ids file or .tsv)"},
    KeyInfo{"eval_queries", KeyKind::path, "", "held-out query embeddings"},
    KeyInfo{"eval_judgments", KeyKind::path, "", "ground truth for `eval_queries`"},
    KeyInfo{"topk_cache", KeyKind::path, "", "mined Top-K id lists"},
    KeyInfo{"index", KeyKind::path, "", "index file (input, or output of build)"},
    KeyInfo{"index_out", KeyKind::path, "", "trained index output"},
    KeyInfo{"transform", KeyKind::path, "", "query transform file"},
    KeyInfo{"checkpoint", KeyKind::path, "", "checkpoint written after every epoch"},
    KeyInfo{"resume", KeyKind::path, "", "checkpoint to resume training from"},
    KeyInfo{"train_log", KeyKind::path, "", "per-epoch TSV training log"},
    KeyInfo{"results", KeyKind::path, "", "search results TSV (default stdout)"},
    KeyInfo{"report", KeyKind::path, "", "evaluation report (default stdout)"},
    // index
    KeyInfo{"ivf_lists", KeyKind::integer, "10000", "IVF posting lists"},
    KeyInfo{"pq_m", KeyKind::integer, "64", "PQ codebooks"},
    KeyInfo{"pq_p", KeyKind::integer, "256", "codewords per codebook"},
    KeyInfo{"kmeans_iters", KeyKind::integer, "25", "Lloyd iterations"},
    KeyInfo{"kmeans_tol", KeyKind::real, "1e-4", "relative objective tolerance"},
    // training
    KeyInfo{"loss", KeyKind::text, "listnet", "mse | margin_mse | ranknet | kl_div | listnet"},
    KeyInfo{"batch_size", KeyKind::integer, "8", "queries per batch"},
    KeyInfo{"epochs", KeyKind::integer, "10", "training epochs"},
    KeyInfo{"lr_query", KeyKind::real, "5e-6", "query transform learning rate"},
    KeyInfo{"lr_ivf", KeyKind::real, "1e-3", "IVF centroid learning rate"},
    KeyInfo{"lr_pq", KeyKind::real, "1e-4", "PQ codebook learning rate"},
    KeyInfo{"beta1", KeyKind::real, "0.9", "AdamW beta1"},
    KeyInfo{"beta2", KeyKind::real, "0.999", "AdamW beta2"},
    KeyInfo{"adam_eps", KeyKind::real, "1e-8", "AdamW epsilon"},
    KeyInfo{"weight_decay", KeyKind::real, "0", "AdamW decoupled weight decay"},
    KeyInfo{"pq_reencode_cadence", KeyKind::integer, "1", "epochs between PQ refreshes (0 never)"},
    // sampling
    KeyInfo{"use_ground_truth", KeyKind::boolean, "false", "add ground-truth candidates"},
    KeyInfo{"topk_pool", KeyKind::integer, "200", "Top-K pool size (0 disables)"},
    KeyInfo{"topk_take", KeyKind::text, "all", "`all` or the number drawn from the pool"},
    KeyInfo{"use_in_batch", KeyKind::boolean, "true", "share candidates within a batch"},
    // search / eval
    KeyInfo{"nprobe", KeyKind::integer_list, "1", "posting lists probed (comma list sweeps)"},
    KeyInfo{"top_k", KeyKind::integer, "100", "results per query"},
    KeyInfo{"recall_ks", KeyKind::integer_list, "10,50,100", "Recall@K cut-offs"},
    KeyInfo{"mrr_k", KeyKind::integer, "10", "MRR cut-off"},
    KeyInfo{"json", KeyKind::boolean, "false", "emit the report as JSON"},
    // synth
    KeyInfo{"num_docs", KeyKind::integer, "20000", "synthetic documents"},
    KeyInfo{"num_queries", KeyKind::integer, "2000", "synthetic training queries"},
    KeyInfo{"num_eval_queries", KeyKind::integer, "500", "synthetic held-out queries"},
    KeyInfo{"dim", KeyKind::integer, "64", "embedding dimension"},
    KeyInfo{"clusters", KeyKind::integer, "50", "synthetic clusters"},
    KeyInfo{"cluster_spread", KeyKind::real, "2.0", "document offset from cluster direction"},
    KeyInfo{"spread_jitter", KeyKind::real, "0.5", "per-cluster log-normal spread sigma"},
    KeyInfo{"norm_jitter", KeyKind::real, "0.1", "per-document log-normal norm sigma"},
    KeyInfo{"query_noise", KeyKind::real, "1.0", "query perturbation (0 copies the doc)"},
    KeyInfo{"norm", KeyKind::real, "6.0", "embedding norm scale"},
    // general
    KeyInfo{"seed", KeyKind::integer, "0", "random seed"},
    KeyInfo{"threads", KeyKind::integer, "0", "worker cap (0 = hardware)"},
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
bool parse_number(std::string_view text, T& out) {
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc{} && ptr == end;
}

std::vector<std::string_view> split_commas(std::string_view text) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto stop = comma == std::string_view::npos ? text.size() : comma;
    parts.push_back(text.substr(start, stop - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return parts;
}

void validate_value(const KeyInfo& info, const std::string& value) {
  auto fail = [&](const char* expected) {
    throw ConfigError("config key '" + std::string(info.name) + "' expects " + expected +
                      ", got '" + value + "'");
  };
  switch (info.kind) {
    case KeyKind::integer: {
      std::uint64_t v = 0;
      if (!parse_number(value, v)) fail("a non-negative integer");
      break;
    }
    case KeyKind::real: {
      double v = 0.0;
      if (!parse_number(value, v) || !std::isfinite(v)) fail("a finite number");
      break;
    }
    case KeyKind::boolean:
      if (value != "true" && value != "false") fail("true or false");
      break;
    case KeyKind::integer_list:
      for (const auto part : split_commas(value)) {
        std::uint64_t v = 0;
        if (!parse_number(trim(part), v)) fail("a comma-separated list of integers");
      }
      break;
    case KeyKind::path:
      if (value.empty()) fail("a path");
      break;
    case KeyKind::text:
      break;
  }
}

}  // namespace

std::span<const KeyInfo> known_keys() { return kKeys; }

const KeyInfo* find_key(std::string_view name) {
  for (const auto& k : kKeys) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

RunConfig::RunConfig() {
  for (const auto& k : kKeys) {
    if (!k.default_value.empty()) values_[std::string(k.name)] = {std::string(k.default_value), {}};
  }
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
  const auto bytes = read_file_bytes(path);
  RunConfig cfg;
  cfg.merge_text({bytes.data(), bytes.size()},
                 std::filesystem::absolute(path).parent_path());
  return cfg;
}

void RunConfig::merge_text(std::string_view text, const std::filesystem::path& base_dir) {
  std::size_t line_no = 0;
  std::vector<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const auto content = trim(line);
    if (content.empty()) continue;
    const auto eq = content.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected `key = value`");
    }
    const auto key = trim(std::string_view(content).substr(0, eq));
    if (std::find(seen.begin(), seen.end(), key) != seen.end()) {
      throw ConfigError("config line " + std::to_string(line_no) + ": key '" + key +
                        "' set twice");
    }
    seen.push_back(key);
    set(key, trim(std::string_view(content).substr(eq + 1)), base_dir);
  }
}

void RunConfig::set(std::string_view key, std::string value,
                    const std::filesystem::path& base_dir) {
  const auto* info = find_key(key);
  if (info == nullptr) throw ConfigError("unknown config key '" + std::string(key) + "'");
  validate_value(*info, value);
  values_[std::string(key)] = {std::move(value), base_dir};
}

const RunConfig::Entry* RunConfig::entry(std::string_view key) const {
  if (find_key(key) == nullptr) throw ConfigError("unknown config key '" + std::string(key) + "'");
  const auto it = values_.find(key);
  return it == values_.end() ? nullptr : &it->second;
}

bool RunConfig::has(std::string_view key) const { return entry(key) != nullptr; }

std::string RunConfig::text(std::string_view key) const {
  const auto* e = entry(key);
  if (e == nullptr) throw ConfigError("missing required config key '" + std::string(key) + "'");
  return e->value;
}

std::filesystem::path RunConfig::path(std::string_view key) const {
  const auto* e = entry(key);
  if (e == nullptr) throw ConfigError("missing required path '" + std::string(key) + "'");
  std::filesystem::path p(e->value);
  if (p.is_relative() && !e->base_dir.empty()) p = e->base_dir / p;
  return p;
}

std::optional<std::filesystem::path> RunConfig::optional_path(std::string_view key) const {
  if (!has(key)) return std::nullopt;
  return path(key);
}

std::uint64_t RunConfig::u64(std::string_view key) const {
  std::uint64_t v = 0;
  parse_number(text(key), v);
  return v;
}

std::size_t RunConfig::size(std::string_view key) const {
  return static_cast<std::size_t>(u64(key));
}

double RunConfig::real(std::string_view key) const {
  double v = 0.0;
  parse_number(text(key), v);
  return v;
}

bool RunConfig::boolean(std::string_view key) const { return text(key) == "true"; }

std::vector<std::size_t> RunConfig::sizes(std::string_view key) const {
  std::vector<std::size_t> out;
  const auto value = text(key);
  for (const auto part : split_commas(value)) {
    std::uint64_t v = 0;
    parse_number(trim(part), v);
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

void RunConfig::echo(std::ostream& out, std::span<const std::string_view> keys) const {
  for (const auto key : keys) {
    if (!has(key)) continue;
    const auto* info = find_key(key);
    out << "# " << key << " = ";
    if (info->kind == KeyKind::path) {
      out << path(key).string();
    } else {
      out << text(key);
    }
    out << '\n';
  }
}

}  // namespace kdq::cli
