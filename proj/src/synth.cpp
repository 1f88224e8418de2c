#include "kdq/synth.hpp"

#include <cmath>
#include <random>

#include "kdq/error.hpp"
#include "kdq/seed.hpp"

namespace kdq {

namespace {

void normalize_to(std::vector<double>& v, double norm) {
  double s = 0.0;
  for (const double x : v) s += x * x;
  const double scale = s > 0.0 ? norm / std::sqrt(s) : 0.0;
  for (double& x : v) x *= scale;
}

struct QuerySample {
  EmbeddingSet queries;
  RelevanceJudgments judgments;
};

QuerySample sample_queries(const SynthConfig& cfg, const EmbeddingSet& docs, std::size_t count,
                           std::uint64_t stream) {
  std::mt19937_64 rng(mix_seed(cfg.seed, stream));
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(cfg.dim)));
  std::vector<float> values(count * cfg.dim);
  std::vector<std::vector<std::uint32_t>> truth(count);
  std::vector<double> v(cfg.dim);
  for (std::size_t q = 0; q < count; ++q) {
    const auto source = static_cast<std::uint32_t>(rng() % docs.count());
    truth[q] = {source};
    const auto doc = docs.row(source);
    if (cfg.query_noise == 0.0) {
      std::copy(doc.begin(), doc.end(), values.begin() + static_cast<std::ptrdiff_t>(q * cfg.dim));
      continue;
    }
    for (std::size_t j = 0; j < cfg.dim; ++j) {
      v[j] = doc[j] / cfg.norm + cfg.query_noise * normal(rng);
    }
    normalize_to(v, cfg.norm);
    for (std::size_t j = 0; j < cfg.dim; ++j) values[q * cfg.dim + j] = static_cast<float>(v[j]);
  }
  return {EmbeddingSet(count, cfg.dim, std::move(values)), RelevanceJudgments(std::move(truth))};
}

}  // namespace

SynthData synthesize(const SynthConfig& cfg) {
  if (cfg.dim == 0 || cfg.clusters == 0 || cfg.docs == 0) {
    throw ConfigError("synth: dim, clusters and docs must be positive");
  }
  if (!(cfg.norm > 0.0) || cfg.cluster_spread < 0.0 || cfg.query_noise < 0.0) {
    throw ConfigError("synth: norm must be positive and spreads non-negative");
  }
  const std::size_t h = cfg.dim;
  std::mt19937_64 rng(mix_seed(cfg.seed, 0));
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(h)));

  std::vector<std::vector<double>> centers(cfg.clusters, std::vector<double>(h));
  for (auto& c : centers) {
    for (double& x : c) x = normal(rng);
    normalize_to(c, 1.0);
  }

  std::normal_distribution<double> standard(0.0, 1.0);
  std::vector<double> spread(cfg.clusters);
  for (auto& s : spread) s = cfg.cluster_spread * std::exp(cfg.spread_jitter * standard(rng));

  std::vector<float> doc_values(cfg.docs * h);
  std::vector<double> v(h);
  for (std::size_t d = 0; d < cfg.docs; ++d) {
    const std::size_t c = rng() % cfg.clusters;
    for (std::size_t j = 0; j < h; ++j) v[j] = centers[c][j] + spread[c] * normal(rng);
    normalize_to(v, cfg.norm * std::exp(cfg.norm_jitter * standard(rng)));
    for (std::size_t j = 0; j < h; ++j) doc_values[d * h + j] = static_cast<float>(v[j]);
  }

  SynthData out;
  out.docs = EmbeddingSet(cfg.docs, h, std::move(doc_values));
  auto train = sample_queries(cfg, out.docs, cfg.queries, 1);
  out.queries = std::move(train.queries);
  out.judgments = std::move(train.judgments);
  auto eval = sample_queries(cfg, out.docs, cfg.eval_queries, 2);
  out.eval_queries = std::move(eval.queries);
  out.eval_judgments = std::move(eval.judgments);
  return out;
}

}  // namespace kdq
