#include "cli/commands.hpp"

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <memory>
#include <sstream>

#include "kdq/distill.hpp"
#include "kdq/error.hpp"
#include "kdq/io.hpp"
#include "kdq/ivfpq.hpp"
#include "kdq/parallel.hpp"
#include "kdq/sampling.hpp"
#include "kdq/search.hpp"
#include "kdq/synth.hpp"

namespace kdq::cli {

namespace {

namespace fs = std::filesystem;
using Keys = std::span<const std::string_view>;

constexpr std::array<std::string_view, 6> kCommands = {"build", "mine-topk", "train",
                                                       "search", "eval", "synth"};

constexpr std::array<std::string_view, 9> kBuildKeys = {
    "docs", "index", "ivf_lists", "pq_m", "pq_p", "kmeans_iters", "kmeans_tol", "seed", "threads"};

constexpr std::array<std::string_view, 5> kMineKeys = {"queries", "docs", "topk_cache",
                                                       "topk_pool", "threads"};

constexpr std::array<std::string_view, 31> kTrainKeys = {
    "queries",      "docs",       "judgments",  "index",       "index_out",
    "transform",    "topk_cache", "checkpoint", "resume",      "train_log",
    "eval_queries", "eval_judgments", "loss",   "batch_size",  "epochs",
    "lr_query",     "lr_ivf",     "lr_pq",      "beta1",       "beta2",
    "adam_eps",     "weight_decay", "pq_reencode_cadence", "use_ground_truth", "topk_pool",
    "topk_take",    "use_in_batch", "nprobe",   "top_k",       "seed",
    "threads"};

constexpr std::array<std::string_view, 7> kSearchKeys = {"queries", "index", "transform", "results",
                                                         "nprobe",  "top_k", "threads"};

constexpr std::array<std::string_view, 9> kEvalKeys = {"queries", "judgments", "index",
                                                       "transform", "report", "nprobe",
                                                       "recall_ks", "mrr_k", "threads"};

constexpr std::array<std::string_view, 16> kSynthKeys = {
    "docs",          "queries",        "judgments",     "eval_queries",
    "eval_judgments", "num_docs",      "num_queries",   "num_eval_queries",
    "dim",           "clusters",       "cluster_spread", "spread_jitter",
    "norm_jitter",   "query_noise",    "norm",          "seed"};

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

std::ofstream open_output(const fs::path& p, std::ios::openmode mode = std::ios::trunc) {
  ensure_parent(p);
  std::ofstream out(p, std::ios::out | mode);
  if (!out) throw ConfigError("cannot open " + p.string() + " for writing");
  return out;
}

void write_judgments(const RelevanceJudgments& j, const fs::path& p) {
  ensure_parent(p);
  if (p.extension() == ".tsv") {
    write_judgments_tsv(j, p);
  } else {
    write_id_lists(j.lists(), p);
  }
}

IndexParams index_params(const RunConfig& cfg) {
  IndexParams params;
  params.lists = cfg.size("ivf_lists");
  params.m = cfg.size("pq_m");
  params.p = cfg.size("pq_p");
  params.kmeans_iters = cfg.size("kmeans_iters");
  params.kmeans_tolerance = cfg.real("kmeans_tol");
  params.seed = cfg.u64("seed");
  return params;
}

DistillConfig distill_config(const RunConfig& cfg) {
  DistillConfig dc;
  dc.loss = parse_loss(cfg.text("loss"));
  dc.batch_size = cfg.size("batch_size");
  dc.epochs = cfg.size("epochs");
  dc.lr_query = cfg.real("lr_query");
  dc.lr_ivf = cfg.real("lr_ivf");
  dc.lr_pq = cfg.real("lr_pq");
  dc.adam.beta1 = cfg.real("beta1");
  dc.adam.beta2 = cfg.real("beta2");
  dc.adam.eps = cfg.real("adam_eps");
  dc.adam.weight_decay = cfg.real("weight_decay");
  dc.pq_reencode_cadence = cfg.size("pq_reencode_cadence");
  dc.seed = cfg.u64("seed");
  dc.validate();
  return dc;
}

SamplingStrategy sampling_strategy(const RunConfig& cfg) {
  SamplingStrategy s;
  s.use_ground_truth = cfg.boolean("use_ground_truth");
  s.topk_pool = cfg.size("topk_pool");
  const auto take = cfg.text("topk_take");
  if (take == "all") {
    s.topk_take = 0;
  } else {
    std::size_t v = 0;
    std::istringstream in(take);
    if (!(in >> v) || !in.eof() || v == 0) {
      throw ConfigError("config key 'topk_take' expects `all` or a positive integer, got '" +
                        take + "'");
    }
    s.topk_take = v;
  }
  s.use_in_batch = cfg.boolean("use_in_batch");
  s.seed = cfg.u64("seed");
  s.validate();
  return s;
}

std::size_t single_nprobe(const RunConfig& cfg) {
  const auto values = cfg.sizes("nprobe");
  if (values.size() != 1) throw ConfigError("nprobe must be a single value for this command");
  return values.front();
}

std::unique_ptr<QueryTransform> optional_transform(const RunConfig& cfg) {
  const auto p = cfg.optional_path("transform");
  if (!p) return nullptr;
  return std::make_unique<QueryTransform>(load_transform(*p));
}

void cmd_build(const RunConfig& cfg, std::ostream& out) {
  const auto docs = read_embeddings(cfg.path("docs"));
  const auto out_path = cfg.path("index");
  const auto index = init_index(docs, index_params(cfg));
  ensure_parent(out_path);
  save_index(index, out_path);
  const auto d = measure_distortion(index, docs);
  out << "distortion_ivf\t" << d.ivf << "\ndistortion_full\t" << d.full << '\n';
}

void cmd_mine_topk(const RunConfig& cfg, std::ostream&) {
  const auto docs = read_embeddings(cfg.path("docs"));
  const auto queries = read_embeddings(cfg.path("queries"), docs.dim());
  const auto k = cfg.size("topk_pool");
  if (k == 0) throw ConfigError("mine-topk needs topk_pool > 0");
  const auto cache = mine_topk(queries, docs, k);
  const auto out_path = cfg.path("topk_cache");
  ensure_parent(out_path);
  write_id_lists(cache, out_path);
}

TopkCache load_or_mine_topk(const RunConfig& cfg, const EmbeddingSet& queries,
                            const EmbeddingSet& docs, std::size_t pool) {
  const auto p = cfg.optional_path("topk_cache");
  if (p && fs::exists(*p)) {
    auto cache = read_id_lists(*p);
    if (cache.size() != queries.count()) {
      throw FormatError("Top-K cache has " + std::to_string(cache.size()) + " lists for " +
                            std::to_string(queries.count()) + " queries",
                        0);
    }
    const auto want = std::min(pool, docs.count());
    for (const auto& list : cache) {
      if (list.size() < want) {
        throw ConfigError("Top-K cache lists hold fewer than topk_pool = " +
                          std::to_string(pool) + " ids");
      }
      for (const auto id : list) {
        if (id >= docs.count()) throw FormatError("Top-K cache id out of range", 0);
      }
    }
    return cache;
  }
  return mine_topk(queries, docs, pool);
}

void cmd_train(const RunConfig& cfg, std::ostream& out) {
  const auto config = distill_config(cfg);
  const auto strategy = sampling_strategy(cfg);
  const auto index_out = cfg.path("index_out");
  const auto transform_out = cfg.path("transform");

  const auto docs = read_embeddings(cfg.path("docs"));
  const auto queries = read_embeddings(cfg.path("queries"), docs.dim());
  auto index = load_index(cfg.path("index"));
  if (index.centroids.dim != docs.dim()) throw ContractError("index and docs differ in dimension");
  if (index.ivf_ids.size() != docs.count()) {
    throw ContractError("index covers " + std::to_string(index.ivf_ids.size()) +
                        " documents, docs file has " + std::to_string(docs.count()));
  }

  std::optional<RelevanceJudgments> judgments;
  if (strategy.use_ground_truth) {
    judgments = read_judgments(cfg.path("judgments"), queries.count(), docs.count());
  }
  std::optional<TopkCache> topk;
  if (strategy.topk_pool > 0) topk = load_or_mine_topk(cfg, queries, docs, strategy.topk_pool);

  std::optional<EmbeddingSet> eval_queries;
  std::optional<RelevanceJudgments> eval_judgments;
  if (cfg.has("eval_queries") && cfg.has("eval_judgments")) {
    eval_queries = read_embeddings(cfg.path("eval_queries"), docs.dim());
    eval_judgments =
        read_judgments(cfg.path("eval_judgments"), eval_queries->count(), docs.count());
  }
  SearchParams sp;
  sp.nprobe = single_nprobe(cfg);
  sp.top_k = cfg.size("top_k");

  const auto dim = docs.dim();
  Trainer trainer(std::move(index), QueryTransform::identity(dim), config, strategy);
  const auto resume = cfg.optional_path("resume");
  if (resume) trainer.restore(read_file_bytes(*resume));

  const auto checkpoint = cfg.optional_path("checkpoint");
  std::optional<std::ofstream> log;
  if (const auto p = cfg.optional_path("train_log")) {
    log = open_output(*p, resume ? std::ios::app : std::ios::trunc);
  }

  TrainingData data{queries, docs, judgments ? &*judgments : nullptr, topk ? &*topk : nullptr};
  out << "epoch\tmean_loss\trecall\n";
  trainer.train(data, [&](EpochRecord& rec) {
    if (eval_queries) {
      const auto results = search_all(*eval_queries, &trainer.transform(), trainer.index(), sp);
      rec.recall = recall_at_k(results, *eval_judgments, sp.top_k);
    }
    std::ostringstream line;
    line << rec.epoch << '\t' << std::setprecision(10) << rec.mean_loss << '\t';
    if (rec.recall) line << std::setprecision(6) << *rec.recall;
    line << '\n';
    out << line.str() << std::flush;
    if (log) *log << line.str() << std::flush;
    if (checkpoint) {
      ensure_parent(*checkpoint);
      write_file_bytes(*checkpoint, trainer.checkpoint());
    }
  });

  ensure_parent(index_out);
  ensure_parent(transform_out);
  save_transform(trainer.transform(), transform_out);
  save_index(trainer.index(), index_out);
}

void cmd_search(const RunConfig& cfg, std::ostream& out) {
  const auto index = load_index(cfg.path("index"));
  const auto queries = read_embeddings(cfg.path("queries"), index.centroids.dim);
  const auto transform = optional_transform(cfg);
  SearchParams sp;
  sp.nprobe = single_nprobe(cfg);
  sp.top_k = cfg.size("top_k");
  if (sp.top_k == 0) throw ConfigError("top_k must be at least 1");
  const auto results = search_all(queries, transform.get(), index, sp);

  std::optional<std::ofstream> file;
  if (const auto p = cfg.optional_path("results")) file = open_output(*p);
  std::ostream& sink = file ? *file : out;
  sink << "query\trank\tdoc\tscore\n";
  sink << std::setprecision(9);
  for (std::size_t q = 0; q < results.size(); ++q) {
    for (std::size_t r = 0; r < results[q].size(); ++r) {
      sink << q << '\t' << r + 1 << '\t' << results[q][r].id << '\t' << results[q][r].score
           << '\n';
    }
  }
}

struct EvalRow {
  std::size_t nprobe;
  std::vector<std::pair<std::size_t, double>> recall;
  double mrr;
};

void cmd_eval(const RunConfig& cfg, std::ostream& out) {
  const auto index = load_index(cfg.path("index"));
  const auto queries = read_embeddings(cfg.path("queries"), index.centroids.dim);
  const auto judgments =
      read_judgments(cfg.path("judgments"), queries.count(), index.ivf_ids.size());
  const auto transform = optional_transform(cfg);
  const auto ks = cfg.sizes("recall_ks");
  const auto mrr_k = cfg.size("mrr_k");
  const auto probes = cfg.sizes("nprobe");
  for (const auto k : ks) {
    if (k == 0) throw ConfigError("recall_ks entries must be at least 1");
  }
  if (mrr_k == 0) throw ConfigError("mrr_k must be at least 1");
  const auto depth = std::max(mrr_k, *std::max_element(ks.begin(), ks.end()));

  std::vector<EvalRow> rows;
  for (const auto nprobe : probes) {
    const auto results = search_all(queries, transform.get(), index, {nprobe, depth});
    EvalRow row{nprobe, {}, mrr_at_k(results, judgments, mrr_k)};
    for (const auto k : ks) row.recall.emplace_back(k, recall_at_k(results, judgments, k));
    rows.push_back(std::move(row));
  }

  std::optional<std::ofstream> file;
  if (const auto p = cfg.optional_path("report")) file = open_output(*p);
  std::ostream& sink = file ? *file : out;

  if (cfg.boolean("json")) {
    auto base = nlohmann::ordered_json::object();
    for (const auto key : kEvalKeys) {
      if (!cfg.has(key) || key == "nprobe") continue;
      const auto* info = find_key(key);
      if (info->kind == KeyKind::path) {
        base[std::string(key)] = cfg.path(key).string();
      } else if (info->kind == KeyKind::integer) {
        base[std::string(key)] = cfg.u64(key);
      } else {
        base[std::string(key)] = cfg.text(key);
      }
    }
    auto objects = nlohmann::ordered_json::array();
    for (const auto& row : rows) {
      auto obj = base;
      obj["nprobe"] = row.nprobe;
      for (const auto& [k, v] : row.recall) obj["recall@" + std::to_string(k)] = v;
      obj["mrr@" + std::to_string(mrr_k)] = row.mrr;
      objects.push_back(std::move(obj));
    }
    sink << (objects.size() == 1 ? objects.front() : objects).dump(2) << '\n';
    return;
  }

  if (file) cfg.echo(sink, kEvalKeys);
  sink << "metric\tk\tvalue\n" << std::fixed << std::setprecision(6);
  for (const auto& row : rows) {
    if (rows.size() > 1) sink << "# sweep nprobe = " << row.nprobe << '\n';
    for (const auto& [k, v] : row.recall) sink << "recall\t" << k << '\t' << v << '\n';
    sink << "mrr\t" << mrr_k << '\t' << row.mrr << '\n';
  }
}

void cmd_synth(const RunConfig& cfg, std::ostream&) {
  SynthConfig sc;
  sc.docs = cfg.size("num_docs");
  sc.queries = cfg.size("num_queries");
  sc.eval_queries = cfg.size("num_eval_queries");
  sc.dim = cfg.size("dim");
  sc.clusters = cfg.size("clusters");
  sc.cluster_spread = cfg.real("cluster_spread");
  sc.spread_jitter = cfg.real("spread_jitter");
  sc.norm_jitter = cfg.real("norm_jitter");
  sc.query_noise = cfg.real("query_noise");
  sc.norm = cfg.real("norm");
  sc.seed = cfg.u64("seed");
  const auto docs_path = cfg.path("docs");
  const auto queries_path = cfg.path("queries");
  const auto judgments_path = cfg.path("judgments");
  const auto data = synthesize(sc);
  ensure_parent(docs_path);
  ensure_parent(queries_path);
  write_embeddings(data.docs, docs_path);
  write_embeddings(data.queries, queries_path);
  write_judgments(data.judgments, judgments_path);
  if (const auto p = cfg.optional_path("eval_queries")) {
    ensure_parent(*p);
    write_embeddings(data.eval_queries, *p);
  }
  if (const auto p = cfg.optional_path("eval_judgments")) write_judgments(data.eval_judgments, *p);
}

Keys command_keys(std::string_view command) {
  if (command == "build") return kBuildKeys;
  if (command == "mine-topk") return kMineKeys;
  if (command == "train") return kTrainKeys;
  if (command == "search") return kSearchKeys;
  if (command == "eval") return kEvalKeys;
  if (command == "synth") return kSynthKeys;
  throw ConfigError("unknown command '" + std::string(command) + "'");
}

}  // namespace

std::span<const std::string_view> command_names() { return kCommands; }

void run_command(std::string_view command, const RunConfig& cfg, std::ostream& out) {
  const auto keys = command_keys(command);
  const bool json_report = command == "eval" && cfg.boolean("json");
  if (!json_report) cfg.echo(out, keys);
  if (cfg.has("threads")) set_threads(cfg.size("threads"));

  if (command == "build") {
    cmd_build(cfg, out);
  } else if (command == "mine-topk") {
    cmd_mine_topk(cfg, out);
  } else if (command == "train") {
    cmd_train(cfg, out);
  } else if (command == "search") {
    cmd_search(cfg, out);
  } else if (command == "eval") {
    cmd_eval(cfg, out);
  } else {
    cmd_synth(cfg, out);
  }
}

int run_command_guarded(std::string_view command, const RunConfig& cfg, std::ostream& out,
                        std::ostream& err) {
  try {
    run_command(command, cfg, out);
    return 0;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const ContractError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << '\n';
    return 3;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace kdq::cli
