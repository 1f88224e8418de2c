#include "kdq/distill.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>
#include <string>

#include "binary.hpp"
#include "kdq/error.hpp"
#include "kdq/io.hpp"
#include "kdq/seed.hpp"

namespace kdq {

namespace {

constexpr std::array<char, 4> kTransformMagic = {'K', 'D', 'Q', 'T'};
constexpr std::array<char, 4> kCheckpointMagic = {'K', 'D', 'Q', 'C'};
constexpr std::uint32_t kTransformVersion = 1;
constexpr std::uint32_t kCheckpointVersion = 1;

std::uint32_t checksum(const std::vector<char>& bytes, std::size_t n) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(n)));
}

void seal(detail::ByteWriter& w) { w.put<std::uint32_t>(checksum(w.bytes(), w.bytes().size())); }

// Verifies magic, version and trailing checksum; returns a reader over the
// body positioned after the version field.
detail::ByteReader open_sealed(const std::vector<char>& bytes, const std::array<char, 4>& magic,
                               std::uint32_t expected_version, const char* what) {
  if (bytes.size() < 12) throw FormatError(std::string(what) + " file too short", 0);
  if (!std::equal(magic.begin(), magic.end(), bytes.begin())) {
    throw FormatError(std::string("not a ") + what + " file (bad magic)", 0);
  }
  std::uint32_t version = 0;
  std::memcpy(&version, bytes.data() + 4, 4);
  if (version != expected_version) {
    throw FormatError(std::string("unsupported ") + what + " version " + std::to_string(version),
                      4);
  }
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored = 0;
  std::memcpy(&stored, bytes.data() + body, 4);
  if (checksum(bytes, body) != stored) {
    throw FormatError(std::string(what) + " checksum mismatch", body);
  }
  detail::ByteReader r(bytes.data(), body);
  r.get<std::uint32_t>("magic");
  r.get<std::uint32_t>("version");
  return r;
}

}  // namespace

QueryTransform QueryTransform::identity(std::size_t dim) {
  if (dim == 0) throw ContractError("query transform dimension must be positive");
  QueryTransform t;
  t.dim = dim;
  t.weight.assign(dim * dim, 0.0f);
  for (std::size_t i = 0; i < dim; ++i) t.weight[i * dim + i] = 1.0f;
  t.bias.assign(dim, 0.0f);
  return t;
}

std::vector<double> QueryTransform::apply(std::span<const float> v) const {
  if (v.size() != dim) throw ContractError("query transform: dimension mismatch");
  std::vector<double> out(dim);
  for (std::size_t r = 0; r < dim; ++r) {
    double s = bias[r];
    const float* row = weight.data() + r * dim;
    for (std::size_t c = 0; c < dim; ++c) s += static_cast<double>(row[c]) * v[c];
    out[r] = s;
  }
  return out;
}

std::vector<char> serialize_transform(const QueryTransform& transform) {
  detail::ByteWriter w;
  w.put_raw(kTransformMagic.data(), 4);
  w.put<std::uint32_t>(kTransformVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(transform.dim));
  w.put_array(transform.weight.data(), transform.weight.size());
  w.put_array(transform.bias.data(), transform.bias.size());
  seal(w);
  return std::move(w.bytes());
}

QueryTransform deserialize_transform(const std::vector<char>& bytes) {
  auto r = open_sealed(bytes, kTransformMagic, kTransformVersion, "query transform");
  QueryTransform t;
  t.dim = r.get<std::uint32_t>("dimension");
  if (t.dim == 0) throw FormatError("query transform has zero dimension", 8);
  t.weight.resize(t.dim * t.dim);
  t.bias.resize(t.dim);
  r.get_array(t.weight.data(), t.weight.size(), "weights");
  r.get_array(t.bias.data(), t.bias.size(), "bias");
  if (r.remaining() != 0) throw FormatError("trailing bytes in query transform", r.offset());
  return t;
}

void save_transform(const QueryTransform& transform, const std::filesystem::path& path) {
  write_file_bytes(path, serialize_transform(transform));
}

QueryTransform load_transform(const std::filesystem::path& path) {
  return deserialize_transform(read_file_bytes(path));
}

std::vector<double> student_scores(std::size_t query_row, std::span<const std::uint32_t> doc_ids,
                                   const EmbeddingSet& queries, const QueryTransform& transform,
                                   const IndexArtifact& index, StudentMode mode) {
  if (query_row >= queries.count()) throw ContractError("student_scores: query out of range");
  const auto vq = transform.apply(queries.row(query_row));
  std::vector<double> out;
  out.reserve(doc_ids.size());
  for (const auto d : doc_ids) {
    const auto code = index.code(d);
    const auto recon = mode == StudentMode::ivf
                           ? reconstruct_ivf(code, index.centroids)
                           : reconstruct_full(code, index.centroids, index.codebooks);
    out.push_back(inner_product_f64(vq, recon));
  }
  return out;
}

void Gradients::reset(const IndexArtifact& index) {
  const std::size_t h = index.dim();
  weight.assign(h * h, 0.0);
  bias.assign(h, 0.0);
  centroids.assign(index.centroids.values.size(), 0.0);
  touched_lists.assign(index.centroids.lists, 0);
  codewords.assign(index.codebooks.values.size(), 0.0);
  touched_codewords.assign(index.codebooks.m * index.codebooks.p, 0);
  loss = 0.0;
  queries = 0;
}

void backward(std::span<const CandidateSet> batch, const EmbeddingSet& queries,
              const QueryTransform& transform, const IndexArtifact& index, LossKind loss,
              Gradients& out) {
  const std::size_t h = index.dim();
  if (queries.dim() != h || transform.dim != h) throw ContractError("backward: dimension mismatch");
  out.reset(index);
  const auto& cb = index.codebooks;
  const std::size_t m = cb.m;
  const std::size_t p = cb.p;
  const std::size_t sub = cb.sub_dim;

  // Per-query scratch. Coefficients are dLoss/dscore summed per list and per
  // codeword; first-seen order keeps the accumulation deterministic.
  std::vector<double> list_score(index.centroids.lists);
  std::vector<double> list_coef(index.centroids.lists, 0.0);
  std::vector<char> list_seen(index.centroids.lists, 0);
  std::vector<std::uint32_t> lists_used;
  std::vector<double> partial(m * p);
  std::vector<double> code_coef(m * p, 0.0);
  std::vector<char> code_seen(m * p, 0);
  std::vector<std::uint32_t> codes_used;
  std::vector<double> s_ivf, s_pq, g_ivf, g_pq, grad_vq(h);

  for (const auto& cand : batch) {
    if (cand.doc_ids.empty()) continue;
    if (cand.teacher_scores.size() != cand.doc_ids.size()) {
      throw ContractError("candidate set without teacher scores");
    }
    const auto vq_raw = queries.row(cand.query_row);
    const auto vq = transform.apply(vq_raw);

    for (std::size_t b = 0; b < m; ++b) {
      for (std::size_t j = 0; j < p; ++j) {
        const auto word = cb.codeword(b, j);
        double s = 0.0;
        for (std::size_t k = 0; k < sub; ++k) s += vq[b * sub + k] * word[k];
        partial[b * p + j] = s;
      }
    }

    const std::size_t n = cand.doc_ids.size();
    s_ivf.resize(n);
    s_pq.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto d = cand.doc_ids[i];
      if (d >= index.doc_count()) throw ContractError("backward: doc id out of range");
      const auto l = index.ivf_ids[d];
      if (!list_seen[l]) {
        list_seen[l] = 1;
        lists_used.push_back(l);
        list_score[l] = inner_product_f64(vq, index.centroids.row(l));
      }
      double s = list_score[l];
      const auto ids = index.pq_code(d);
      for (std::size_t b = 0; b < m; ++b) {
        const std::size_t slot = b * p + ids[b];
        s += partial[slot];
        if (!code_seen[slot]) {
          code_seen[slot] = 1;
          codes_used.push_back(static_cast<std::uint32_t>(slot));
        }
      }
      s_ivf[i] = list_score[l];
      s_pq[i] = s;
    }

    g_ivf.resize(n);
    g_pq.resize(n);
    out.loss += distill_loss(loss, cand.teacher_scores, s_ivf, g_ivf);
    out.loss += distill_loss(loss, cand.teacher_scores, s_pq, g_pq);
    ++out.queries;

    for (std::size_t i = 0; i < n; ++i) {
      const auto d = cand.doc_ids[i];
      list_coef[index.ivf_ids[d]] += g_ivf[i] + g_pq[i];
      const auto ids = index.pq_code(d);
      for (std::size_t b = 0; b < m; ++b) code_coef[b * p + ids[b]] += g_pq[i];
    }

    std::fill(grad_vq.begin(), grad_vq.end(), 0.0);
    for (const auto l : lists_used) {
      const double c = list_coef[l];
      const auto o = index.centroids.row(l);
      double* go = out.centroids.data() + l * h;
      for (std::size_t k = 0; k < h; ++k) {
        grad_vq[k] += c * o[k];
        go[k] += c * vq[k];
      }
      out.touched_lists[l] = 1;
      list_coef[l] = 0.0;
      list_seen[l] = 0;
    }
    for (const auto slot : codes_used) {
      const double c = code_coef[slot];
      const std::size_t b = slot / p;
      const float* word = cb.values.data() + slot * sub;
      double* gw = out.codewords.data() + slot * sub;
      for (std::size_t k = 0; k < sub; ++k) {
        grad_vq[b * sub + k] += c * word[k];
        gw[k] += c * vq[b * sub + k];
      }
      out.touched_codewords[slot] = 1;
      code_coef[slot] = 0.0;
      code_seen[slot] = 0;
    }
    lists_used.clear();
    codes_used.clear();

    for (std::size_t r = 0; r < h; ++r) {
      const double g = grad_vq[r];
      out.bias[r] += g;
      double* gw = out.weight.data() + r * h;
      for (std::size_t c = 0; c < h; ++c) gw[c] += g * vq_raw[c];
    }
  }
}

Gradients backward(std::span<const CandidateSet> batch, const EmbeddingSet& queries,
                   const QueryTransform& transform, const IndexArtifact& index, LossKind loss) {
  Gradients g;
  backward(batch, queries, transform, index, loss, g);
  return g;
}

void AdamWState::step(std::span<float> params, std::span<const double> grads,
                      const AdamWHyper& hyper, std::span<const char> row_mask,
                      std::size_t row_len) {
  if (params.size() != grads.size() || params.size() != m_.size()) {
    throw ContractError("adamw: parameter, gradient and state sizes differ");
  }
  if (!row_mask.empty() && row_mask.size() * row_len != params.size()) {
    throw ContractError("adamw: row mask does not cover the parameters");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw NumericError("non-finite gradient at parameter " + std::to_string(i) +
                         "; optimizer step aborted");
    }
  }
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double correction1 = 1.0 - std::pow(hyper.beta1, t);
  const double correction2 = 1.0 - std::pow(hyper.beta2, t);
  auto update = [&](std::size_t i) {
    const double g = grads[i];
    m_[i] = hyper.beta1 * m_[i] + (1.0 - hyper.beta1) * g;
    v_[i] = hyper.beta2 * v_[i] + (1.0 - hyper.beta2) * g * g;
    const double m_hat = m_[i] / correction1;
    const double v_hat = v_[i] / correction2;
    double value = params[i];
    value -= lr_ * hyper.weight_decay * value;
    value -= lr_ * m_hat / (std::sqrt(v_hat) + hyper.eps);
    params[i] = static_cast<float>(value);
  };
  if (row_mask.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) update(i);
    return;
  }
  for (std::size_t r = 0; r < row_mask.size(); ++r) {
    if (!row_mask[r]) continue;
    for (std::size_t i = r * row_len; i < (r + 1) * row_len; ++i) update(i);
  }
}

void AdamWState::restore(double lr, std::uint64_t steps, std::vector<double> m,
                         std::vector<double> v) {
  if (m.size() != v.size()) throw ContractError("adamw: moment sizes differ");
  lr_ = lr;
  steps_ = steps;
  m_ = std::move(m);
  v_ = std::move(v);
}

void DistillConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(lr_query > 0.0) || !(lr_ivf > 0.0) || !(lr_pq > 0.0)) {
    throw ConfigError("learning rates must be positive");
  }
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw ConfigError("AdamW betas must lie in [0, 1)");
  }
  if (!(adam.eps > 0.0) || !(adam.weight_decay >= 0.0)) {
    throw ConfigError("AdamW eps must be positive and weight decay non-negative");
  }
}

Trainer::Trainer(IndexArtifact index, QueryTransform transform, DistillConfig config,
                 SamplingStrategy strategy)
    : index_(std::move(index)),
      transform_(std::move(transform)),
      config_(config),
      strategy_(strategy) {
  config_.validate();
  strategy_.validate();
  index_.check_invariants();
  if (transform_.dim != index_.dim()) {
    throw ContractError("query transform dimension differs from the index dimension");
  }
  opt_weight_ = AdamWState(transform_.weight.size(), config_.lr_query);
  opt_bias_ = AdamWState(transform_.bias.size(), config_.lr_query);
  opt_centroids_ = AdamWState(index_.centroids.values.size(), config_.lr_ivf);
  opt_codewords_ = AdamWState(index_.codebooks.values.size(), config_.lr_pq);
}

void Trainer::apply_step(const Gradients& grads) {
  const auto& hyper = config_.adam;
  opt_weight_.step(transform_.weight, grads.weight, hyper);
  opt_bias_.step(transform_.bias, grads.bias, hyper);
  opt_centroids_.step(index_.centroids.values, grads.centroids, hyper, grads.touched_lists,
                      index_.centroids.dim);
  opt_codewords_.step(index_.codebooks.values, grads.codewords, hyper, grads.touched_codewords,
                      index_.codebooks.sub_dim);
}

EpochRecord Trainer::run_epoch(const TrainingData& data) {
  if (data.docs.count() != index_.doc_count() || data.docs.dim() != index_.dim() ||
      data.queries.dim() != index_.dim()) {
    throw ContractError("training data does not match the index");
  }
  const std::size_t epoch = epochs_done_;
  std::vector<std::uint32_t> order(data.queries.count());
  std::iota(order.begin(), order.end(), 0u);
  std::mt19937_64 shuffle_rng(mix_seed(config_.seed, 0x5348u, epoch));
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle_rng() % i)]);
  }

  double total_loss = 0.0;
  std::size_t scored = 0;
  const std::size_t bs = config_.batch_size;
  for (std::size_t start = 0, batch_no = 0; start < order.size(); start += bs, ++batch_no) {
    const std::span<const std::uint32_t> batch(order.data() + start,
                                               std::min(bs, order.size() - start));
    std::mt19937_64 sample_rng(mix_seed(strategy_.seed, epoch, batch_no));
    const auto candidates = sample_candidates(batch, strategy_, data.judgments, data.topk,
                                              data.queries, data.docs, sample_rng);
    backward(candidates, data.queries, transform_, index_, config_.loss, grads_);
    if (!std::isfinite(grads_.loss)) {
      throw NumericError("non-finite loss in epoch " + std::to_string(epoch + 1) + ", batch " +
                         std::to_string(batch_no));
    }
    if (grads_.queries == 0) continue;
    apply_step(grads_);
    total_loss += grads_.loss;
    scored += grads_.queries;
  }

  ++epochs_done_;
  if (config_.pq_reencode_cadence > 0 && epochs_done_ % config_.pq_reencode_cadence == 0) {
    reencode_pq(index_, data.docs);
  }
  EpochRecord record;
  record.epoch = epochs_done_;
  record.mean_loss = scored == 0 ? 0.0 : total_loss / static_cast<double>(scored);
  return record;
}

std::vector<EpochRecord> Trainer::train(const TrainingData& data,
                                        const std::function<void(EpochRecord&)>& on_epoch) {
  std::vector<EpochRecord> log;
  while (epochs_done_ < config_.epochs) {
    auto record = run_epoch(data);
    if (on_epoch) on_epoch(record);
    log.push_back(record);
  }
  return log;
}

namespace {

void put_state(detail::ByteWriter& w, const AdamWState& s) {
  w.put<double>(s.lr());
  w.put<std::uint64_t>(s.steps());
  w.put<std::uint64_t>(s.first_moment().size());
  w.put_array(s.first_moment().data(), s.first_moment().size());
  w.put_array(s.second_moment().data(), s.second_moment().size());
}

void get_state(detail::ByteReader& r, AdamWState& s, std::size_t expected) {
  const auto lr = r.get<double>("optimizer state");
  const auto steps = r.get<std::uint64_t>("optimizer state");
  const auto n = r.get<std::uint64_t>("optimizer state");
  if (n != expected) throw FormatError("optimizer state size disagrees with parameters", r.offset());
  std::vector<double> m(n), v(n);
  r.get_array(m.data(), n, "optimizer moments");
  r.get_array(v.data(), n, "optimizer moments");
  s.restore(lr, steps, std::move(m), std::move(v));
}

void put_blob(detail::ByteWriter& w, const std::vector<char>& blob) {
  w.put<std::uint64_t>(blob.size());
  w.put_raw(blob.data(), blob.size());
}

std::vector<char> get_blob(detail::ByteReader& r, const char* what) {
  const auto n = r.get<std::uint64_t>(what);
  std::vector<char> blob(n);
  r.get_array(blob.data(), n, what);
  return blob;
}

}  // namespace

std::vector<char> Trainer::checkpoint() const {
  detail::ByteWriter w;
  w.put_raw(kCheckpointMagic.data(), 4);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint64_t>(epochs_done_);
  put_blob(w, serialize_index(index_));
  put_blob(w, serialize_transform(transform_));
  put_state(w, opt_weight_);
  put_state(w, opt_bias_);
  put_state(w, opt_centroids_);
  put_state(w, opt_codewords_);
  seal(w);
  return std::move(w.bytes());
}

void Trainer::restore(const std::vector<char>& bytes) {
  auto r = open_sealed(bytes, kCheckpointMagic, kCheckpointVersion, "checkpoint");
  const auto epochs = r.get<std::uint64_t>("epoch counter");
  auto index = deserialize_index(get_blob(r, "index"));
  auto transform = deserialize_transform(get_blob(r, "query transform"));
  if (transform.dim != index.dim()) throw FormatError("checkpoint transform dimension", 0);
  AdamWState w, b, c, k;
  get_state(r, w, transform.weight.size());
  get_state(r, b, transform.bias.size());
  get_state(r, c, index.centroids.values.size());
  get_state(r, k, index.codebooks.values.size());
  if (r.remaining() != 0) throw FormatError("trailing bytes in checkpoint", r.offset());
  index_ = std::move(index);
  transform_ = std::move(transform);
  opt_weight_ = std::move(w);
  opt_bias_ = std::move(b);
  opt_centroids_ = std::move(c);
  opt_codewords_ = std::move(k);
  epochs_done_ = epochs;
}

TrainResult train(const TrainingData& data, IndexArtifact index, const DistillConfig& config,
                  const SamplingStrategy& strategy) {
  const std::size_t dim = index.dim();
  Trainer trainer(std::move(index), QueryTransform::identity(dim), config, strategy);
  auto log = trainer.train(data);
  TrainResult result{trainer.index(), trainer.transform(), std::move(log)};
  return result;
}

}  // namespace kdq
