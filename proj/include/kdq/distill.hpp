#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "kdq/embedding.hpp"
#include "kdq/ivfpq.hpp"
#include "kdq/losses.hpp"
#include "kdq/sampling.hpp"

namespace kdq {

/// Affine map applied to fixed query embeddings: v' = W v + b. Starts as the
/// identity so the students initially see the teachers' query vectors.
struct QueryTransform {
  std::size_t dim = 0;
  std::vector<float> weight;  // dim x dim, row-major
  std::vector<float> bias;    // dim

  static QueryTransform identity(std::size_t dim);
  std::vector<double> apply(std::span<const float> v) const;

  bool operator==(const QueryTransform&) const = default;
};

std::vector<char> serialize_transform(const QueryTransform& transform);
QueryTransform deserialize_transform(const std::vector<char>& bytes);
void save_transform(const QueryTransform& transform, const std::filesystem::path& path);
QueryTransform load_transform(const std::filesystem::path& path);

enum class StudentMode { ivf, pq };

/// IVF mode scores <v', reconstruct_ivf(d)>, PQ mode <v', reconstruct_full(d)>.
std::vector<double> student_scores(std::size_t query_row, std::span<const std::uint32_t> doc_ids,
                                   const EmbeddingSet& queries, const QueryTransform& transform,
                                   const IndexArtifact& index, StudentMode mode);

/// Gradients of sum over the batch of f(T, S_ivf) + f(T, S_pq). Centroid and
/// codeword gradients are dense buffers with a mask of rows assigned to at
/// least one candidate; untouched rows stay zero.
struct Gradients {
  std::vector<double> weight;           // dim x dim
  std::vector<double> bias;             // dim
  std::vector<double> centroids;        // lists x dim
  std::vector<char> touched_lists;      // lists
  std::vector<double> codewords;        // m x p x sub_dim
  std::vector<char> touched_codewords;  // m x p
  double loss = 0.0;
  std::size_t queries = 0;

  void reset(const IndexArtifact& index);
};

void backward(std::span<const CandidateSet> batch, const EmbeddingSet& queries,
              const QueryTransform& transform, const IndexArtifact& index, LossKind loss,
              Gradients& out);
Gradients backward(std::span<const CandidateSet> batch, const EmbeddingSet& queries,
                   const QueryTransform& transform, const IndexArtifact& index, LossKind loss);

struct AdamWHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// AdamW moments for one parameter group. With a row mask, rows outside the
/// mask are left untouched (parameters, moments and decay alike).
class AdamWState {
 public:
  AdamWState() = default;
  AdamWState(std::size_t size, double lr) : lr_(lr), m_(size, 0.0), v_(size, 0.0) {}

  /// Throws NumericError, without modifying anything, on a non-finite gradient.
  void step(std::span<float> params, std::span<const double> grads, const AdamWHyper& hyper,
            std::span<const char> row_mask = {}, std::size_t row_len = 1);

  double lr() const noexcept { return lr_; }
  std::uint64_t steps() const noexcept { return steps_; }
  const std::vector<double>& first_moment() const noexcept { return m_; }
  const std::vector<double>& second_moment() const noexcept { return v_; }

  void restore(double lr, std::uint64_t steps, std::vector<double> m, std::vector<double> v);

 private:
  double lr_ = 0.0;
  std::uint64_t steps_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

struct DistillConfig {
  LossKind loss = LossKind::listnet;
  std::size_t batch_size = 8;
  std::size_t epochs = 10;
  double lr_query = 5e-6;
  double lr_ivf = 1e-3;
  double lr_pq = 1e-4;
  AdamWHyper adam;
  /// Refresh PQ assignments every this many epochs; 0 never refreshes.
  std::size_t pq_reencode_cadence = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainingData {
  const EmbeddingSet& queries;
  const EmbeddingSet& docs;
  const RelevanceJudgments* judgments = nullptr;
  const TopkCache* topk = nullptr;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;
  std::optional<double> recall;
};

/// Knowledge-distillation trainer. Owns the index and query transform being
/// learned; the document embeddings are only read.
class Trainer {
 public:
  Trainer(IndexArtifact index, QueryTransform transform, DistillConfig config,
          SamplingStrategy strategy);

  /// One pass over shuffled query batches: sample, score, backward, step.
  /// The shuffle and sampling streams derive from (seed, epoch), so a run
  /// resumed from a checkpoint continues exactly as an uninterrupted one.
  EpochRecord run_epoch(const TrainingData& data);

  /// Runs until `config.epochs` epochs are complete, calling on_epoch after
  /// each one.
  std::vector<EpochRecord> train(const TrainingData& data,
                                 const std::function<void(EpochRecord&)>& on_epoch = {});

  const IndexArtifact& index() const noexcept { return index_; }
  const QueryTransform& transform() const noexcept { return transform_; }
  const DistillConfig& config() const noexcept { return config_; }
  std::size_t epochs_done() const noexcept { return epochs_done_; }
  IndexArtifact release_index() { return std::move(index_); }

  std::vector<char> checkpoint() const;
  /// Restores parameters, optimizer state and the epoch counter.
  void restore(const std::vector<char>& checkpoint_bytes);

 private:
  void apply_step(const Gradients& grads);

  IndexArtifact index_;
  QueryTransform transform_;
  DistillConfig config_;
  SamplingStrategy strategy_;
  AdamWState opt_weight_;
  AdamWState opt_bias_;
  AdamWState opt_centroids_;
  AdamWState opt_codewords_;
  Gradients grads_;
  std::size_t epochs_done_ = 0;
};

/// Convenience wrapper over Trainer::train.
struct TrainResult {
  IndexArtifact index;
  QueryTransform transform;
  std::vector<EpochRecord> log;
};
TrainResult train(const TrainingData& data, IndexArtifact index, const DistillConfig& config,
                  const SamplingStrategy& strategy);

}  // namespace kdq
