#pragma once

// Term-pair plausibility model: the two coded-term embeddings plus
// subsampled predicate-neighborhood embeddings pass through a per-element
// feed-forward into model width, N transformer encoder blocks (multi-head
// self-attention and feed-forward, each with residual and layer
// normalization), mean pooling over positions, a dot with the projection
// vector and a logistic squash into (0,1). No positional encoding is used,
// so the output is invariant to neighborhood order. Fit with margin ranking
// loss against corrupted pairs; all gradients are analytic.

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "hypgen/embedding.hpp"
#include "hypgen/graph.hpp"
#include "hypgen/predicates.hpp"
#include "hypgen/util.hpp"

namespace hypgen::ranker {

// Row-major dense matrix of doubles. Small models only; no views.
struct Mat {
  std::size_t rows = 0, cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}
  double& at(std::size_t r, std::size_t c) { return a[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return a[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {a.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const {
    return {a.data() + r * cols, cols};
  }
};

// y = x W + b, per row.
Mat linear(const Mat& x, const Mat& w, const std::vector<double>& b);

// Row-wise softmax.
Mat softmax_rows(const Mat& x);

// Per-row normalization to mean 0 / variance 1 (population), then affine.
// `normalized` receives the pre-affine values when non-null.
Mat layer_norm(const Mat& x, const std::vector<double>& gain,
               const std::vector<double>& bias, Mat* normalized = nullptr,
               std::vector<double>* inv_std = nullptr);

struct RankerConfig {
  std::size_t input_dim = 64;   // must match the embedding store
  std::size_t hidden_dim = 32;  // divisible by heads
  std::size_t heads = 4;
  std::size_t layers = 2;
  std::size_t ff_dim = 64;
};

struct RankTrainConfig {
  double margin = 0.1;
  std::size_t neighborhood = 15;  // predicates subsampled per term
  int negatives = 3;
  std::size_t positives_per_batch = 32;
  double learning_rate = 0.05;
  std::size_t warmup_batches = 50;
  int epochs = 12;
  double epoch_fraction = 1.0;     // share of positives seen per epoch
  double holdout_fraction = 0.01;  // validation split for early stopping
  std::uint64_t seed = 0;
};

class RankerModel {
 public:
  RankerModel() = default;
  RankerModel(const RankerConfig& cfg, std::uint64_t seed);

  const RankerConfig& config() const { return cfg_; }

  // Parameter registry in declaration order. Biases and layer-norm
  // parameters are width-1 matrices.
  std::size_t parameter_count() const;
  std::vector<Mat>& parameters() { return params_; }
  const std::vector<Mat>& parameters() const { return params_; }
  const std::vector<std::string>& parameter_names() const { return names_; }

  // Score one sequence [x, y, x'_1.., y'_1..] of input_dim vectors.
  double forward(const std::vector<std::span<const double>>& sequence) const;

  // Intermediates retained by forward_tape for reverse accumulation.
  struct Tape {
    Mat x0;            // input sequence
    Mat u_pre, x_in;   // input feed-forward
    struct Layer {
      Mat x;                // block input
      Mat q, k, v;          // projections
      std::vector<Mat> p;   // per-head attention weights
      Mat o;                // concatenated heads
      Mat xhat1;            // first layer norm, pre-affine
      std::vector<double> inv1;
      Mat a1;
      Mat f_pre, f_act;     // feed-forward
      Mat xhat2;            // second layer norm, pre-affine
      std::vector<double> inv2;
    };
    std::vector<Layer> layers;
    Mat x_final;
    std::vector<double> pooled;
    double z = 0.0, out = 0.0;
  };

  // Forward retaining intermediates, then reverse accumulation of
  // d(output)/d(params) scaled by `upstream` into `grads` (same shapes as
  // parameters()).
  double forward_tape(const std::vector<std::span<const double>>& sequence,
                      Tape& tape) const;
  void backward(const Tape& tape, double upstream, std::vector<Mat>& grads) const;
  std::vector<Mat> zero_grads() const;

  // Versioned binary checkpoint (little-endian f32 tensors in declaration
  // order). `store_checksum` ties the checkpoint to the embedding store it
  // was trained against.
  void save(const std::string& path, std::uint64_t store_checksum) const;
  static RankerModel load(const std::string& path,
                          std::uint64_t* store_checksum = nullptr);

 private:
  RankerConfig cfg_;
  std::vector<Mat> params_;
  std::vector<std::string> names_;
};

// Mean over negatives of max(0, margin - f(pos) + f(neg)).
double margin_loss(double positive_score, std::span<const double> negative_scores,
                   double margin);

// One training example: a positive pair and its corrupted partners, all with
// sampled neighborhoods resolved to node keys.
struct PairExample {
  std::string subj_key;  // m-node
  std::string obj_key;
  std::vector<std::string> subj_neighborhood;  // p-nodes, <= s
  std::vector<std::string> obj_neighborhood;
};

struct BatchExample {
  PairExample positive;
  std::vector<PairExample> negatives;  // same subject, corrupted object
};

struct TrainingBatch {
  std::vector<BatchExample> examples;
  bool empty_neighborhood_seen = false;
};

// Unique (subject, object) key pairs of the training predicates.
std::vector<std::pair<std::string, std::string>> positive_pairs(
    const std::vector<predicates::Predicate>& preds);

// Batch composition: corrupted objects are same-layer coded terms that do
// not form a training pair with the subject. Deterministic given the rng.
TrainingBatch make_training_batch(
    const std::vector<std::pair<std::string, std::string>>& positives,
    std::span<const std::size_t> batch_indices, const graph::SemanticGraph& g,
    const std::set<std::pair<std::string, std::string>>& training_pairs,
    const RankTrainConfig& cfg, Rng& rng);

struct RankTrainStats {
  double initial_validation_loss = 0.0;
  double best_validation_loss = 0.0;
  int best_epoch = -1;
  std::vector<double> validation_losses;  // per epoch
  std::vector<double> learning_rates;     // per batch, for the warmup contract
};

// Margin-ranking training with linear warmup and best-validation-loss
// checkpointing. Rejects runs with fewer than 10 training predicates.
RankerModel train_ranker(const graph::SemanticGraph& g,
                         const embedding::EmbeddingStore& store,
                         const std::vector<predicates::Predicate>& preds,
                         const RankerConfig& model_cfg, const RankTrainConfig& cfg,
                         RankTrainStats* stats = nullptr);

// Mean and population standard deviation over `repeats` independent
// neighborhood subsamples.
struct PairScore {
  double mean = 0.0;
  double stddev = 0.0;
};
PairScore score_pair(const RankerModel& model, const embedding::EmbeddingStore& store,
                     const graph::SemanticGraph& g, std::string_view term_a,
                     std::string_view term_b, int repeats, std::uint64_t seed,
                     std::size_t neighborhood);

// Candidates sorted by mean score descending, ties by ascending key.
// Candidates missing from the store are skipped and reported.
std::vector<std::pair<std::string, double>> rank_candidates(
    const RankerModel& model, const embedding::EmbeddingStore& store,
    const graph::SemanticGraph& g, std::string_view source_term,
    const std::vector<std::string>& candidates, int repeats, std::uint64_t seed,
    std::size_t neighborhood, std::vector<std::string>* skipped = nullptr);

}  // namespace hypgen::ranker
