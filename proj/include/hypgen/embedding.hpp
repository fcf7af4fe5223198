#pragma once

// Heterogeneous node embeddings trained with the biased transformed
// dot-product similarity and sampled-softmax loss. Every undirected graph
// edge contributes two directed training examples, one per transformation
// direction; negatives corrupt the target node within its own layer.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "hypgen/graph.hpp"
#include "hypgen/util.hpp"

namespace hypgen::embedding {

struct EmbedTrainConfig {
  std::size_t dim = 64;
  int negatives = 100;
  int epochs = 10;
  double learning_rate = 0.5;  // adagrad-scaled
  std::uint64_t seed = 0;
};

class EmbeddingStore {
 public:
  EmbeddingStore() = default;
  EmbeddingStore(std::size_t dim, std::vector<std::string> keys);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return keys_.size(); }
  const std::vector<std::string>& keys() const { return keys_; }

  bool has(std::string_view key) const;
  std::size_t row_of(std::string_view key) const;  // throws on unknown key

  std::span<double> vec(std::size_t row) {
    return {data_.data() + row * dim_, dim_};
  }
  std::span<const double> vec(std::size_t row) const {
    return {data_.data() + row * dim_, dim_};
  }
  std::span<const double> vec(std::string_view key) const { return vec(row_of(key)); }

  // Directional transformation vector for ordered node-type pair (from, to).
  std::span<double> transform(char from, char to);
  std::span<const double> transform(char from, char to) const;
  const std::map<std::pair<char, char>, std::vector<double>>& transforms() const {
    return transforms_;
  }

  // Binary store: magic HGEB1, little-endian f32 rows; text sidecar
  // `<path>.manifest.tsv` maps node key -> row.
  void save(const std::string& path) const;
  static EmbeddingStore load(const std::string& path);

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> keys_;
  std::unordered_map<std::string, std::size_t> rows_;
  std::vector<double> data_;
  std::map<std::pair<char, char>, std::vector<double>> transforms_;
};

// S(u,v) = u1 + v1 + t1 + sum_{i>=2} u_i (v_i + t_i). Lengths must agree.
double score_edge(std::span<const double> u, std::span<const double> v,
                  std::span<const double> t);

// Uniform over the target's layer excluding the target itself. When the
// layer has no more than `count` other nodes the sample falls back to
// drawing with replacement and sets *with_replacement.
std::vector<std::uint32_t> sample_negatives(const graph::SemanticGraph& g,
                                            std::uint32_t target, int count,
                                            Rng& rng,
                                            bool* with_replacement = nullptr);

// Sampled-softmax loss for one directed edge given the positive score and
// negative scores: -log( exp(s+) / (exp(s+) + sum exp(s-)) ). Rejects
// non-finite scores.
double softmax_edge_loss(double pos_score, std::span<const double> neg_scores);

// Loss and analytic gradients for one directed edge. All negatives share
// the transform vector since they live in the target's layer. The workspace
// is reused across calls; gradients are written (not accumulated) into it.
struct EdgeLossGrads {
  std::vector<double> probs;  // softmax over [pos, negs...]
  std::vector<double> du;
  std::vector<double> dv_pos;
  std::vector<std::vector<double>> dv_negs;
  std::vector<double> dt;
  void resize(std::size_t dim, std::size_t negatives);
};

double edge_loss(std::span<const double> u, std::span<const double> v_pos,
                 std::span<const std::span<const double>> v_negs,
                 std::span<const double> t, EdgeLossGrads& grads);

struct EmbedTrainStats {
  std::vector<double> loss_history;  // one entry per directed-edge step
  bool sampled_with_replacement = false;
};

// Adagrad on all node vectors and transforms; deterministic for a fixed
// seed. Initialization is uniform in [-0.5/d, 0.5/d].
EmbeddingStore train_embeddings(const graph::SemanticGraph& g,
                                const EmbedTrainConfig& cfg,
                                EmbedTrainStats* stats = nullptr);

}  // namespace hypgen::embedding
