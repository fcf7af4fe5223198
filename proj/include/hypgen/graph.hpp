#pragma once

// The multi-layer undirected semantic graph: sentences, entities, lemmas,
// coded terms, n-grams and predicates, with sequential-sentence edges, exact
// kNN sentence-similarity edges, metadata edges and predicate edges. Node
// identity is a canonical `t:payload` key string; edge type pairs are
// restricted to the fixed schema. Once frozen the graph is immutable and
// safe for concurrent readers.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hypgen/corpus.hpp"
#include "hypgen/predicates.hpp"

namespace hypgen::graph {

enum class NodeType : char {
  Sentence = 's',
  Entity = 'e',
  Lemma = 'l',
  CodedTerm = 'm',
  Ngram = 'n',
  Predicate = 'p',
};

// Unordered type pairs allowed by the schema (stored in display order).
inline constexpr std::array<std::pair<char, char>, 10> kSchemaPairs = {{
    {'s', 's'}, {'s', 'l'}, {'s', 'e'}, {'s', 'm'}, {'s', 'n'},
    {'s', 'p'}, {'p', 'l'}, {'p', 'e'}, {'p', 'm'}, {'p', 'n'},
}};

bool schema_allows(char type_a, char type_b);

// Canonical node keys. Payload parts are lowercased and internal whitespace
// becomes '_'; a part containing the ':' separator is rejected.
std::string node_key(NodeType type, std::string_view payload);
std::string node_key(NodeType type, std::string_view part1, std::string_view part2);
std::string sentence_key(std::string_view doc_id, int sent_idx);
std::string predicate_key(std::string_view subj_cui, std::string_view verb,
                          std::string_view obj_cui);

struct KnnConfig {
  int k = 25;  // 0 disables similarity edges
};

struct GraphBuildConfig {
  KnnConfig knn;
  std::size_t sentence_embed_dim = 64;
  std::uint64_t sentence_embed_seed = 0;
  int workers = 1;
};

struct GraphBuildReport {
  std::size_t sequential_edges = 0;      // before dedup with knn edges
  std::size_t knn_edges = 0;             // unique symmetrized pairs
  std::size_t skipped_predicates = 0;    // provenance not in the corpus
  std::size_t empty_sentence_vectors = 0;
};

class SemanticGraph {
 public:
  // -- construction (before freeze) --
  std::uint32_t add_node(std::string key);
  void add_edge(const std::string& key_a, const std::string& key_b);
  void freeze();

  // -- queries (after freeze) --
  bool frozen() const { return frozen_; }
  bool has_node(std::string_view key) const;
  std::size_t node_count() const { return keys_.size(); }
  std::size_t node_count(NodeType t) const;
  std::size_t edge_count() const { return edges_.size(); }

  const std::vector<std::string>& keys() const { return keys_; }
  const std::vector<std::pair<std::uint32_t, std::uint32_t>>& edges() const {
    return edges_;
  }
  std::optional<std::uint32_t> index_of(std::string_view key) const;

  // Neighbor keys in ascending order, optionally restricted to one layer.
  // Unknown keys yield an empty list and set *known to false.
  std::vector<std::string> neighbors(std::string_view key,
                                     std::optional<NodeType> filter = std::nullopt,
                                     bool* known = nullptr) const;
  // Index-level adjacency for hot paths.
  const std::vector<std::uint32_t>& neighbor_ids(std::uint32_t id) const;

  // Checksum of the sorted edge-key list; identical graphs agree.
  std::uint64_t edge_checksum() const;

  void save(const std::string& dir) const;
  static SemanticGraph load(const std::string& dir);

 private:
  std::vector<std::string> keys_;
  std::unordered_map<std::string, std::uint32_t> index_;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges_;  // id pairs, a < b
  std::vector<std::vector<std::uint32_t>> adjacency_;           // sorted by key
  bool frozen_ = false;
};

// Exact symmetrized kNN over unit vectors, cosine similarity, ties broken by
// ascending node key. With fewer than k+1 vectors every pair is connected.
std::vector<std::pair<std::string, std::string>> knn_edges(
    const std::vector<std::pair<std::string, std::vector<double>>>& vectors, int k,
    int workers = 1);

// Sentence vectors in deterministic (doc order) sequence, keyed by node key.
std::vector<std::pair<std::string, std::vector<double>>> compute_sentence_vectors(
    const std::vector<corpus::AnnotatedDoc>& docs, std::size_t dim,
    std::uint64_t seed, std::size_t* empty_count = nullptr);

// Full graph construction per the layer schema. Predicates whose source
// sentence is absent from the corpus are skipped and counted.
SemanticGraph build_graph(const std::vector<corpus::AnnotatedDoc>& docs,
                          const std::vector<predicates::Predicate>& preds,
                          const GraphBuildConfig& cfg,
                          GraphBuildReport* report = nullptr);

// Uniform subsample without replacement of a coded term's predicate
// neighbors; all of them when fewer than `s` exist.
std::vector<std::string> sample_neighborhood(const SemanticGraph& g,
                                             std::string_view term_key,
                                             std::size_t s, std::uint64_t seed);

}  // namespace hypgen::graph
