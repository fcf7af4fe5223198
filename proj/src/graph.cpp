#include "hypgen/graph.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"

namespace hypgen::graph {

bool schema_allows(char type_a, char type_b) {
  for (auto [x, y] : kSchemaPairs)
    if ((x == type_a && y == type_b) || (x == type_b && y == type_a)) return true;
  return false;
}

namespace {

std::string normalize_part(std::string_view part) {
  if (part.empty()) throw std::invalid_argument("node key payload part is empty");
  std::string out;
  out.reserve(part.size());
  for (char c : part) {
    if (c == ':')
      throw std::invalid_argument("node key payload contains separator: " +
                                  std::string(part));
    if (std::isspace(static_cast<unsigned char>(c)))
      out += '_';
    else
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

}  // namespace

std::string node_key(NodeType type, std::string_view payload) {
  std::string out(1, static_cast<char>(type));
  out += ':';
  out += normalize_part(payload);
  return out;
}

std::string node_key(NodeType type, std::string_view part1, std::string_view part2) {
  std::string out = node_key(type, part1);
  out += ':';
  out += normalize_part(part2);
  return out;
}

std::string sentence_key(std::string_view doc_id, int sent_idx) {
  return node_key(NodeType::Sentence, doc_id, std::to_string(sent_idx));
}

std::string predicate_key(std::string_view subj_cui, std::string_view verb,
                          std::string_view obj_cui) {
  std::string out = node_key(NodeType::Predicate, subj_cui);
  out += ':';
  out += normalize_part(verb);
  out += ':';
  out += normalize_part(obj_cui);
  return out;
}

// ---------------------------------------------------------------------------
// SemanticGraph

std::uint32_t SemanticGraph::add_node(std::string key) {
  if (frozen_) throw std::logic_error("graph is frozen");
  if (key.size() < 3 || key[1] != ':')
    throw std::invalid_argument("bad node key: " + key);
  auto it = index_.find(key);
  if (it != index_.end()) return it->second;
  auto id = static_cast<std::uint32_t>(keys_.size());
  index_.emplace(key, id);
  keys_.push_back(std::move(key));
  return id;
}

void SemanticGraph::add_edge(const std::string& key_a, const std::string& key_b) {
  if (frozen_) throw std::logic_error("graph is frozen");
  if (key_a == key_b) throw std::invalid_argument("self-loop rejected: " + key_a);
  if (!schema_allows(key_a[0], key_b[0]))
    throw std::invalid_argument("edge type pair outside schema: " + key_a + " -- " +
                                key_b);
  std::uint32_t a = add_node(key_a);
  std::uint32_t b = add_node(key_b);
  edges_.emplace_back(std::min(a, b), std::max(a, b));
}

void SemanticGraph::freeze() {
  if (frozen_) return;
  std::sort(edges_.begin(), edges_.end());
  edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
  adjacency_.assign(keys_.size(), {});
  for (auto [a, b] : edges_) {
    adjacency_[a].push_back(b);
    adjacency_[b].push_back(a);
  }
  for (auto& nbrs : adjacency_)
    std::sort(nbrs.begin(), nbrs.end(), [this](std::uint32_t x, std::uint32_t y) {
      return keys_[x] < keys_[y];
    });
  frozen_ = true;
}

bool SemanticGraph::has_node(std::string_view key) const {
  return index_.find(std::string(key)) != index_.end();
}

std::size_t SemanticGraph::node_count(NodeType t) const {
  std::size_t n = 0;
  for (const auto& k : keys_)
    if (k[0] == static_cast<char>(t)) ++n;
  return n;
}

std::optional<std::uint32_t> SemanticGraph::index_of(std::string_view key) const {
  auto it = index_.find(std::string(key));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> SemanticGraph::neighbors(std::string_view key,
                                                  std::optional<NodeType> filter,
                                                  bool* known) const {
  if (!frozen_) throw std::logic_error("graph must be frozen before queries");
  auto id = index_of(key);
  if (known) *known = id.has_value();
  std::vector<std::string> out;
  if (!id) return out;
  for (std::uint32_t n : adjacency_[*id]) {
    if (filter && keys_[n][0] != static_cast<char>(*filter)) continue;
    out.push_back(keys_[n]);
  }
  return out;
}

const std::vector<std::uint32_t>& SemanticGraph::neighbor_ids(std::uint32_t id) const {
  if (!frozen_) throw std::logic_error("graph must be frozen before queries");
  return adjacency_.at(id);
}

std::uint64_t SemanticGraph::edge_checksum() const {
  std::vector<std::string> lines;
  lines.reserve(edges_.size());
  for (auto [a, b] : edges_) {
    const std::string& ka = keys_[a];
    const std::string& kb = keys_[b];
    lines.push_back(ka < kb ? ka + '\t' + kb : kb + '\t' + ka);
  }
  std::sort(lines.begin(), lines.end());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& l : lines) {
    h = fnv1a64(l, h);
    h = fnv1a64("\n", h);
  }
  return h;
}

void SemanticGraph::save(const std::string& dir) const {
  if (!frozen_) throw std::logic_error("freeze the graph before saving");
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  static constexpr char kLayers[] = {'s', 'e', 'l', 'm', 'n', 'p'};
  for (char layer : kLayers) {
    std::vector<std::string> nodes;
    for (const auto& k : keys_)
      if (k[0] == layer) nodes.push_back(k);
    std::sort(nodes.begin(), nodes.end());
    std::ostringstream out;
    for (const auto& n : nodes) out << n << '\n';
    write_text_file(dir + "/nodes_" + layer + ".txt", out.str());
  }

  for (auto [x, y] : kSchemaPairs) {
    std::vector<std::string> lines;
    for (auto [a, b] : edges_) {
      char ta = keys_[a][0], tb = keys_[b][0];
      if (!((ta == x && tb == y) || (ta == y && tb == x))) continue;
      const std::string& ka = keys_[a];
      const std::string& kb = keys_[b];
      lines.push_back(ka < kb ? ka + '\t' + kb : kb + '\t' + ka);
    }
    std::sort(lines.begin(), lines.end());
    std::ostringstream out;
    for (const auto& l : lines) out << l << '\n';
    write_text_file(dir + "/edges_" + std::string(1, x) + std::string(1, y) + ".tsv",
                    out.str());
  }
}

SemanticGraph SemanticGraph::load(const std::string& dir) {
  SemanticGraph g;
  static constexpr char kLayers[] = {'s', 'e', 'l', 'm', 'n', 'p'};
  for (char layer : kLayers) {
    std::string path = dir + "/nodes_" + layer + ".txt";
    if (!file_exists(path)) throw std::runtime_error("graph file missing: " + path);
    std::istringstream in(read_text_file(path));
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) g.add_node(line);
  }
  for (auto [x, y] : kSchemaPairs) {
    std::string path =
        dir + "/edges_" + std::string(1, x) + std::string(1, y) + ".tsv";
    if (!file_exists(path)) throw std::runtime_error("graph file missing: " + path);
    std::istringstream in(read_text_file(path));
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto fields = split(line, '\t');
      if (fields.size() != 2)
        throw std::runtime_error("bad edge line in " + path + ": " + line);
      g.add_edge(fields[0], fields[1]);
    }
  }
  g.freeze();
  return g;
}

// ---------------------------------------------------------------------------
// kNN edges

std::vector<std::pair<std::string, std::string>> knn_edges(
    const std::vector<std::pair<std::string, std::vector<double>>>& vectors, int k,
    int workers) {
  if (k < 1) throw std::invalid_argument("knn_edges: k must be >= 1");
  std::size_t n = vectors.size();
  // Order queries by key so tie handling never depends on input order.
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return vectors[a].first < vectors[b].first;
  });

  std::vector<std::vector<std::size_t>> lists(n);
  auto run = [&](std::size_t lo, std::size_t hi) {
    std::vector<std::pair<double, std::size_t>> sims;
    for (std::size_t qi = lo; qi < hi; ++qi) {
      std::size_t q = order[qi];
      sims.clear();
      const auto& qv = vectors[q].second;
      for (std::size_t oi = 0; oi < n; ++oi) {
        std::size_t o = order[oi];
        if (o == q) continue;
        const auto& ov = vectors[o].second;
        double dot = 0.0;
        for (std::size_t d = 0; d < qv.size(); ++d) dot += qv[d] * ov[d];
        sims.emplace_back(dot, oi);  // oi is already key-ordered
      }
      std::size_t kk = std::min<std::size_t>(static_cast<std::size_t>(k), sims.size());
      std::partial_sort(sims.begin(), sims.begin() + static_cast<long>(kk), sims.end(),
                        [](const auto& a, const auto& b) {
                          if (a.first != b.first) return a.first > b.first;
                          return a.second < b.second;  // ascending key on ties
                        });
      for (std::size_t j = 0; j < kk; ++j) lists[q].push_back(order[sims[j].second]);
    }
  };

  if (workers <= 1 || n < 64) {
    run(0, n);
  } else {
    std::size_t w = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
    std::vector<std::thread> threads;
    std::size_t chunk = (n + w - 1) / w;
    for (std::size_t t = 0; t < w; ++t) {
      std::size_t lo = t * chunk, hi = std::min(n, lo + chunk);
      if (lo >= hi) break;
      threads.emplace_back(run, lo, hi);
    }
    for (auto& t : threads) t.join();
  }

  // Symmetrize: union of the directed lists.
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t q = 0; q < n; ++q)
    for (std::size_t o : lists[q]) {
      const std::string& a = vectors[q].first;
      const std::string& b = vectors[o].first;
      out.emplace_back(std::min(a, b), std::max(a, b));
    }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<std::pair<std::string, std::vector<double>>> compute_sentence_vectors(
    const std::vector<corpus::AnnotatedDoc>& docs, std::size_t dim,
    std::uint64_t seed, std::size_t* empty_count) {
  std::vector<std::pair<std::string, std::vector<double>>> out;
  std::size_t empties = 0;
  for (const auto& d : docs)
    for (const auto& s : d.sentences) {
      bool empty = false;
      auto v = corpus::embed_sentence(s.tokens, dim, seed, &empty);
      if (empty) ++empties;
      out.emplace_back(sentence_key(d.doc_id, s.sent_idx), std::move(v));
    }
  if (empty_count) *empty_count = empties;
  return out;
}

// ---------------------------------------------------------------------------
// graph construction

SemanticGraph build_graph(const std::vector<corpus::AnnotatedDoc>& docs,
                          const std::vector<predicates::Predicate>& preds,
                          const GraphBuildConfig& cfg, GraphBuildReport* report) {
  SemanticGraph g;
  GraphBuildReport rep;

  // Sentence nodes, sequential edges and annotation edges.
  for (const auto& d : docs) {
    for (std::size_t i = 0; i < d.sentences.size(); ++i) {
      const auto& s = d.sentences[i];
      std::string skey = sentence_key(d.doc_id, s.sent_idx);
      g.add_node(skey);
      if (i > 0) {
        g.add_edge(sentence_key(d.doc_id, d.sentences[i - 1].sent_idx), skey);
        ++rep.sequential_edges;
      }
      for (const auto& lemma : s.lemmas)
        g.add_edge(skey, node_key(NodeType::Lemma, lemma));
      for (const auto& ent : s.entities)
        g.add_edge(skey, node_key(NodeType::Entity, ent.surface));
      for (const auto& term : s.coded_terms)
        g.add_edge(skey, node_key(NodeType::CodedTerm, term.cui));
      for (const auto& ng : s.ngrams)
        g.add_edge(skey, node_key(NodeType::Ngram, ng));
    }
  }

  // kNN similarity edges over hashed sentence vectors.
  if (cfg.knn.k > 0) {
    auto vectors = compute_sentence_vectors(docs, cfg.sentence_embed_dim,
                                            cfg.sentence_embed_seed,
                                            &rep.empty_sentence_vectors);
    auto knn = knn_edges(vectors, cfg.knn.k, cfg.workers);
    rep.knn_edges = knn.size();
    for (const auto& [a, b] : knn) g.add_edge(a, b);
  }

  // Predicate layer: each predicate links to its source sentence and to the
  // annotations of that sentence; subject and object CUIs always become
  // m-layer nodes.
  auto sentence_index = predicates::index_sentences(docs);
  for (const auto& p : preds) {
    auto it = sentence_index.find({p.doc_id, p.sent_idx});
    if (it == sentence_index.end()) {
      ++rep.skipped_predicates;
      continue;
    }
    const corpus::AnnotatedSentence& s = *it->second;
    std::string pkey = predicate_key(p.subj_cui, p.verb, p.obj_cui);
    std::string skey = sentence_key(p.doc_id, p.sent_idx);
    g.add_node(pkey);
    g.add_node(node_key(NodeType::CodedTerm, p.subj_cui));
    g.add_node(node_key(NodeType::CodedTerm, p.obj_cui));
    g.add_edge(pkey, skey);
    for (const auto& lemma : s.lemmas)
      g.add_edge(pkey, node_key(NodeType::Lemma, lemma));
    for (const auto& ent : s.entities)
      g.add_edge(pkey, node_key(NodeType::Entity, ent.surface));
    for (const auto& term : s.coded_terms)
      g.add_edge(pkey, node_key(NodeType::CodedTerm, term.cui));
    for (const auto& ng : s.ngrams)
      g.add_edge(pkey, node_key(NodeType::Ngram, ng));
  }

  g.freeze();
  if (report) *report = rep;
  return g;
}

std::vector<std::string> sample_neighborhood(const SemanticGraph& g,
                                             std::string_view term_key,
                                             std::size_t s, std::uint64_t seed) {
  if (term_key.empty() || term_key[0] != 'm')
    throw std::invalid_argument("sample_neighborhood expects an m-node key");
  auto nbrs = g.neighbors(term_key, NodeType::Predicate);
  if (nbrs.size() <= s) return nbrs;
  Rng rng(seed);
  auto idx = rng.sample_indices(nbrs.size(), s);
  std::vector<std::string> out;
  out.reserve(s);
  for (std::size_t i : idx) out.push_back(nbrs[i]);
  return out;
}

}  // namespace hypgen::graph
