#pragma once

// Shared smoke fixture: a small synthetic corpus carried through annotation,
// graph construction and embedding training once per test binary.

#include <filesystem>
#include <vector>

#include "hypgen/corpus.hpp"
#include "hypgen/embedding.hpp"
#include "hypgen/graph.hpp"
#include "hypgen/predicates.hpp"
#include "hypgen/validation.hpp"

namespace fixtures {

using namespace hypgen;

struct Smoke {
  validation::SyntheticCorpus files;
  std::vector<corpus::AnnotatedDoc> train_docs;
  std::vector<corpus::AnnotatedDoc> holdout_docs;
  std::vector<predicates::Predicate> train_preds;
  std::vector<predicates::Predicate> holdout_preds;
  graph::SemanticGraph graph;
  embedding::EmbeddingStore store;
};

inline const Smoke& smoke() {
  static Smoke s = [] {
    Smoke f;
    std::filesystem::remove_all("test_tmp/smoke");
    validation::SyntheticConfig cfg;
    cfg.seed = 5;
    cfg.n_docs = 40;
    cfg.n_terms = 20;
    cfg.n_communities = 2;
    f.files = validation::generate_synthetic_corpus("test_tmp/smoke", cfg);

    corpus::ParseReport rep;
    auto records = corpus::parse_corpus_file(f.files.corpus_path, rep);
    auto lexicon = corpus::Lexicon::load(f.files.lexicon_path);
    std::vector<corpus::AnnotatedDoc> docs;
    for (const auto& r : records)
      docs.push_back({r.doc_id, r.date, corpus::annotate_record(r, lexicon)});
    corpus::NgramConfig ncfg;
    corpus::mine_ngrams(docs, ncfg);
    corpus::split_by_date(docs, f.files.cut_date, f.train_docs, f.holdout_docs);

    auto preds = predicates::load_predicates(f.files.predicates_path);
    std::map<std::string, Date> dates;
    for (const auto& d : docs) dates[d.doc_id] = d.date;
    for (const auto& p : preds) {
      if (dates.at(p.doc_id) <= f.files.cut_date)
        f.train_preds.push_back(p);
      else
        f.holdout_preds.push_back(p);
    }

    graph::GraphBuildConfig gcfg;
    gcfg.knn.k = 10;
    gcfg.sentence_embed_dim = 32;
    gcfg.sentence_embed_seed = derive_seed(5, "sentence-embed");
    f.graph = graph::build_graph(f.train_docs, f.train_preds, gcfg);

    embedding::EmbedTrainConfig ecfg;
    ecfg.dim = 16;
    ecfg.negatives = 20;
    ecfg.epochs = 6;
    ecfg.seed = derive_seed(5, "train-embed");
    f.store = embedding::train_embeddings(f.graph, ecfg);
    return f;
  }();
  return s;
}

}  // namespace fixtures
