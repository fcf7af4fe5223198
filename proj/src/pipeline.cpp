#include "hypgen/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "hypgen/version.hpp"
#include "json.hpp"

namespace hypgen::pipeline {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// configuration

namespace {

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

PipelineConfig PipelineConfig::load(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const std::exception& e) {
    throw ConfigError("(file)", std::string("cannot parse config: ") + e.what());
  }
  PipelineConfig cfg;
  maybe(j, "corpus", cfg.corpus_path);
  maybe(j, "lexicon", cfg.lexicon_path);
  maybe(j, "predicates", cfg.predicates_path);
  maybe(j, "extractions", cfg.extractions_path);
  maybe(j, "semantic_net", cfg.semnet_path);
  maybe(j, "work_dir", cfg.work_dir);
  if (j.contains("cut_date")) {
    auto d = Date::parse(j.at("cut_date").get<std::string>());
    if (!d) throw ConfigError("cut_date", "not an ISO-8601 date");
    cfg.cut_date = *d;
  }
  maybe(j, "variant", cfg.variant);
  maybe(j, "seed", cfg.seed);
  maybe(j, "workers", cfg.workers);
  maybe(j, "deterministic", cfg.deterministic);

  if (j.contains("ingest")) {
    const auto& ji = j["ingest"];
    if (ji.contains("ngram_sizes")) {
      cfg.ngrams.n_values.clear();
      for (int n : ji["ngram_sizes"]) cfg.ngrams.n_values.insert(n);
    }
    maybe(ji, "ngram_min_count", cfg.ngrams.min_count);
  }
  if (j.contains("graph")) {
    const auto& jg = j["graph"];
    maybe(jg, "knn_k", cfg.graph.knn_k);
    maybe(jg, "sentence_embed_dim", cfg.graph.sentence_embed_dim);
  }
  if (j.contains("embedding")) {
    const auto& je = j["embedding"];
    maybe(je, "dim", cfg.embed.dim);
    maybe(je, "negatives", cfg.embed.negatives);
    maybe(je, "epochs", cfg.embed.epochs);
    maybe(je, "learning_rate", cfg.embed.learning_rate);
  }
  if (j.contains("ranker")) {
    const auto& jr = j["ranker"];
    maybe(jr, "hidden_dim", cfg.ranker_model.hidden_dim);
    maybe(jr, "heads", cfg.ranker_model.heads);
    maybe(jr, "layers", cfg.ranker_model.layers);
    maybe(jr, "ff_dim", cfg.ranker_model.ff_dim);
    maybe(jr, "margin", cfg.ranker_train.margin);
    maybe(jr, "neighborhood", cfg.ranker_train.neighborhood);
    maybe(jr, "negatives", cfg.ranker_train.negatives);
    maybe(jr, "positives_per_batch", cfg.ranker_train.positives_per_batch);
    maybe(jr, "learning_rate", cfg.ranker_train.learning_rate);
    maybe(jr, "warmup_batches", cfg.ranker_train.warmup_batches);
    maybe(jr, "epochs", cfg.ranker_train.epochs);
    maybe(jr, "epoch_fraction", cfg.ranker_train.epoch_fraction);
    maybe(jr, "holdout_fraction", cfg.ranker_train.holdout_fraction);
  }
  if (j.contains("filter"))
    maybe(j["filter"], "cocount_threshold", cfg.filter.cocount_threshold);
  if (j.contains("validate")) {
    const auto& jv = j["validate"];
    maybe(jv, "negative_ratio", cfg.validate.negative_ratio);
    maybe(jv, "min_mentions", cfg.validate.min_mentions);
    maybe(jv, "top_subdomains", cfg.validate.top_subdomains);
    maybe(jv, "repeats", cfg.validate.repeats);
  }
  if (j.contains("query")) maybe(j["query"], "repeats", cfg.query.repeats);
  if (j.contains("case_study")) {
    maybe(j["case_study"], "ratio", cfg.case_study.ratio);
    maybe(j["case_study"], "repeats", cfg.case_study.repeats);
  }
  return cfg;
}

std::string PipelineConfig::to_json() const {
  json j;
  j["corpus"] = corpus_path;
  j["lexicon"] = lexicon_path;
  j["predicates"] = predicates_path;
  if (!extractions_path.empty()) j["extractions"] = extractions_path;
  if (!semnet_path.empty()) j["semantic_net"] = semnet_path;
  j["work_dir"] = work_dir;
  j["cut_date"] = cut_date.to_string();
  j["variant"] = variant;
  j["seed"] = seed;
  j["workers"] = workers;
  j["deterministic"] = deterministic;
  j["ingest"] = {{"ngram_sizes", ngrams.n_values},
                 {"ngram_min_count", ngrams.min_count}};
  j["graph"] = {{"knn_k", graph.knn_k},
                {"sentence_embed_dim", graph.sentence_embed_dim}};
  j["embedding"] = {{"dim", embed.dim},
                    {"negatives", embed.negatives},
                    {"epochs", embed.epochs},
                    {"learning_rate", embed.learning_rate}};
  j["ranker"] = {{"hidden_dim", ranker_model.hidden_dim},
                 {"heads", ranker_model.heads},
                 {"layers", ranker_model.layers},
                 {"ff_dim", ranker_model.ff_dim},
                 {"margin", ranker_train.margin},
                 {"neighborhood", ranker_train.neighborhood},
                 {"negatives", ranker_train.negatives},
                 {"positives_per_batch", ranker_train.positives_per_batch},
                 {"learning_rate", ranker_train.learning_rate},
                 {"warmup_batches", ranker_train.warmup_batches},
                 {"epochs", ranker_train.epochs},
                 {"epoch_fraction", ranker_train.epoch_fraction},
                 {"holdout_fraction", ranker_train.holdout_fraction}};
  j["filter"] = {{"cocount_threshold", filter.cocount_threshold}};
  j["validate"] = {{"negative_ratio", validate.negative_ratio},
                   {"min_mentions", validate.min_mentions},
                   {"top_subdomains", validate.top_subdomains},
                   {"repeats", validate.repeats}};
  j["query"] = {{"repeats", query.repeats}};
  j["case_study"] = {{"ratio", case_study.ratio},
                     {"repeats", case_study.repeats}};
  return j.dump(2) + "\n";
}

void PipelineConfig::check() const {
  auto need_file = [](const char* field, const std::string& path) {
    if (path.empty()) throw ConfigError(field, "path is required");
    if (!file_exists(path)) throw ConfigError(field, "file does not exist: " + path);
  };
  need_file("corpus", corpus_path);
  need_file("lexicon", lexicon_path);
  need_file("predicates", predicates_path);
  if (work_dir.empty()) throw ConfigError("work_dir", "path is required");
  if (variant != "C" && variant != "GP")
    throw ConfigError("variant", "must be C or GP");
  if (variant == "GP") {
    need_file("extractions", extractions_path);
    need_file("semantic_net", semnet_path);
  }
  if (embed.dim < 2) throw ConfigError("embedding.dim", "must be >= 2");
  if (embed.negatives < 1) throw ConfigError("embedding.negatives", "must be >= 1");
  if (ranker_model.hidden_dim % ranker_model.heads != 0)
    throw ConfigError("ranker.hidden_dim", "must be divisible by ranker.heads");
  if (ranker_train.margin <= 0.0) throw ConfigError("ranker.margin", "must be > 0");
  if (ranker_train.negatives < 1)
    throw ConfigError("ranker.negatives", "must be >= 1");
  if (validate.negative_ratio < 1)
    throw ConfigError("validate.negative_ratio", "must be >= 1");
  if (graph.knn_k < 0) throw ConfigError("graph.knn_k", "must be >= 0");
  if (workers < 1) throw ConfigError("workers", "must be >= 1");
}

// ---------------------------------------------------------------------------
// artifacts and manifest

ArtifactPaths::ArtifactPaths(const std::string& wd)
    : work_dir(wd),
      annotated(wd + "/annotated.jsonl"),
      ingest_report(wd + "/ingest_report.json"),
      predicates_train(wd + "/predicates_train.jsonl"),
      predicates_holdout(wd + "/predicates_holdout.jsonl"),
      filter_report(wd + "/filter_report.json"),
      graph_dir(wd + "/graph"),
      embeddings(wd + "/embeddings.heb"),
      ranker_ckpt(wd + "/ranker.ckpt"),
      ranker_meta(wd + "/ranker_meta.json"),
      metrics_json(wd + "/metrics.json"),
      metrics_table(wd + "/metrics.txt"),
      validate_report(wd + "/validate_report.json"),
      manifest(wd + "/manifest.json") {}

std::vector<std::string> ArtifactPaths::graph_files() const {
  std::vector<std::string> out;
  for (char layer : {'s', 'e', 'l', 'm', 'n', 'p'})
    out.push_back(graph_dir + "/nodes_" + layer + ".txt");
  for (auto [x, y] : graph::kSchemaPairs)
    out.push_back(graph_dir + "/edges_" + std::string(1, x) + std::string(1, y) +
                  ".tsv");
  out.push_back(graph_dir + "/graph_meta.json");
  return out;
}

RunManifest RunManifest::load(const std::string& path) {
  RunManifest m;
  if (!file_exists(path)) return m;
  json j = json::parse(read_text_file(path));
  if (!j.contains("stages")) return m;
  for (auto& [name, js] : j["stages"].items()) {
    StageRecord rec;
    rec.fingerprint = js.value("fingerprint", std::string());
    rec.seconds = js.value("seconds", 0.0);
    if (js.contains("outputs"))
      for (auto& [p, c] : js["outputs"].items()) rec.outputs[p] = c.get<std::string>();
    m.stages_[name] = std::move(rec);
  }
  return m;
}

void RunManifest::save(const std::string& path,
                       const std::string& config_checksum) const {
  json j;
  j["tool"] = kToolVersion;
  j["config_checksum"] = config_checksum;
  j["stages"] = json::object();
  for (const auto& [name, rec] : stages_) {
    json js;
    js["fingerprint"] = rec.fingerprint;
    js["seconds"] = rec.seconds;
    js["outputs"] = json::object();
    for (const auto& [p, c] : rec.outputs) js["outputs"][p] = c;
    j["stages"][name] = std::move(js);
  }
  write_text_file(path, j.dump(2) + "\n");
}

bool RunManifest::stage_current(const std::string& stage,
                                const std::string& fingerprint) const {
  auto it = stages_.find(stage);
  if (it == stages_.end() || it->second.fingerprint != fingerprint) return false;
  for (const auto& [path, sum] : it->second.outputs) {
    if (!file_exists(path)) return false;
    if (checksum_hex(checksum_file(path)) != sum) return false;
  }
  return true;
}

void RunManifest::record(const std::string& stage, StageRecord rec) {
  stages_[stage] = std::move(rec);
}

// ---------------------------------------------------------------------------
// stage plumbing

namespace {

struct StageIo {
  std::vector<std::pair<std::string, std::string>> inputs;  // path, producer
  std::vector<std::string> outputs;
  std::string config_slice;
};

StageIo stage_io(const PipelineConfig& cfg, const ArtifactPaths& art,
                 const std::string& stage) {
  StageIo io;
  json slice;
  if (stage == "ingest") {
    io.inputs = {{cfg.corpus_path, ""}, {cfg.lexicon_path, ""}};
    io.outputs = {art.annotated, art.ingest_report};
    slice = {{"ngram_sizes", cfg.ngrams.n_values},
             {"ngram_min_count", cfg.ngrams.min_count},
             {"cut_date", cfg.cut_date.to_string()}};
  } else if (stage == "filter-predicates") {
    io.inputs = {{art.annotated, "ingest"},
                 {cfg.predicates_path, ""},
                 {cfg.lexicon_path, ""}};
    if (cfg.variant == "GP") {
      io.inputs.emplace_back(cfg.extractions_path, "");
      io.inputs.emplace_back(cfg.semnet_path, "");
    }
    io.outputs = {art.predicates_train, art.predicates_holdout, art.filter_report};
    slice = {{"variant", cfg.variant},
             {"cocount_threshold", cfg.filter.cocount_threshold},
             {"cut_date", cfg.cut_date.to_string()}};
  } else if (stage == "build-graph") {
    io.inputs = {{art.annotated, "ingest"},
                 {art.predicates_train, "filter-predicates"}};
    io.outputs = art.graph_files();
    slice = {{"knn_k", cfg.graph.knn_k},
             {"sentence_embed_dim", cfg.graph.sentence_embed_dim},
             {"cut_date", cfg.cut_date.to_string()},
             {"seed", cfg.seed}};
  } else if (stage == "train-embed") {
    for (const auto& f : art.graph_files()) io.inputs.emplace_back(f, "build-graph");
    io.outputs = {art.embeddings, art.embeddings + ".manifest.tsv"};
    slice = {{"dim", cfg.embed.dim},
             {"negatives", cfg.embed.negatives},
             {"epochs", cfg.embed.epochs},
             {"learning_rate", cfg.embed.learning_rate},
             {"seed", cfg.seed}};
  } else if (stage == "train-ranker") {
    for (const auto& f : art.graph_files()) io.inputs.emplace_back(f, "build-graph");
    io.inputs.emplace_back(art.embeddings, "train-embed");
    io.inputs.emplace_back(art.predicates_train, "filter-predicates");
    io.outputs = {art.ranker_ckpt, art.ranker_meta};
    slice = {{"hidden_dim", cfg.ranker_model.hidden_dim},
             {"heads", cfg.ranker_model.heads},
             {"layers", cfg.ranker_model.layers},
             {"ff_dim", cfg.ranker_model.ff_dim},
             {"margin", cfg.ranker_train.margin},
             {"neighborhood", cfg.ranker_train.neighborhood},
             {"negatives", cfg.ranker_train.negatives},
             {"positives_per_batch", cfg.ranker_train.positives_per_batch},
             {"learning_rate", cfg.ranker_train.learning_rate},
             {"warmup_batches", cfg.ranker_train.warmup_batches},
             {"epochs", cfg.ranker_train.epochs},
             {"epoch_fraction", cfg.ranker_train.epoch_fraction},
             {"holdout_fraction", cfg.ranker_train.holdout_fraction},
             {"seed", cfg.seed}};
  } else if (stage == "validate") {
    for (const auto& f : art.graph_files()) io.inputs.emplace_back(f, "build-graph");
    io.inputs.emplace_back(art.embeddings, "train-embed");
    io.inputs.emplace_back(art.ranker_ckpt, "train-ranker");
    io.inputs.emplace_back(art.predicates_train, "filter-predicates");
    io.inputs.emplace_back(art.predicates_holdout, "filter-predicates");
    io.inputs.emplace_back(cfg.lexicon_path, "");
    io.outputs = {art.metrics_json, art.metrics_table, art.validate_report};
    slice = {{"negative_ratio", cfg.validate.negative_ratio},
             {"min_mentions", cfg.validate.min_mentions},
             {"top_subdomains", cfg.validate.top_subdomains},
             {"repeats", cfg.validate.repeats},
             {"neighborhood", cfg.ranker_train.neighborhood},
             {"seed", cfg.seed}};
  } else {
    throw std::invalid_argument("unknown stage: " + stage);
  }
  io.config_slice = slice.dump();
  return io;
}

std::string stage_fingerprint(const PipelineConfig& cfg, const ArtifactPaths& art,
                              const std::string& stage) {
  StageIo io = stage_io(cfg, art, stage);
  std::uint64_t h = fnv1a64(kToolVersion);
  h = fnv1a64(stage, h);
  h = fnv1a64(io.config_slice, h);
  for (const auto& [path, producer] : io.inputs) {
    if (!file_exists(path)) {
      std::string hint =
          producer.empty() ? "" : " (run stage '" + producer + "' first)";
      throw std::runtime_error("stage '" + stage + "' requires artifact " + path +
                               hint);
    }
    h = fnv1a64(path, h);
    h = fnv1a64(checksum_hex(checksum_file(path)), h);
  }
  return checksum_hex(h);
}

// ---------------------------------------------------------------------------
// shared loading helpers

std::vector<corpus::AnnotatedDoc> load_train_docs(const ArtifactPaths& art,
                                                  const Date& cut) {
  auto docs = corpus::load_annotated(art.annotated);
  std::vector<corpus::AnnotatedDoc> train, holdout;
  corpus::split_by_date(docs, cut, train, holdout);
  return train;
}

// ---------------------------------------------------------------------------
// stages

void stage_ingest(const PipelineConfig& cfg, const ArtifactPaths& art) {
  corpus::ParseReport report;
  auto records = corpus::parse_corpus_file(cfg.corpus_path, report);
  auto lexicon = corpus::Lexicon::load(cfg.lexicon_path);

  std::vector<corpus::AnnotatedDoc> docs(records.size());
  auto annotate_range = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      docs[i].doc_id = records[i].doc_id;
      docs[i].date = records[i].date;
      docs[i].sentences = corpus::annotate_record(records[i], lexicon);
    }
  };
  int workers = cfg.deterministic ? cfg.workers : std::max(1, cfg.workers);
  if (workers <= 1 || records.size() < 32) {
    annotate_range(0, records.size());
  } else {
    std::vector<std::thread> threads;
    std::size_t w = static_cast<std::size_t>(workers);
    std::size_t chunk = (records.size() + w - 1) / w;
    for (std::size_t t = 0; t < w; ++t) {
      std::size_t lo = t * chunk, hi = std::min(records.size(), lo + chunk);
      if (lo >= hi) break;
      threads.emplace_back(annotate_range, lo, hi);
    }
    for (auto& th : threads) th.join();
  }

  // N-gram vocabulary is mined on the training side only; later stages never
  // see post-cut text, so the vocabulary must not either.
  std::vector<corpus::AnnotatedSentence*> train_sentences;
  for (auto& d : docs)
    if (d.date <= cfg.cut_date)
      for (auto& s : d.sentences) train_sentences.push_back(&s);
  auto vocab = corpus::mine_ngrams(train_sentences, cfg.ngrams);

  corpus::save_annotated(art.annotated, docs);
  json j;
  j["parsed"] = report.parsed;
  j["excluded_non_english"] = report.excluded_non_english;
  j["skipped_missing_fields"] = report.skipped_missing_fields;
  j["ngram_vocabulary"] = vocab.size();
  std::size_t train_docs = 0;
  for (const auto& d : docs)
    if (d.date <= cfg.cut_date) ++train_docs;
  j["train_docs"] = train_docs;
  j["holdout_docs"] = docs.size() - train_docs;
  write_text_file(art.ingest_report, j.dump(2) + "\n");
}

void stage_filter_predicates(const PipelineConfig& cfg, const ArtifactPaths& art) {
  auto docs = corpus::load_annotated(art.annotated);
  std::map<std::string, Date> doc_dates;
  for (const auto& d : docs) doc_dates[d.doc_id] = d.date;

  auto curated = predicates::load_predicates(cfg.predicates_path);
  std::vector<predicates::Predicate> curated_train, curated_holdout;
  std::size_t unresolvable = 0;
  for (auto& p : curated) {
    auto it = doc_dates.find(p.doc_id);
    if (it == doc_dates.end()) {
      ++unresolvable;
      continue;
    }
    p.source = predicates::Source::Curated;
    if (it->second <= cfg.cut_date)
      curated_train.push_back(p);
    else
      curated_holdout.push_back(p);
  }

  json report;
  report["curated_total"] = curated.size();
  report["curated_unresolvable"] = unresolvable;
  report["curated_train"] = curated_train.size();
  report["curated_holdout"] = curated_holdout.size();

  std::vector<predicates::Predicate> merged;
  if (cfg.variant == "GP") {
    auto lexicon = corpus::Lexicon::load(cfg.lexicon_path);
    auto net = predicates::SemanticTypeNet::load(cfg.semnet_path);
    auto index = predicates::index_sentences(docs);
    predicates::IngestReport ingest_rep;
    auto raw = predicates::ingest_extractions(cfg.extractions_path, index, ingest_rep);

    std::vector<predicates::Predicate> aligned;
    std::size_t rejected_alignment = 0, post_cut = 0;
    for (const auto& e : raw) {
      auto date_it = doc_dates.find(e.doc_id);
      if (date_it == doc_dates.end() || !(date_it->second <= cfg.cut_date)) {
        ++post_cut;
        continue;  // only pre-cut text feeds training
      }
      auto sent_it = index.find({e.doc_id, e.sent_idx});
      auto pred = predicates::align_concepts(e, *sent_it->second, lexicon);
      if (!pred) {
        ++rejected_alignment;
        continue;
      }
      aligned.push_back(std::move(*pred));
    }

    std::vector<predicates::Predicate> semnet_kept;
    std::size_t unknown_types = 0;
    for (const auto& p : aligned) {
      bool unknown = false;
      if (predicates::semnet_filter(p, net, &unknown))
        semnet_kept.push_back(p);
      else if (unknown)
        ++unknown_types;
    }

    std::vector<corpus::AnnotatedDoc> train_docs, holdout_docs;
    corpus::split_by_date(docs, cfg.cut_date, train_docs, holdout_docs);
    auto counts = predicates::count_terms(train_docs);
    auto cocount_kept =
        predicates::cocount_filter(semnet_kept, counts, cfg.filter.cocount_threshold);

    merged = predicates::merge_predicates(curated_train, cocount_kept);
    report["openie_raw"] = ingest_rep.kept;
    report["openie_malformed"] = ingest_rep.malformed;
    report["openie_unresolvable"] = ingest_rep.unresolvable;
    report["openie_post_cut"] = post_cut;
    report["openie_rejected_alignment"] = rejected_alignment;
    report["openie_aligned"] = aligned.size();
    report["semnet_kept"] = semnet_kept.size();
    report["semnet_pruned"] = aligned.size() - semnet_kept.size();
    report["semnet_unknown_types"] = unknown_types;
    report["cocount_kept"] = cocount_kept.size();
    report["cocount_pruned"] = semnet_kept.size() - cocount_kept.size();
  } else {
    merged = predicates::merge_predicates(curated_train, {});
  }
  report["training_predicates"] = merged.size();

  predicates::save_predicates(art.predicates_train, merged);
  predicates::save_predicates(art.predicates_holdout, curated_holdout);
  write_text_file(art.filter_report, report.dump(2) + "\n");
}

void stage_build_graph(const PipelineConfig& cfg, const ArtifactPaths& art) {
  auto train_docs = load_train_docs(art, cfg.cut_date);
  auto preds = predicates::load_predicates(art.predicates_train);

  graph::GraphBuildConfig gcfg;
  gcfg.knn.k = cfg.graph.knn_k;
  gcfg.sentence_embed_dim = cfg.graph.sentence_embed_dim;
  gcfg.sentence_embed_seed = derive_seed(cfg.seed, "sentence-embed");
  gcfg.workers = cfg.workers;
  graph::GraphBuildReport report;
  auto g = graph::build_graph(train_docs, preds, gcfg, &report);
  g.save(art.graph_dir);

  json j;
  j["nodes"] = g.node_count();
  j["edges"] = g.edge_count();
  j["sequential_edges"] = report.sequential_edges;
  j["knn_edges"] = report.knn_edges;
  j["skipped_predicates"] = report.skipped_predicates;
  j["empty_sentence_vectors"] = report.empty_sentence_vectors;
  j["edge_checksum"] = checksum_hex(g.edge_checksum());
  for (char layer : {'s', 'e', 'l', 'm', 'n', 'p'})
    j[std::string("nodes_") + layer] =
        g.node_count(static_cast<graph::NodeType>(layer));
  write_text_file(art.graph_dir + "/graph_meta.json", j.dump(2) + "\n");
}

void stage_train_embed(const PipelineConfig& cfg, const ArtifactPaths& art) {
  auto g = graph::SemanticGraph::load(art.graph_dir);
  embedding::EmbedTrainConfig ecfg = cfg.embed;
  ecfg.seed = derive_seed(cfg.seed, "train-embed");
  auto store = embedding::train_embeddings(g, ecfg);
  store.save(art.embeddings);
}

void stage_train_ranker(const PipelineConfig& cfg, const ArtifactPaths& art) {
  auto g = graph::SemanticGraph::load(art.graph_dir);
  auto store = embedding::EmbeddingStore::load(art.embeddings);
  auto preds = predicates::load_predicates(art.predicates_train);

  ranker::RankerConfig mcfg = cfg.ranker_model;
  mcfg.input_dim = store.dim();  // the model always matches the store
  ranker::RankTrainConfig tcfg = cfg.ranker_train;
  tcfg.seed = derive_seed(cfg.seed, "train-ranker");

  ranker::RankTrainStats stats;
  auto model = ranker::train_ranker(g, store, preds, mcfg, tcfg, &stats);
  std::uint64_t store_checksum = checksum_file(art.embeddings);
  model.save(art.ranker_ckpt, store_checksum);

  json j;
  j["embedding_checksum"] = checksum_hex(store_checksum);
  j["initial_validation_loss"] = stats.initial_validation_loss;
  j["best_validation_loss"] = stats.best_validation_loss;
  j["best_epoch"] = stats.best_epoch;
  j["validation_losses"] = stats.validation_losses;
  j["training_predicates"] = preds.size();
  write_text_file(art.ranker_meta, j.dump(2) + "\n");
}

void stage_validate(const PipelineConfig& cfg, const ArtifactPaths& art) {
  auto g = graph::SemanticGraph::load(art.graph_dir);
  auto store = embedding::EmbeddingStore::load(art.embeddings);
  std::uint64_t trained_against = 0;
  auto model = ranker::RankerModel::load(art.ranker_ckpt, &trained_against);
  std::uint64_t store_checksum = checksum_file(art.embeddings);
  if (trained_against != store_checksum)
    throw std::runtime_error(
        "validate: embedding store does not match the ranker checkpoint "
        "(manifest integrity)");

  auto lexicon = corpus::Lexicon::load(cfg.lexicon_path);
  auto train_preds = predicates::load_predicates(art.predicates_train);
  auto holdout_preds = predicates::load_predicates(art.predicates_holdout);

  auto positives = validation::extract_positive_pairs(holdout_preds, train_preds,
                                                      cfg.validate.min_mentions);
  std::size_t dropped_unknown = 0;
  {
    std::vector<validation::ValidationSample> kept;
    for (auto& p : positives) {
      if (store.has(graph::node_key(graph::NodeType::CodedTerm, p.subj_cui)) &&
          store.has(graph::node_key(graph::NodeType::CodedTerm, p.obj_cui)))
        kept.push_back(std::move(p));
      else
        ++dropped_unknown;
    }
    positives = std::move(kept);
  }

  // Same-type pool over terms the model can actually score.
  validation::TermPool pool;
  for (const auto& key : store.keys()) {
    if (key.size() < 3 || key[0] != 'm') continue;
    std::string cui = key.substr(2);
    const auto* types = lexicon.types_of(cui);
    if (!types) continue;
    for (const auto& t : *types) pool[t].push_back(cui);
  }
  for (auto& [_, v] : pool) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }

  std::set<std::pair<std::string, std::string>> known_pairs;
  for (const auto& p : train_preds)
    known_pairs.emplace(to_lower(p.subj_cui), to_lower(p.obj_cui));
  for (const auto& p : positives) known_pairs.emplace(p.subj_cui, p.obj_cui);

  Rng neg_rng(derive_seed(cfg.seed, "validate-negatives"));
  bool with_replacement = false;
  auto negatives = validation::generate_negatives(
      positives, pool, cfg.validate.negative_ratio, known_pairs, neg_rng,
      &with_replacement);

  auto subdomains =
      validation::top_subdomains(positives, cfg.validate.top_subdomains);

  auto score_sample = [&](validation::ValidationSample& s) {
    auto ps = ranker::score_pair(
        model, store, g, s.subj_cui, s.obj_cui, cfg.validate.repeats,
        derive_seed(cfg.seed, "validate-score",
                    fnv1a64(s.subj_cui + "|" + s.obj_cui)),
        cfg.ranker_train.neighborhood);
    s.score = ps.mean;
  };
  for (auto& s : positives) score_sample(s);
  for (auto& s : negatives) score_sample(s);

  validation::PairScorer scorer = [](const validation::ValidationSample& s) {
    return s.score ? *s.score : 0.0;
  };
  auto report = validation::subdomain_report(scorer, positives, negatives, subdomains);
  write_text_file(art.metrics_json, report.to_json());
  write_text_file(art.metrics_table, report.to_table());

  json j;
  j["positives"] = positives.size();
  j["negatives"] = negatives.size();
  j["dropped_unknown_terms"] = dropped_unknown;
  j["negatives_with_replacement"] = with_replacement;
  j["subdomains"] = json::array();
  for (const auto& sd : subdomains) j["subdomains"].push_back(sd.first + ":" + sd.second);
  write_text_file(art.validate_report, j.dump(2) + "\n");
}

void dispatch_stage(const PipelineConfig& cfg, const ArtifactPaths& art,
                    const std::string& stage) {
  if (stage == "ingest")
    stage_ingest(cfg, art);
  else if (stage == "filter-predicates")
    stage_filter_predicates(cfg, art);
  else if (stage == "build-graph")
    stage_build_graph(cfg, art);
  else if (stage == "train-embed")
    stage_train_embed(cfg, art);
  else if (stage == "train-ranker")
    stage_train_ranker(cfg, art);
  else if (stage == "validate")
    stage_validate(cfg, art);
  else
    throw std::invalid_argument("unknown stage: " + stage);
}

}  // namespace

StageOutcome run_stage(const PipelineConfig& cfg, const std::string& stage) {
  ArtifactPaths art(cfg.work_dir);
  fs::create_directories(cfg.work_dir);
  std::string fp = stage_fingerprint(cfg, art, stage);  // validates inputs

  auto start = std::chrono::steady_clock::now();
  dispatch_stage(cfg, art, stage);
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                    .count();

  RunManifest manifest = RunManifest::load(art.manifest);
  RunManifest::StageRecord rec;
  rec.fingerprint = fp;
  rec.seconds = secs;
  for (const auto& out : stage_io(cfg, art, stage).outputs)
    rec.outputs[out] = checksum_hex(checksum_file(out));
  manifest.record(stage, std::move(rec));
  manifest.save(art.manifest, checksum_hex(fnv1a64(cfg.to_json())));
  return {stage, false, secs};
}

std::vector<StageOutcome> run_pipeline(const PipelineConfig& cfg, bool force,
                                       std::ostream& log) {
  ArtifactPaths art(cfg.work_dir);
  fs::create_directories(cfg.work_dir);
  std::vector<StageOutcome> outcomes;
  for (const char* stage : kStageOrder) {
    RunManifest manifest = RunManifest::load(art.manifest);
    std::string fp = stage_fingerprint(cfg, art, stage);
    if (!force && manifest.stage_current(stage, fp)) {
      log << "[" << stage << "] up to date, skipped\n";
      outcomes.push_back({stage, true, 0.0});
      continue;
    }
    StageOutcome outcome = run_stage(cfg, stage);
    log << "[" << stage << "] done in " << outcome.seconds << " s\n";
    outcomes.push_back(outcome);
  }
  return outcomes;
}

// ---------------------------------------------------------------------------
// serving

LoadedEngine LoadedEngine::load(const PipelineConfig& cfg) {
  ArtifactPaths art(cfg.work_dir);
  for (const auto& [path, producer] :
       std::vector<std::pair<std::string, std::string>>{
           {art.ranker_ckpt, "train-ranker"},
           {art.embeddings, "train-embed"}})
    if (!file_exists(path))
      throw std::runtime_error("missing artifact " + path + " (run stage '" +
                               producer + "' first)");

  LoadedEngine engine{cfg,
                      corpus::Lexicon::load(cfg.lexicon_path),
                      graph::SemanticGraph::load(art.graph_dir),
                      embedding::EmbeddingStore(),
                      ranker::RankerModel()};
  engine.store = embedding::EmbeddingStore::load(art.embeddings);
  std::uint64_t trained_against = 0;
  engine.model = ranker::RankerModel::load(art.ranker_ckpt, &trained_against);
  if (trained_against != checksum_file(art.embeddings))
    throw std::runtime_error("embedding store does not match ranker checkpoint");
  return engine;
}

validation::TermPool LoadedEngine::term_pool() const {
  validation::TermPool pool;
  for (const auto& key : store.keys()) {
    if (key.size() < 3 || key[0] != 'm') continue;
    std::string cui = key.substr(2);
    const auto* types = lexicon.types_of(cui);
    if (!types) continue;
    for (const auto& t : *types) pool[t].push_back(cui);
  }
  for (auto& [_, v] : pool) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
  return pool;
}

int query_loop(const LoadedEngine& engine, std::istream& in, std::ostream& out) {
  std::uint64_t session_seed = derive_seed(engine.cfg.seed, "query");
  std::string line;
  int processed = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++processed;
    json resp;
    json req = json::parse(line, nullptr, false);
    if (req.is_discarded() || !req.is_object() || !req.contains("a") ||
        !req.contains("b")) {
      resp["error"] = "malformed request";
      out << resp.dump() << "\n";
      continue;
    }
    std::string a = req["a"].get<std::string>();
    std::string b = req["b"].get<std::string>();
    int repeats = req.value("repeats", engine.cfg.query.repeats);
    resp["a"] = a;
    resp["b"] = b;
    try {
      std::uint64_t req_seed = derive_seed(
          session_seed, a + "|" + b + "|" + std::to_string(repeats));
      auto score = ranker::score_pair(engine.model, engine.store, engine.graph, a, b,
                                      repeats, req_seed,
                                      engine.cfg.ranker_train.neighborhood);
      resp["mean"] = score.mean;
      resp["std"] = score.stddev;
      if (req.contains("candidates")) {
        int higher = 0, scored = 0;
        json skipped = json::array();
        for (const auto& c : req["candidates"]) {
          std::string cand = c.get<std::string>();
          std::string key = cand.rfind("m:", 0) == 0
                                ? cand
                                : graph::node_key(graph::NodeType::CodedTerm, cand);
          if (!engine.store.has(key)) {
            skipped.push_back(cand);
            continue;
          }
          auto cs = ranker::score_pair(
              engine.model, engine.store, engine.graph, a, key, repeats,
              derive_seed(session_seed, a + "|" + key + "|" +
                                            std::to_string(repeats)),
              engine.cfg.ranker_train.neighborhood);
          ++scored;
          if (cs.mean > score.mean) ++higher;
        }
        resp["rank"] = 1 + higher;
        resp["pool"] = scored;
        resp["percentile"] =
            100.0 * static_cast<double>(1 + higher) / static_cast<double>(scored + 1);
        if (!skipped.empty()) resp["skipped"] = skipped;
      }
    } catch (const std::exception& e) {
      resp["error"] = e.what();
    }
    out << resp.dump() << "\n";
  }
  return processed;
}

}  // namespace hypgen::pipeline
