#pragma once

// End-to-end orchestration: declarative configuration, per-stage artifacts
// under a work directory, and a run manifest with input/output checksums so
// unchanged stages are skipped. All randomness derives from the single
// global seed through named per-stage streams.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hypgen/corpus.hpp"
#include "hypgen/embedding.hpp"
#include "hypgen/graph.hpp"
#include "hypgen/predicates.hpp"
#include "hypgen/ranker.hpp"
#include "hypgen/util.hpp"
#include "hypgen/validation.hpp"

namespace hypgen::pipeline {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& field, const std::string& msg)
      : std::runtime_error("config field '" + field + "': " + msg), field(field) {}
  std::string field;
};

struct GraphStageConfig {
  int knn_k = 25;
  std::size_t sentence_embed_dim = 64;
};

struct FilterConfig {
  double cocount_threshold = 0.001;
};

struct ValidateConfig {
  int negative_ratio = 10;
  int min_mentions = 2;
  std::size_t top_subdomains = 10;
  int repeats = 3;  // neighborhood subsamples per scored pair
};

struct QueryConfig {
  int repeats = 10;
};

struct CaseStudyConfig {
  int ratio = 500;
  int repeats = 100;
};

struct PipelineConfig {
  std::string corpus_path;
  std::string lexicon_path;
  std::string predicates_path;
  std::string extractions_path;  // variant GP
  std::string semnet_path;       // variant GP
  std::string work_dir;
  Date cut_date{2020, 10, 28};
  std::string variant = "C";  // C: curated only; GP: plus filtered open-IE
  std::uint64_t seed = 1;
  int workers = 1;
  bool deterministic = true;

  corpus::NgramConfig ngrams;
  GraphStageConfig graph;
  embedding::EmbedTrainConfig embed;
  ranker::RankerConfig ranker_model;
  ranker::RankTrainConfig ranker_train;
  FilterConfig filter;
  ValidateConfig validate;
  QueryConfig query;
  CaseStudyConfig case_study;

  static PipelineConfig load(const std::string& path);
  std::string to_json() const;
  // Throws ConfigError naming the offending field.
  void check() const;
};

// Artifact layout under the work directory.
struct ArtifactPaths {
  explicit ArtifactPaths(const std::string& work_dir);
  std::string work_dir;
  std::string annotated;
  std::string ingest_report;
  std::string predicates_train;
  std::string predicates_holdout;
  std::string filter_report;
  std::string graph_dir;
  std::string embeddings;
  std::string ranker_ckpt;
  std::string ranker_meta;
  std::string metrics_json;
  std::string metrics_table;
  std::string validate_report;
  std::string manifest;

  std::vector<std::string> graph_files() const;  // all edge and node files
};

// Stage bookkeeping: fingerprints plus output checksums.
class RunManifest {
 public:
  struct StageRecord {
    std::string fingerprint;
    std::map<std::string, std::string> outputs;  // path -> checksum hex
    double seconds = 0.0;
  };

  static RunManifest load(const std::string& path);
  void save(const std::string& path, const std::string& config_checksum) const;

  bool stage_current(const std::string& stage, const std::string& fingerprint) const;
  void record(const std::string& stage, StageRecord rec);
  const std::map<std::string, StageRecord>& stages() const { return stages_; }

 private:
  std::map<std::string, StageRecord> stages_;
};

inline constexpr const char* kStageOrder[] = {
    "ingest", "filter-predicates", "build-graph",
    "train-embed", "train-ranker", "validate",
};

struct StageOutcome {
  std::string name;
  bool skipped = false;
  double seconds = 0.0;
};

// Runs one named stage unconditionally (inputs must exist) or the whole
// chain with manifest-based skipping. Both throw on missing prerequisites,
// naming the absent artifact.
StageOutcome run_stage(const PipelineConfig& cfg, const std::string& stage);
std::vector<StageOutcome> run_pipeline(const PipelineConfig& cfg, bool force,
                                       std::ostream& log);

// Trained artifacts for query serving and case studies.
struct LoadedEngine {
  PipelineConfig cfg;
  corpus::Lexicon lexicon;
  graph::SemanticGraph graph;
  embedding::EmbeddingStore store;
  ranker::RankerModel model;

  static LoadedEngine load(const PipelineConfig& cfg);

  // Lowercase CUIs present in the store, grouped by first semantic type.
  validation::TermPool term_pool() const;
};

// Line-delimited query protocol: {"a","b","repeats"?,"candidates"?} in,
// one response object per request in request order.
int query_loop(const LoadedEngine& engine, std::istream& in, std::ostream& out);

}  // namespace hypgen::pipeline
