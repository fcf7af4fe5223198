#pragma once

// Time-sliced validation: cut-date positives with typed negative sampling,
// subdomain grouping, the four metric families (ROC AUC, PR AUC, P@k,
// AP@k), per-subdomain reports, the case-study percentile harness and the
// synthetic-corpus generator used by the acceptance suite.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "hypgen/predicates.hpp"
#include "hypgen/util.hpp"

namespace hypgen::validation {

using Subdomain = std::pair<std::string, std::string>;  // (subj type, obj type)

struct ValidationSample {
  std::string subj_cui;
  std::string obj_cui;
  bool positive = false;
  Subdomain subdomain;
  std::optional<double> score;
};

// ---------------------------------------------------------------------------
// protocol

// Unique holdout (subject, object) pairs absent from training and mentioned
// at least `min_mentions` times, with subdomains from the first listed
// semantic types.
std::vector<ValidationSample> extract_positive_pairs(
    const std::vector<predicates::Predicate>& holdout,
    const std::vector<predicates::Predicate>& training, int min_mentions = 2);

// Term pool grouped by semantic type; each list sorted and distinct.
using TermPool = std::map<std::string, std::vector<std::string>>;

// `ratio` negatives per positive: the subject is kept and the object is
// drawn from the same-type pool, never forming a pair in `known_pairs`
// (which must cover the positives and normally also the training pairs).
// When the pool is too small the draw falls back to replacement and sets
// *with_replacement.
std::vector<ValidationSample> generate_negatives(
    const std::vector<ValidationSample>& positives, const TermPool& pool, int ratio,
    const std::set<std::pair<std::string, std::string>>& known_pairs, Rng& rng,
    bool* with_replacement = nullptr);

// Subdomains by descending positive count, ties by code pair, truncated.
std::vector<Subdomain> top_subdomains(const std::vector<ValidationSample>& positives,
                                      std::size_t count = 10);

// ---------------------------------------------------------------------------
// metrics

// Rank statistic: P(score_pos > score_neg) with ties credited 0.5.
// Requires at least one positive and one negative.
double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Non-interpolated average precision over the full ranking, descending
// score, ties broken by ascending sample id. Requires a positive.
double pr_auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Top-k by descending score (id tie-break). k beyond the sample count is
// evaluated at full length and flagged.
double precision_at_k(const std::vector<double>& scores,
                      const std::vector<int>& labels, std::size_t k,
                      bool* truncated = nullptr);

// Sum of precisions at the hit positions within the top k, divided by
// min(k, total positives).
double ap_at_k(const std::vector<double>& scores, const std::vector<int>& labels,
               std::size_t k, bool* truncated = nullptr);

// ---------------------------------------------------------------------------
// reports

struct MetricsRow {
  Subdomain subdomain;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  double roc_auc = 0.0;
  double pr_auc = 0.0;
  double p_at_10 = 0.0;
  double p_at_100 = 0.0;
  double ap_at_10 = 0.0;
  double ap_at_100 = 0.0;
};

struct MetricsReport {
  std::vector<MetricsRow> rows;  // by positive count descending
  MetricsRow mean;               // arithmetic mean of the rows
  std::vector<Subdomain> skipped_no_negatives;

  std::string to_json() const;
  std::string to_table() const;  // aligned plain text
};

using PairScorer = std::function<double(const ValidationSample&)>;

// Per-subdomain metrics over that subdomain's positives and negatives,
// limited to the requested subdomains.
MetricsReport subdomain_report(const PairScorer& scorer,
                               const std::vector<ValidationSample>& positives,
                               const std::vector<ValidationSample>& negatives,
                               const std::vector<Subdomain>& subdomains);

// ---------------------------------------------------------------------------
// case study

struct CaseStudyResult {
  double mean_percentile = 0.0;  // percent, lower is better
  double std_percentile = 0.0;
  std::string report;  // "top X percent" line with mean and std
};

// Scorer over (subject, object) pairs; the rng drives neighborhood
// subsampling inside stochastic scorers.
using CaseScorer = std::function<double(const std::string& subj_cui,
                                        const std::string& obj_cui, Rng& rng)>;

// Per repeat: draw `ratio` same-type negatives from the pool, score all
// ratio+1 pairs, report the positive's strict rank percentile.
CaseStudyResult case_study(const CaseScorer& scorer, const std::string& subj_cui,
                           const std::string& obj_cui,
                           const std::vector<std::string>& object_pool,
                           int ratio = 500, int repeats = 100,
                           std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// synthetic corpus

struct SyntheticConfig {
  std::uint64_t seed = 1;
  int n_docs = 200;
  int n_terms = 60;
  int n_communities = 2;
  double home_probability = 0.9;  // term drawn from the document's community
  double train_fraction = 0.8;    // documents dated on or before the cut
  int heldout_pairs_per_community = 10;
};

struct SyntheticCorpus {
  std::string corpus_path;
  std::string lexicon_path;
  std::string predicates_path;
  std::string extractions_path;
  std::string semnet_path;
  std::string heldout_path;  // subj<TAB>obj<TAB>label (1 within, 0 cross)
  Date cut_date;
};

// Deterministic community-structured corpus plus lexicon, curated
// predicates, open-IE extractions, a small semantic net and a labeled
// held-out pair file. Within-community held-out pairs never co-occur before
// the cut date and are planted at least twice after it.
SyntheticCorpus generate_synthetic_corpus(const std::string& out_dir,
                                          const SyntheticConfig& cfg);

}  // namespace hypgen::validation
