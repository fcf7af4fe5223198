#pragma once

// Predicate ingestion and filtering: structured open-IE extractions are
// aligned against sentence-level concept annotations, then passed through
// the semantic-type-network filter and the normalized co-occurrence filter
// before being merged with the curated predicate set.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "hypgen/corpus.hpp"

namespace hypgen::predicates {

enum class Source { Curated, OpenIE };

struct Predicate {
  std::string subj_cui;
  std::vector<std::string> subj_types;
  std::string verb;  // non-empty, lowercase
  std::string obj_cui;
  std::vector<std::string> obj_types;
  std::string doc_id;
  int sent_idx = 0;
  Source source = Source::Curated;
};

struct RawExtraction {
  std::string doc_id;
  int sent_idx = 0;
  std::string arg0_phrase;
  std::string verb_phrase;
  std::string arg1_phrase;
};

// Allowed (subject type -> object type) relations plus a specific-to-general
// hierarchy over an explicit type inventory.
class SemanticTypeNet {
 public:
  void add_type(std::string_view code);
  void add_relation(std::string_view from, std::string_view to);
  void add_isa(std::string_view specific, std::string_view general);

  bool has_type(std::string_view code) const;
  const std::set<std::string>& relation_targets(const std::string& from) const;
  // Type plus all hierarchy ancestors (transitive).
  std::set<std::string> expand(const std::vector<std::string>& types) const;
  const std::set<std::pair<std::string, std::string>>& relations() const {
    return relations_;
  }

  // Tab-separated sections: REL<TAB>t1<TAB>t2 and ISA<TAB>t<TAB>general.
  static SemanticTypeNet load(const std::string& path);

 private:
  std::set<std::string> inventory_;
  std::set<std::pair<std::string, std::string>> relations_;
  std::map<std::string, std::set<std::string>> targets_;
  std::map<std::string, std::set<std::string>> parents_;
};

// ---------------------------------------------------------------------------
// operations

struct IngestReport {
  std::size_t kept = 0;
  std::size_t malformed = 0;
  std::size_t unresolvable = 0;  // doc/sentence missing or phrase not a substring
};

using SentenceIndex =
    std::map<std::pair<std::string, int>, const corpus::AnnotatedSentence*>;
SentenceIndex index_sentences(const std::vector<corpus::AnnotatedDoc>& docs);

// Line-delimited JSON records {doc_id, sent_idx, arg0, verb, arg1} in input
// order. Malformed lines are counted and skipped; extractions whose source
// sentence is unknown or whose phrases are not substrings of it are skipped.
std::vector<RawExtraction> ingest_extractions(const std::string& path,
                                              const SentenceIndex& sentences,
                                              IngestReport& report);

// Maps arg phrases onto the sentence's coded terms (longest lexicon surface
// contained in the phrase wins). Returns nothing when either side has no
// coded term or both resolve to the same CUI.
std::optional<Predicate> align_concepts(const RawExtraction& extraction,
                                        const corpus::AnnotatedSentence& sentence,
                                        const corpus::Lexicon& lexicon);

// Valid iff some relation edge leads from the subject's expanded type set
// into the object's expanded type set. Types missing from the inventory make
// the predicate invalid and set *unknown_type.
bool semnet_filter(const Predicate& p, const SemanticTypeNet& net,
                   bool* unknown_type = nullptr);

// Sentence-level occurrence counts used by the co-occurrence filter.
struct TermCounts {
  std::map<std::string, std::size_t> count;                   // CUI -> sentences
  std::map<std::pair<std::string, std::string>, std::size_t> cocount;  // a<b
};
TermCounts count_terms(const std::vector<corpus::AnnotatedDoc>& docs);

double cocount_score(const TermCounts& counts, const std::string& cui_a,
                     const std::string& cui_b);

// Keeps predicates with cocount(a,b)/sqrt(count(a)count(b)) >= threshold.
// A predicate term with no marginal count is an inconsistency and throws.
std::vector<Predicate> cocount_filter(const std::vector<Predicate>& preds,
                                      const TermCounts& counts, double threshold);

// Union keyed by (subj, verb, obj, doc_id, sent_idx); curated wins on
// collision; output sorted by key.
std::vector<Predicate> merge_predicates(const std::vector<Predicate>& curated,
                                        const std::vector<Predicate>& openie);

// Curated predicate files: line-delimited JSON with the Predicate fields.
std::vector<Predicate> load_predicates(const std::string& path);
void save_predicates(const std::string& path, const std::vector<Predicate>& preds);

}  // namespace hypgen::predicates
