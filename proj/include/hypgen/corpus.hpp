#pragma once

// Corpus ingestion: line-delimited citation records, a deterministic
// rule-based annotator (tokens, lemma proxies, dictionary entities, coded
// terms), corpus-wide n-gram mining, feature-hashing sentence vectors and
// the cut-date split. Annotation is a pure function of (record, lexicon);
// records may also carry pre-supplied annotations which override the
// built-in annotator.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "hypgen/util.hpp"

namespace hypgen::corpus {

// ---------------------------------------------------------------------------
// domain types

struct EntityMention {
  std::size_t begin = 0;  // char offsets into the sentence text, [begin, end)
  std::size_t end = 0;
  std::string surface;
};

struct CodedTerm {
  std::string cui;                 // stored as given; compared case-insensitively
  std::vector<std::string> types;  // semantic type codes, at least one
};

struct AnnotatedSentence {
  std::string doc_id;
  int sent_idx = 0;  // 0 is the title
  std::string text;
  std::vector<std::string> tokens;
  std::vector<std::string> lemmas;
  std::vector<EntityMention> entities;
  std::vector<CodedTerm> coded_terms;
  std::vector<std::string> ngrams;
};

struct CitationRecord {
  std::string doc_id;
  Date date;
  std::string title;
  std::string abstract;
  std::string language;  // 2-letter tag
  std::vector<std::string> mesh_terms;
  // Pre-supplied annotations override the built-in annotator when present.
  std::optional<std::vector<AnnotatedSentence>> presupplied;
};

struct AnnotatedDoc {
  std::string doc_id;
  Date date;
  std::vector<AnnotatedSentence> sentences;
};

struct NgramConfig {
  std::set<int> n_values = {2, 3, 4};
  int min_count = 3;
};

struct LexiconEntry {
  std::string cui;
  std::vector<std::string> types;
};

class Lexicon {
 public:
  // Surface forms are stored case-folded. Entries without semantic types
  // are rejected.
  void add(std::string_view surface, std::string_view cui,
           std::vector<std::string> types, std::string_view preferred_name);

  const LexiconEntry* find_surface(std::string_view surface_folded) const;
  const std::vector<std::string>* types_of(std::string_view cui) const;
  const std::string* name_of(std::string_view cui) const;

  std::size_t size() const { return by_surface_.size(); }
  std::size_t max_surface_tokens() const { return max_surface_tokens_; }

  // Surfaces mapping to `cui`, longest first (used for concept alignment).
  std::vector<std::string> surfaces() const;

  // Tab-separated: surface<TAB>CUI<TAB>semtype[,semtype...]<TAB>preferred_name
  static Lexicon load(const std::string& path);

 private:
  std::map<std::string, LexiconEntry> by_surface_;
  std::map<std::string, std::vector<std::string>> types_by_cui_;  // key folded
  std::map<std::string, std::string> name_by_cui_;
  std::size_t max_surface_tokens_ = 1;
};

// ---------------------------------------------------------------------------
// operations

struct ParseReport {
  std::size_t parsed = 0;
  std::size_t excluded_non_english = 0;
  std::size_t skipped_missing_fields = 0;
};

// Parses line-delimited JSON records in input order. Non-English records are
// excluded and counted. Malformed lines and duplicate doc_ids abort the
// parse; records missing doc_id or date are skipped and counted.
std::vector<CitationRecord> parse_corpus(std::string_view text, ParseReport& report);
std::vector<CitationRecord> parse_corpus_file(const std::string& path, ParseReport& report);

// Rule-based deterministic annotation. The title becomes sentence 0;
// entities are longest-match case-folded lexicon lookups; record-level MeSH
// terms are attached to every sentence (terms unknown to the lexicon are
// dropped).
std::vector<AnnotatedSentence> annotate_record(const CitationRecord& record,
                                               const Lexicon& lexicon);

// Corpus-wide n-gram mining over lemma sequences. An n-gram enters the
// vocabulary iff its contiguous lemma sequence occurs >= min_count times
// across all sentences; qualifying n-grams are attached to each sentence in
// first-occurrence order, joined with underscores.
std::set<std::string> mine_ngrams(std::vector<AnnotatedSentence*> sentences,
                                  const NgramConfig& cfg);
std::set<std::string> mine_ngrams(std::vector<AnnotatedSentence>& sentences,
                                  const NgramConfig& cfg);
std::set<std::string> mine_ngrams(std::vector<AnnotatedDoc>& docs, const NgramConfig& cfg);

// Signed feature hashing of tokens with TF weighting and L2 normalization.
// Identical token lists yield identical vectors. An empty token list returns
// the first basis vector and sets *empty_flag.
std::vector<double> embed_sentence(const std::vector<std::string>& tokens,
                                   std::size_t dim, std::uint64_t seed,
                                   bool* empty_flag = nullptr);

// Training side keeps records dated on or before the cutoff.
template <typename T>
void split_by_date(const std::vector<T>& records, const Date& cutoff,
                   std::vector<T>& training, std::vector<T>& holdout) {
  for (const T& r : records) {
    if (r.date <= cutoff)
      training.push_back(r);
    else
      holdout.push_back(r);
  }
}

// Tokenizer used by the annotator; exposed for reuse in alignment code.
// Splits on whitespace and trims surrounding punctuation, keeping character
// offsets into the original text.
struct Token {
  std::string text;
  std::size_t begin = 0;
  std::size_t end = 0;
};
std::vector<Token> tokenize(std::string_view text);

// Case-fold plus one-suffix strip {ing, ed, es, s} when the remaining stem
// has length >= 4.
std::string lemma_of(std::string_view token);

// Sentence boundaries: ". ", "? ", "! " followed by an uppercase letter.
std::vector<std::string> split_sentences(std::string_view text);

// Annotated-corpus artifact: one JSON document per line, stable field order.
void save_annotated(const std::string& path, const std::vector<AnnotatedDoc>& docs);
std::vector<AnnotatedDoc> load_annotated(const std::string& path);

}  // namespace hypgen::corpus
