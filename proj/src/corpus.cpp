#include "hypgen/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"

namespace hypgen::corpus {

using nlohmann::json;

// ---------------------------------------------------------------------------
// lexicon

void Lexicon::add(std::string_view surface, std::string_view cui,
                  std::vector<std::string> types, std::string_view preferred_name) {
  if (types.empty())
    throw std::invalid_argument("lexicon entry without semantic types: " +
                                std::string(surface));
  std::string folded = to_lower(surface);
  std::size_t ntok = 1 + static_cast<std::size_t>(
                             std::count(folded.begin(), folded.end(), ' '));
  max_surface_tokens_ = std::max(max_surface_tokens_, ntok);
  std::string cui_folded = to_lower(cui);
  auto& known = types_by_cui_[cui_folded];
  for (const auto& t : types)
    if (std::find(known.begin(), known.end(), t) == known.end()) known.push_back(t);
  if (!preferred_name.empty()) name_by_cui_.emplace(cui_folded, preferred_name);
  by_surface_[std::move(folded)] = LexiconEntry{std::string(cui), std::move(types)};
}

const LexiconEntry* Lexicon::find_surface(std::string_view surface_folded) const {
  auto it = by_surface_.find(std::string(surface_folded));
  return it == by_surface_.end() ? nullptr : &it->second;
}

const std::vector<std::string>* Lexicon::types_of(std::string_view cui) const {
  auto it = types_by_cui_.find(to_lower(cui));
  return it == types_by_cui_.end() ? nullptr : &it->second;
}

const std::string* Lexicon::name_of(std::string_view cui) const {
  auto it = name_by_cui_.find(to_lower(cui));
  return it == name_by_cui_.end() ? nullptr : &it->second;
}

std::vector<std::string> Lexicon::surfaces() const {
  std::vector<std::string> out;
  out.reserve(by_surface_.size());
  for (const auto& [s, _] : by_surface_) out.push_back(s);
  std::sort(out.begin(), out.end(), [](const std::string& a, const std::string& b) {
    if (a.size() != b.size()) return a.size() > b.size();
    return a < b;
  });
  return out;
}

Lexicon Lexicon::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open lexicon: " + path);
  Lexicon lex;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto fields = split(line, '\t');
    if (fields.size() < 4)
      throw std::runtime_error("lexicon line " + std::to_string(lineno) +
                               ": expected 4 tab-separated fields");
    lex.add(fields[0], fields[1], split(fields[2], ','), fields[3]);
  }
  return lex;
}

// ---------------------------------------------------------------------------
// parsing

namespace {

CitationRecord record_from_json(const json& j);

AnnotatedSentence sentence_from_json(const json& j, const std::string& doc_id) {
  AnnotatedSentence s;
  s.doc_id = doc_id;
  s.sent_idx = j.at("sent_idx").get<int>();
  s.text = j.value("text", std::string());
  s.tokens = j.value("tokens", std::vector<std::string>());
  s.lemmas = j.value("lemmas", std::vector<std::string>());
  if (j.contains("entities"))
    for (const auto& e : j["entities"]) {
      EntityMention m;
      m.begin = e.at("begin").get<std::size_t>();
      m.end = e.at("end").get<std::size_t>();
      m.surface = e.at("surface").get<std::string>();
      if (m.end > s.text.size() || m.begin > m.end)
        throw std::runtime_error("entity span outside sentence text");
      s.entities.push_back(std::move(m));
    }
  if (j.contains("coded_terms"))
    for (const auto& c : j["coded_terms"]) {
      CodedTerm t;
      t.cui = c.at("cui").get<std::string>();
      t.types = c.at("types").get<std::vector<std::string>>();
      if (t.types.empty()) throw std::runtime_error("coded term without types");
      s.coded_terms.push_back(std::move(t));
    }
  s.ngrams = j.value("ngrams", std::vector<std::string>());
  return s;
}

CitationRecord record_from_json(const json& j) {
  CitationRecord r;
  r.doc_id = j.at("doc_id").get<std::string>();
  auto date = Date::parse(j.at("date").get<std::string>());
  if (!date) throw std::runtime_error("date does not parse as ISO-8601");
  r.date = *date;
  r.title = j.value("title", std::string());
  r.abstract = j.value("abstract", std::string());
  r.language = j.value("language", std::string());
  r.mesh_terms = j.value("mesh_terms", std::vector<std::string>());
  if (j.contains("sentences")) {
    std::vector<AnnotatedSentence> sents;
    for (const auto& sj : j["sentences"])
      sents.push_back(sentence_from_json(sj, r.doc_id));
    std::sort(sents.begin(), sents.end(),
              [](const auto& a, const auto& b) { return a.sent_idx < b.sent_idx; });
    for (std::size_t i = 0; i < sents.size(); ++i)
      if (sents[i].sent_idx != static_cast<int>(i))
        throw std::runtime_error("pre-supplied sent_idx not contiguous from 0");
    r.presupplied = std::move(sents);
  }
  return r;
}

}  // namespace

std::vector<CitationRecord> parse_corpus(std::string_view text, ParseReport& report) {
  std::vector<CitationRecord> out;
  std::unordered_set<std::string> seen_ids;
  std::size_t lineno = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t eol = text.find('\n', start);
    std::string_view line = eol == std::string_view::npos
                                ? text.substr(start)
                                : text.substr(start, eol - start);
    start = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++lineno;
    if (line.empty()) continue;

    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object())
      throw std::runtime_error("corpus line " + std::to_string(lineno) +
                               ": malformed record");
    if (!j.contains("doc_id") || !j.contains("date") ||
        !Date::parse(j.value("date", std::string()))) {
      ++report.skipped_missing_fields;
      continue;
    }
    CitationRecord r;
    try {
      r = record_from_json(j);
    } catch (const std::exception& e) {
      throw std::runtime_error("corpus line " + std::to_string(lineno) + ": " +
                               e.what());
    }
    if (!seen_ids.insert(r.doc_id).second)
      throw std::runtime_error("duplicate doc_id in corpus: " + r.doc_id);
    if (to_lower(r.language) != "en") {
      ++report.excluded_non_english;
      continue;
    }
    ++report.parsed;
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<CitationRecord> parse_corpus_file(const std::string& path,
                                              ParseReport& report) {
  return parse_corpus(read_text_file(path), report);
}

// ---------------------------------------------------------------------------
// annotation

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i + 2 < text.size(); ++i) {
    char c = text[i];
    if ((c == '.' || c == '?' || c == '!') && text[i + 1] == ' ' &&
        std::isupper(static_cast<unsigned char>(text[i + 2]))) {
      out.emplace_back(text.substr(start, i + 1 - start));
      start = i + 2;
      ++i;
    }
  }
  if (start < text.size()) out.emplace_back(text.substr(start));
  return out;
}

namespace {

bool is_trim_punct(char c) {
  switch (c) {
    case '.': case ',': case ';': case ':': case '!': case '?':
    case '(': case ')': case '[': case ']': case '{': case '}':
    case '"': case '\'':
      return true;
    default:
      return false;
  }
}

}  // namespace

std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t begin = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i == begin) break;
    std::size_t b = begin, e = i;
    while (b < e && is_trim_punct(text[b])) ++b;
    while (e > b && is_trim_punct(text[e - 1])) --e;
    if (e > b) out.push_back(Token{std::string(text.substr(b, e - b)), b, e});
  }
  return out;
}

std::string lemma_of(std::string_view token) {
  std::string t = to_lower(token);
  static constexpr std::string_view suffixes[] = {"ing", "ed", "es", "s"};
  for (auto suf : suffixes) {
    if (t.size() > suf.size() && t.ends_with(suf) && t.size() - suf.size() >= 4)
      return t.substr(0, t.size() - suf.size());
  }
  return t;
}

namespace {

AnnotatedSentence annotate_sentence(const std::string& doc_id, int sent_idx,
                                    std::string text, const Lexicon& lexicon) {
  AnnotatedSentence s;
  s.doc_id = doc_id;
  s.sent_idx = sent_idx;
  s.text = std::move(text);

  auto tokens = tokenize(s.text);
  s.tokens.reserve(tokens.size());
  s.lemmas.reserve(tokens.size());
  for (const auto& t : tokens) {
    s.tokens.push_back(t.text);
    s.lemmas.push_back(lemma_of(t.text));
  }

  // Longest-match case-folded dictionary lookup over token windows,
  // left to right, non-overlapping.
  std::size_t max_len = lexicon.max_surface_tokens();
  std::size_t i = 0;
  while (i < tokens.size()) {
    std::size_t matched = 0;
    const LexiconEntry* entry = nullptr;
    std::size_t cap = std::min(max_len, tokens.size() - i);
    for (std::size_t len = cap; len >= 1; --len) {
      std::string window;
      for (std::size_t k = 0; k < len; ++k) {
        if (k) window += ' ';
        window += to_lower(tokens[i + k].text);
      }
      if (const LexiconEntry* e = lexicon.find_surface(window)) {
        matched = len;
        entry = e;
        break;
      }
    }
    if (matched) {
      EntityMention m;
      m.begin = tokens[i].begin;
      m.end = tokens[i + matched - 1].end;
      m.surface = s.text.substr(m.begin, m.end - m.begin);
      s.entities.push_back(std::move(m));
      s.coded_terms.push_back(CodedTerm{entry->cui, entry->types});
      i += matched;
    } else {
      ++i;
    }
  }
  return s;
}

void attach_coded_term_once(AnnotatedSentence& s, const std::string& cui,
                            const std::vector<std::string>& types) {
  std::string folded = to_lower(cui);
  for (const auto& c : s.coded_terms)
    if (to_lower(c.cui) == folded) return;
  s.coded_terms.push_back(CodedTerm{cui, types});
}

}  // namespace

std::vector<AnnotatedSentence> annotate_record(const CitationRecord& record,
                                               const Lexicon& lexicon) {
  std::vector<AnnotatedSentence> out;
  if (record.presupplied) {
    out = *record.presupplied;
  } else {
    out.push_back(annotate_sentence(record.doc_id, 0, record.title, lexicon));
    int idx = 1;
    for (auto& sent : split_sentences(record.abstract))
      out.push_back(annotate_sentence(record.doc_id, idx++, std::move(sent), lexicon));
  }
  // Record-level MeSH terms land on every sentence; terms the lexicon does
  // not know are dropped so every coded term stays resolvable.
  for (const auto& cui : record.mesh_terms) {
    const auto* types = lexicon.types_of(cui);
    if (!types) continue;
    for (auto& s : out) attach_coded_term_once(s, cui, *types);
  }
  return out;
}

// ---------------------------------------------------------------------------
// n-grams

std::set<std::string> mine_ngrams(std::vector<AnnotatedSentence*> sentences,
                                  const NgramConfig& cfg) {
  if (cfg.min_count < 1) throw std::invalid_argument("ngram min_count must be >= 1");
  std::unordered_map<std::string, int> counts;
  auto each_gram = [&](const AnnotatedSentence& s, auto&& fn) {
    for (int n : cfg.n_values) {
      if (n < 2) continue;
      std::size_t nn = static_cast<std::size_t>(n);
      if (s.lemmas.size() < nn) continue;
      for (std::size_t i = 0; i + nn <= s.lemmas.size(); ++i) {
        std::string g = s.lemmas[i];
        for (std::size_t k = 1; k < nn; ++k) {
          g += '_';
          g += s.lemmas[i + k];
        }
        fn(g);
      }
    }
  };
  for (const auto* s : sentences)
    each_gram(*s, [&](const std::string& g) { ++counts[g]; });

  std::set<std::string> vocab;
  for (const auto& [g, c] : counts)
    if (c >= cfg.min_count) vocab.insert(g);

  for (auto* s : sentences) {
    s->ngrams.clear();
    std::unordered_set<std::string> seen;
    each_gram(*s, [&](const std::string& g) {
      if (vocab.count(g) && seen.insert(g).second) s->ngrams.push_back(g);
    });
  }
  return vocab;
}

std::set<std::string> mine_ngrams(std::vector<AnnotatedSentence>& sentences,
                                  const NgramConfig& cfg) {
  std::vector<AnnotatedSentence*> ptrs;
  ptrs.reserve(sentences.size());
  for (auto& s : sentences) ptrs.push_back(&s);
  return mine_ngrams(std::move(ptrs), cfg);
}

std::set<std::string> mine_ngrams(std::vector<AnnotatedDoc>& docs,
                                  const NgramConfig& cfg) {
  std::vector<AnnotatedSentence*> ptrs;
  for (auto& d : docs)
    for (auto& s : d.sentences) ptrs.push_back(&s);
  return mine_ngrams(std::move(ptrs), cfg);
}

// ---------------------------------------------------------------------------
// annotated corpus artifact

namespace {

json sentence_to_json(const AnnotatedSentence& s) {
  json j;
  j["sent_idx"] = s.sent_idx;
  j["text"] = s.text;
  j["tokens"] = s.tokens;
  j["lemmas"] = s.lemmas;
  json ents = json::array();
  for (const auto& e : s.entities)
    ents.push_back({{"begin", e.begin}, {"end", e.end}, {"surface", e.surface}});
  j["entities"] = std::move(ents);
  json terms = json::array();
  for (const auto& c : s.coded_terms)
    terms.push_back({{"cui", c.cui}, {"types", c.types}});
  j["coded_terms"] = std::move(terms);
  j["ngrams"] = s.ngrams;
  return j;
}

}  // namespace

void save_annotated(const std::string& path, const std::vector<AnnotatedDoc>& docs) {
  std::ostringstream out;
  for (const auto& d : docs) {
    json j;
    j["doc_id"] = d.doc_id;
    j["date"] = d.date.to_string();
    json sents = json::array();
    for (const auto& s : d.sentences) sents.push_back(sentence_to_json(s));
    j["sentences"] = std::move(sents);
    out << j.dump() << '\n';
  }
  write_text_file(path, out.str());
}

std::vector<AnnotatedDoc> load_annotated(const std::string& path) {
  std::vector<AnnotatedDoc> out;
  std::istringstream in(read_text_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    AnnotatedDoc d;
    d.doc_id = j.at("doc_id").get<std::string>();
    auto date = Date::parse(j.at("date").get<std::string>());
    if (!date) throw std::runtime_error("annotated corpus: bad date for " + d.doc_id);
    d.date = *date;
    for (const auto& sj : j.at("sentences"))
      d.sentences.push_back(sentence_from_json(sj, d.doc_id));
    out.push_back(std::move(d));
  }
  return out;
}

// ---------------------------------------------------------------------------
// sentence vectors

std::vector<double> embed_sentence(const std::vector<std::string>& tokens,
                                   std::size_t dim, std::uint64_t seed,
                                   bool* empty_flag) {
  if (dim < 2) throw std::invalid_argument("embed_sentence: dim must be >= 2");
  std::vector<double> v(dim, 0.0);
  if (empty_flag) *empty_flag = false;
  if (tokens.empty()) {
    // Zero-information sentinel: first basis vector.
    v[0] = 1.0;
    if (empty_flag) *empty_flag = true;
    return v;
  }
  for (const auto& tok : tokens) {
    std::uint64_t h = mix64(fnv1a64(tok) ^ (seed * 0x9e3779b97f4a7c15ULL));
    std::size_t idx = static_cast<std::size_t>(h % dim);
    double sign = (h >> 63) ? 1.0 : -1.0;
    v[idx] += sign;  // one count per occurrence: TF weighting
  }
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm == 0.0) {
    // Signed counts cancelled out entirely; fall back to the sentinel.
    v.assign(dim, 0.0);
    v[0] = 1.0;
    if (empty_flag) *empty_flag = true;
    return v;
  }
  for (double& x : v) x /= norm;
  return v;
}

}  // namespace hypgen::corpus
