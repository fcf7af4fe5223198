#include "hypgen/predicates.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace hypgen::predicates {

using nlohmann::json;

// ---------------------------------------------------------------------------
// SemanticTypeNet

void SemanticTypeNet::add_type(std::string_view code) {
  inventory_.insert(std::string(code));
}

void SemanticTypeNet::add_relation(std::string_view from, std::string_view to) {
  add_type(from);
  add_type(to);
  relations_.emplace(std::string(from), std::string(to));
  targets_[std::string(from)].insert(std::string(to));
}

void SemanticTypeNet::add_isa(std::string_view specific, std::string_view general) {
  add_type(specific);
  add_type(general);
  parents_[std::string(specific)].insert(std::string(general));
  // Reject cycles eagerly: the hierarchy must stay acyclic.
  std::set<std::string> seen;
  std::deque<std::string> todo{std::string(general)};
  while (!todo.empty()) {
    std::string cur = todo.front();
    todo.pop_front();
    if (cur == specific)
      throw std::invalid_argument("type hierarchy cycle through " +
                                  std::string(specific));
    if (!seen.insert(cur).second) continue;
    auto it = parents_.find(cur);
    if (it != parents_.end())
      for (const auto& p : it->second) todo.push_back(p);
  }
}

bool SemanticTypeNet::has_type(std::string_view code) const {
  return inventory_.count(std::string(code)) > 0;
}

const std::set<std::string>& SemanticTypeNet::relation_targets(
    const std::string& from) const {
  static const std::set<std::string> kEmpty;
  auto it = targets_.find(from);
  return it == targets_.end() ? kEmpty : it->second;
}

std::set<std::string> SemanticTypeNet::expand(
    const std::vector<std::string>& types) const {
  std::set<std::string> out;
  std::deque<std::string> todo(types.begin(), types.end());
  while (!todo.empty()) {
    std::string cur = todo.front();
    todo.pop_front();
    if (!out.insert(cur).second) continue;
    auto it = parents_.find(cur);
    if (it != parents_.end())
      for (const auto& p : it->second) todo.push_back(p);
  }
  return out;
}

SemanticTypeNet SemanticTypeNet::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open semantic net: " + path);
  SemanticTypeNet net;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto fields = split(line, '\t');
    if (fields.size() != 3)
      throw std::runtime_error("semantic net line " + std::to_string(lineno) +
                               ": expected 3 tab-separated fields");
    if (fields[0] == "REL")
      net.add_relation(fields[1], fields[2]);
    else if (fields[0] == "ISA")
      net.add_isa(fields[1], fields[2]);
    else
      throw std::runtime_error("semantic net line " + std::to_string(lineno) +
                               ": unknown section " + fields[0]);
  }
  return net;
}

// ---------------------------------------------------------------------------
// ingestion

SentenceIndex index_sentences(const std::vector<corpus::AnnotatedDoc>& docs) {
  SentenceIndex idx;
  for (const auto& d : docs)
    for (const auto& s : d.sentences) idx[{d.doc_id, s.sent_idx}] = &s;
  return idx;
}

std::vector<RawExtraction> ingest_extractions(const std::string& path,
                                              const SentenceIndex& sentences,
                                              IngestReport& report) {
  std::istringstream in(read_text_file(path));
  std::vector<RawExtraction> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("doc_id") ||
        !j.contains("sent_idx") || !j.contains("arg0") || !j.contains("verb") ||
        !j.contains("arg1")) {
      ++report.malformed;
      continue;
    }
    RawExtraction e;
    e.doc_id = j["doc_id"].get<std::string>();
    e.sent_idx = j["sent_idx"].get<int>();
    e.arg0_phrase = j["arg0"].get<std::string>();
    e.verb_phrase = j["verb"].get<std::string>();
    e.arg1_phrase = j["arg1"].get<std::string>();
    auto it = sentences.find({e.doc_id, e.sent_idx});
    if (it == sentences.end()) {
      ++report.unresolvable;
      continue;
    }
    const std::string& text = it->second->text;
    if (text.find(e.arg0_phrase) == std::string::npos ||
        text.find(e.verb_phrase) == std::string::npos ||
        text.find(e.arg1_phrase) == std::string::npos) {
      ++report.unresolvable;
      continue;
    }
    ++report.kept;
    out.push_back(std::move(e));
  }
  return out;
}

// ---------------------------------------------------------------------------
// alignment

namespace {

// Longest lexicon surface among the sentence's entities that occurs inside
// the phrase (case-folded). Ties go to the earlier entity.
const corpus::LexiconEntry* longest_entity_in_phrase(
    const corpus::AnnotatedSentence& sentence, const corpus::Lexicon& lexicon,
    std::string_view phrase) {
  std::string folded = to_lower(phrase);
  const corpus::LexiconEntry* best = nullptr;
  std::size_t best_len = 0;
  for (const auto& ent : sentence.entities) {
    std::string surface = to_lower(ent.surface);
    if (surface.size() <= best_len) continue;
    if (folded.find(surface) == std::string::npos) continue;
    const corpus::LexiconEntry* e = lexicon.find_surface(surface);
    if (!e) continue;
    best = e;
    best_len = surface.size();
  }
  return best;
}

std::string head_token(std::string_view verb_phrase) {
  auto tokens = corpus::tokenize(verb_phrase);
  if (tokens.empty()) return {};
  return to_lower(tokens.back().text);
}

}  // namespace

std::optional<Predicate> align_concepts(const RawExtraction& extraction,
                                        const corpus::AnnotatedSentence& sentence,
                                        const corpus::Lexicon& lexicon) {
  const corpus::LexiconEntry* subj =
      longest_entity_in_phrase(sentence, lexicon, extraction.arg0_phrase);
  const corpus::LexiconEntry* obj =
      longest_entity_in_phrase(sentence, lexicon, extraction.arg1_phrase);
  if (!subj || !obj) return std::nullopt;
  if (to_lower(subj->cui) == to_lower(obj->cui)) return std::nullopt;
  std::string verb = head_token(extraction.verb_phrase);
  if (verb.empty()) return std::nullopt;
  Predicate p;
  p.subj_cui = subj->cui;
  p.subj_types = subj->types;
  p.verb = std::move(verb);
  p.obj_cui = obj->cui;
  p.obj_types = obj->types;
  p.doc_id = extraction.doc_id;
  p.sent_idx = extraction.sent_idx;
  p.source = Source::OpenIE;
  return p;
}

// ---------------------------------------------------------------------------
// filters

bool semnet_filter(const Predicate& p, const SemanticTypeNet& net,
                   bool* unknown_type) {
  if (unknown_type) *unknown_type = false;
  for (const auto& t : p.subj_types)
    if (!net.has_type(t)) {
      if (unknown_type) *unknown_type = true;
      return false;
    }
  for (const auto& t : p.obj_types)
    if (!net.has_type(t)) {
      if (unknown_type) *unknown_type = true;
      return false;
    }
  std::set<std::string> subj_exp = net.expand(p.subj_types);
  std::set<std::string> candidate;
  for (const auto& t : subj_exp) {
    const auto& targets = net.relation_targets(t);
    candidate.insert(targets.begin(), targets.end());
  }
  for (const auto& t : net.expand(p.obj_types))
    if (candidate.count(t)) return true;
  return false;
}

TermCounts count_terms(const std::vector<corpus::AnnotatedDoc>& docs) {
  TermCounts counts;
  for (const auto& d : docs)
    for (const auto& s : d.sentences) {
      std::set<std::string> cuis;
      for (const auto& t : s.coded_terms) cuis.insert(to_lower(t.cui));
      for (const auto& c : cuis) ++counts.count[c];
      for (auto a = cuis.begin(); a != cuis.end(); ++a) {
        auto b = a;
        for (++b; b != cuis.end(); ++b) ++counts.cocount[{*a, *b}];
      }
    }
  return counts;
}

double cocount_score(const TermCounts& counts, const std::string& cui_a,
                     const std::string& cui_b) {
  std::string a = to_lower(cui_a), b = to_lower(cui_b);
  auto ia = counts.count.find(a);
  auto ib = counts.count.find(b);
  if (ia == counts.count.end() || ib == counts.count.end() || ia->second == 0 ||
      ib->second == 0)
    throw std::runtime_error("cocount_filter: no corpus count for term " +
                             (ia == counts.count.end() || ia->second == 0 ? a : b));
  auto key = a < b ? std::make_pair(a, b) : std::make_pair(b, a);
  auto ic = counts.cocount.find(key);
  double co = ic == counts.cocount.end() ? 0.0 : static_cast<double>(ic->second);
  return co / std::sqrt(static_cast<double>(ia->second) *
                        static_cast<double>(ib->second));
}

std::vector<Predicate> cocount_filter(const std::vector<Predicate>& preds,
                                      const TermCounts& counts, double threshold) {
  std::vector<Predicate> out;
  for (const auto& p : preds)
    if (cocount_score(counts, p.subj_cui, p.obj_cui) >= threshold) out.push_back(p);
  return out;
}

// ---------------------------------------------------------------------------
// merge and IO

namespace {

using PredKey = std::tuple<std::string, std::string, std::string, std::string, int>;

PredKey key_of(const Predicate& p) {
  return {to_lower(p.subj_cui), p.verb, to_lower(p.obj_cui), p.doc_id, p.sent_idx};
}

}  // namespace

std::vector<Predicate> merge_predicates(const std::vector<Predicate>& curated,
                                        const std::vector<Predicate>& openie) {
  std::map<PredKey, Predicate> merged;
  for (const auto& p : openie) merged[key_of(p)] = p;
  for (const auto& p : curated) merged[key_of(p)] = p;  // curated wins
  std::vector<Predicate> out;
  out.reserve(merged.size());
  for (auto& [_, p] : merged) out.push_back(std::move(p));
  return out;
}

std::vector<Predicate> load_predicates(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::vector<Predicate> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object())
      throw std::runtime_error("predicate line " + std::to_string(lineno) +
                               ": malformed record");
    Predicate p;
    p.subj_cui = j.at("subj_cui").get<std::string>();
    p.subj_types = j.at("subj_types").get<std::vector<std::string>>();
    p.verb = to_lower(j.at("verb").get<std::string>());
    p.obj_cui = j.at("obj_cui").get<std::string>();
    p.obj_types = j.at("obj_types").get<std::vector<std::string>>();
    p.doc_id = j.at("doc_id").get<std::string>();
    p.sent_idx = j.at("sent_idx").get<int>();
    p.source = j.value("source", std::string("curated")) == "openie"
                   ? Source::OpenIE
                   : Source::Curated;
    if (p.verb.empty())
      throw std::runtime_error("predicate line " + std::to_string(lineno) +
                               ": empty verb");
    if (to_lower(p.subj_cui) == to_lower(p.obj_cui))
      throw std::runtime_error("predicate line " + std::to_string(lineno) +
                               ": subject equals object");
    out.push_back(std::move(p));
  }
  return out;
}

void save_predicates(const std::string& path, const std::vector<Predicate>& preds) {
  std::ostringstream out;
  for (const auto& p : preds) {
    json j;
    j["subj_cui"] = p.subj_cui;
    j["subj_types"] = p.subj_types;
    j["verb"] = p.verb;
    j["obj_cui"] = p.obj_cui;
    j["obj_types"] = p.obj_types;
    j["doc_id"] = p.doc_id;
    j["sent_idx"] = p.sent_idx;
    j["source"] = p.source == Source::OpenIE ? "openie" : "curated";
    out << j.dump() << '\n';
  }
  write_text_file(path, out.str());
}

}  // namespace hypgen::predicates
