#include "hypgen/corpus.hpp"

#include <filesystem>

#include "doctest.h"
#include "json.hpp"

using namespace hypgen;
using namespace hypgen::corpus;

namespace {

Lexicon small_lexicon() {
  Lexicon lex;
  lex.add("digoxin overdose", "C0012123", {"inpo"}, "Digoxin overdose");
  lex.add("hemofiltration", "C0019054", {"topp"}, "Hemofiltration");
  lex.add("acute respiratory", "C0001111", {"dsyn"}, "Acute respiratory");
  lex.add("acute respiratory syndrome", "C0002222", {"dsyn"},
          "Acute respiratory syndrome");
  lex.add("covid", "C5203670", {"dsyn"}, "COVID");
  return lex;
}

std::string record_line(const std::string& id, const std::string& lang,
                        const std::string& title, const std::string& abstract) {
  nlohmann::json j;
  j["doc_id"] = id;
  j["date"] = "2020-05-01";
  j["title"] = title;
  j["abstract"] = abstract;
  j["language"] = lang;
  j["mesh_terms"] = nlohmann::json::array();
  return j.dump();
}

}  // namespace

TEST_CASE("parse_corpus keeps one valid English record") {
  ParseReport rep;
  auto recs = parse_corpus(record_line("d1", "en", "T", "A."), rep);
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].doc_id == "d1");
  CHECK(rep.parsed == 1);
  CHECK(rep.excluded_non_english == 0);
}

TEST_CASE("parse_corpus excludes non-English records and counts them") {
  ParseReport rep;
  std::string text =
      record_line("d1", "fr", "T", "A.") + "\n" + record_line("d2", "en", "T", "A.");
  auto recs = parse_corpus(text, rep);
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].doc_id == "d2");
  CHECK(rep.excluded_non_english == 1);
}

TEST_CASE("parse_corpus rejects duplicate doc_ids naming the id") {
  ParseReport rep;
  std::string text =
      record_line("dup", "en", "T", "A.") + "\n" + record_line("dup", "en", "T", "B.");
  CHECK_THROWS_WITH_AS(parse_corpus(text, rep),
                       doctest::Contains("dup"), std::runtime_error);
}

TEST_CASE("parse_corpus rejects malformed lines with the line number") {
  ParseReport rep;
  std::string text = record_line("d1", "en", "T", "A.") + "\nnot json at all";
  CHECK_THROWS_WITH_AS(parse_corpus(text, rep), doctest::Contains("line 2"),
                       std::runtime_error);
}

TEST_CASE("parse_corpus skips records missing doc_id or date and continues") {
  ParseReport rep;
  std::string text = std::string(R"({"date":"2020-01-01","language":"en"})") + "\n" +
                     R"({"doc_id":"d9","language":"en"})" + "\n" +
                     record_line("d1", "en", "T", "A.");
  auto recs = parse_corpus(text, rep);
  REQUIRE(recs.size() == 1);
  CHECK(rep.skipped_missing_fields == 2);
}

TEST_CASE("annotate_record: title plus two sentences gives indices 0,1,2") {
  CitationRecord r;
  r.doc_id = "d";
  r.date = *Date::parse("2020-01-01");
  r.title = "A";
  r.abstract = "B something. C something else.";
  r.language = "en";
  auto lex = small_lexicon();
  auto sents = annotate_record(r, lex);
  REQUIRE(sents.size() == 3);
  for (int i = 0; i < 3; ++i) CHECK(sents[i].sent_idx == i);
  CHECK(sents[0].text == "A");
}

TEST_CASE("annotate_record: lexicon surface becomes entity and coded term") {
  CitationRecord r;
  r.doc_id = "d";
  r.date = *Date::parse("2020-01-01");
  r.title = "Digoxin overdose treated by hemofiltration";
  r.abstract = "";
  r.language = "en";
  auto lex = small_lexicon();
  auto sents = annotate_record(r, lex);
  REQUIRE(sents.size() == 1);
  REQUIRE(sents[0].entities.size() == 2);
  CHECK(sents[0].entities[0].surface == "Digoxin overdose");
  REQUIRE(sents[0].coded_terms.size() == 2);
  CHECK(sents[0].coded_terms[0].cui == "C0012123");
  CHECK(sents[0].coded_terms[1].cui == "C0019054");
  // entity spans lie within the sentence text
  for (const auto& e : sents[0].entities) {
    CHECK(e.end <= sents[0].text.size());
    CHECK(sents[0].text.substr(e.begin, e.end - e.begin) == e.surface);
  }
}

TEST_CASE("annotate_record: overlapping lexicon entries take the longest match") {
  // Enumerating matches on the 3-token string by hand: both "acute
  // respiratory" and "acute respiratory syndrome" start at token 0; only the
  // longer may be emitted.
  CitationRecord r;
  r.doc_id = "d";
  r.date = *Date::parse("2020-01-01");
  r.title = "acute respiratory syndrome";
  r.abstract = "";
  r.language = "en";
  auto lex = small_lexicon();
  auto sents = annotate_record(r, lex);
  REQUIRE(sents[0].entities.size() == 1);
  CHECK(sents[0].entities[0].surface == "acute respiratory syndrome");
  REQUIRE(sents[0].coded_terms.size() == 1);
  CHECK(sents[0].coded_terms[0].cui == "C0002222");
}

TEST_CASE("annotate_record: empty abstract yields the title-only list") {
  CitationRecord r;
  r.doc_id = "d";
  r.date = *Date::parse("2020-01-01");
  r.title = "Only a title";
  r.abstract = "";
  r.language = "en";
  auto lex = small_lexicon();
  auto sents = annotate_record(r, lex);
  REQUIRE(sents.size() == 1);
  CHECK(sents[0].sent_idx == 0);
}

TEST_CASE("annotate_record: mesh terms attach to every sentence, unknown dropped") {
  CitationRecord r;
  r.doc_id = "d";
  r.date = *Date::parse("2020-01-01");
  r.title = "T";
  r.abstract = "First one. Second one.";
  r.language = "en";
  r.mesh_terms = {"C5203670", "C9999999"};  // second unknown to the lexicon
  auto lex = small_lexicon();
  auto sents = annotate_record(r, lex);
  REQUIRE(sents.size() == 3);
  for (const auto& s : sents) {
    REQUIRE(s.coded_terms.size() == 1);
    CHECK(s.coded_terms[0].cui == "C5203670");
    CHECK(lex.types_of(s.coded_terms[0].cui) != nullptr);
  }
}

TEST_CASE("annotation is a pure function of record and lexicon") {
  CitationRecord r;
  r.doc_id = "d";
  r.date = *Date::parse("2020-01-01");
  r.title = "Digoxin overdose story";
  r.abstract = "Something about covid. And acute respiratory syndrome.";
  r.language = "en";
  auto lex = small_lexicon();
  std::vector<AnnotatedDoc> one{{r.doc_id, r.date, annotate_record(r, lex)}};
  std::vector<AnnotatedDoc> two{{r.doc_id, r.date, annotate_record(r, lex)}};
  std::filesystem::create_directories("test_tmp");
  save_annotated("test_tmp/ann1.jsonl", one);
  save_annotated("test_tmp/ann2.jsonl", two);
  CHECK(read_text_file("test_tmp/ann1.jsonl") == read_text_file("test_tmp/ann2.jsonl"));
}

TEST_CASE("lemma proxy strips a single suffix when the stem stays long") {
  CHECK(lemma_of("Running") == "runn");
  CHECK(lemma_of("studies") == "studi");
  CHECK(lemma_of("treated") == "treat");
  CHECK(lemma_of("cells") == "cell");
  CHECK(lemma_of("axes") == "axes");    // stems would be too short
  CHECK(lemma_of("sing") == "sing");
  CHECK(lemma_of("dose") == "dose");    // no matching suffix
}

TEST_CASE("sentence splitting needs terminator, space, uppercase") {
  auto s = split_sentences("First here. Second one? Third thing! all lowercase. Last");
  REQUIRE(s.size() == 4);
  CHECK(s[0] == "First here.");
  CHECK(s[1] == "Second one?");
  // "! all" does not split: lowercase follow
  CHECK(s[2] == "Third thing! all lowercase.");
  CHECK(s[3] == "Last");
}

namespace {

AnnotatedSentence lemma_sentence(const std::string& doc, int idx,
                                 std::vector<std::string> lemmas) {
  AnnotatedSentence s;
  s.doc_id = doc;
  s.sent_idx = idx;
  s.lemmas = std::move(lemmas);
  s.tokens = s.lemmas;
  return s;
}

}  // namespace

TEST_CASE("mine_ngrams: exhaustive enumeration of the 3-lemma sentence") {
  // "acute respiratory syndrome" twice with min_count 2: every contiguous
  // 2- and 3-gram qualifies.
  std::vector<AnnotatedSentence> sents{
      lemma_sentence("a", 0, {"acute", "respiratory", "syndrome"}),
      lemma_sentence("b", 0, {"acute", "respiratory", "syndrome"})};
  NgramConfig cfg;
  cfg.min_count = 2;
  auto vocab = mine_ngrams(sents, cfg);
  CHECK(vocab == std::set<std::string>{"acute_respiratory", "respiratory_syndrome",
                                       "acute_respiratory_syndrome"});
  CHECK(sents[0].ngrams == std::vector<std::string>{"acute_respiratory",
                                                    "respiratory_syndrome",
                                                    "acute_respiratory_syndrome"});
}

TEST_CASE("mine_ngrams: threshold above every count leaves the vocabulary empty") {
  std::vector<AnnotatedSentence> sents{
      lemma_sentence("a", 0, {"x", "y", "z"}),
      lemma_sentence("b", 0, {"x", "y", "z"})};
  NgramConfig cfg;
  cfg.min_count = 3;
  auto vocab = mine_ngrams(sents, cfg);
  CHECK(vocab.empty());
  CHECK(sents[0].ngrams.empty());
}

TEST_CASE("mine_ngrams: attached n-grams occur in their sentence") {
  std::vector<AnnotatedSentence> sents{
      lemma_sentence("a", 0, {"p", "q", "r", "p", "q"}),
      lemma_sentence("b", 0, {"p", "q", "z"}),
      lemma_sentence("c", 0, {"r", "p", "q"})};
  NgramConfig cfg;
  cfg.min_count = 2;
  auto vocab = mine_ngrams(sents, cfg);
  for (const auto& s : sents)
    for (const auto& g : s.ngrams) {
      CHECK(vocab.count(g) == 1);
      auto parts = split(g, '_');
      bool found = false;
      for (std::size_t i = 0; i + parts.size() <= s.lemmas.size(); ++i) {
        bool all = true;
        for (std::size_t k = 0; k < parts.size(); ++k)
          if (s.lemmas[i + k] != parts[k]) all = false;
        if (all) found = true;
      }
      CHECK(found);
    }
}

TEST_CASE("embed_sentence: determinism and unit norm") {
  std::vector<std::string> tokens{"alpha", "beta", "gamma", "beta"};
  auto v1 = embed_sentence(tokens, 16, 99);
  auto v2 = embed_sentence(tokens, 16, 99);
  CHECK(v1 == v2);  // bitwise
  double norm = 0;
  for (double x : v1) norm += x * x;
  CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-9);
}

TEST_CASE("embed_sentence: repeated token scales then normalizes away") {
  // One token hashes to a single signed coordinate; the TF weight doubles it
  // and normalization removes the doubling.
  auto v1 = embed_sentence({"a"}, 8, 5);
  auto v2 = embed_sentence({"a", "a"}, 8, 5);
  int nonzero = 0;
  for (std::size_t i = 0; i < v1.size(); ++i)
    if (v1[i] != 0.0) {
      ++nonzero;
      CHECK(std::abs(std::abs(v1[i]) - 1.0) < 1e-12);
    }
  CHECK(nonzero == 1);
  for (std::size_t i = 0; i < v1.size(); ++i) CHECK(v1[i] == doctest::Approx(v2[i]));
}

TEST_CASE("embed_sentence: empty tokens give the flagged sentinel") {
  bool flag = false;
  auto v = embed_sentence({}, 8, 1, &flag);
  CHECK(flag);
  CHECK(v[0] == 1.0);
  for (std::size_t i = 1; i < v.size(); ++i) CHECK(v[i] == 0.0);
}

TEST_CASE("split_by_date: boundary goes to training") {
  CitationRecord a, b, c;
  a.doc_id = "a";
  a.date = *Date::parse("2020-10-01");
  b.doc_id = "b";
  b.date = *Date::parse("2020-11-01");
  c.doc_id = "c";
  c.date = *Date::parse("2020-10-28");
  Date cutoff = *Date::parse("2020-10-28");

  std::vector<CitationRecord> train, holdout;
  split_by_date(std::vector<CitationRecord>{a, b}, cutoff, train, holdout);
  CHECK(train.size() == 1);
  CHECK(holdout.size() == 1);

  train.clear();
  holdout.clear();
  split_by_date(std::vector<CitationRecord>{a, c}, cutoff, train, holdout);
  CHECK(train.size() == 2);  // exact-cutoff record trains
  CHECK(holdout.empty());

  train.clear();
  holdout.clear();
  split_by_date(std::vector<CitationRecord>{a}, cutoff, train, holdout);
  CHECK(holdout.empty());
}

TEST_CASE("pre-supplied sentences override the annotator") {
  nlohmann::json j;
  j["doc_id"] = "p1";
  j["date"] = "2020-01-01";
  j["language"] = "en";
  j["title"] = "ignored";
  j["abstract"] = "ignored. Ignored again.";
  j["sentences"] = nlohmann::json::array(
      {{{"sent_idx", 0},
        {"text", "Provided."},
        {"tokens", {"Provided"}},
        {"lemmas", {"provid"}},
        {"coded_terms", nlohmann::json::array({{{"cui", "C1"}, {"types", {"dsyn"}}}})}}});
  ParseReport rep;
  auto recs = parse_corpus(j.dump(), rep);
  REQUIRE(recs.size() == 1);
  auto lex = small_lexicon();
  auto sents = annotate_record(recs[0], lex);
  REQUIRE(sents.size() == 1);
  CHECK(sents[0].text == "Provided.");
  CHECK(sents[0].coded_terms.size() == 1);
}
