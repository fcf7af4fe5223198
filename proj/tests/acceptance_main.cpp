// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Heavier end-to-end checks run on deterministic synthetic corpora
// generated into ./acceptance_tmp.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <vector>

#include "hypgen/corpus.hpp"
#include "hypgen/embedding.hpp"
#include "hypgen/graph.hpp"
#include "hypgen/pipeline.hpp"
#include "hypgen/predicates.hpp"
#include "hypgen/ranker.hpp"
#include "hypgen/util.hpp"
#include "hypgen/validation.hpp"
#include "json.hpp"
#include "oracles.hpp"

using namespace hypgen;
namespace fs = std::filesystem;

namespace {

struct Criterion {
  int id;
  std::string summary;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

std::vector<Criterion> results;
int failures = 0;

class Check {
 public:
  Check(int id, std::string summary) : c_{id, std::move(summary)} {}
  void fail(const std::string& why) {
    ok_ = false;
    if (c_.detail.empty()) c_.detail = why;
  }
  void require(bool cond, const std::string& why) {
    if (!cond) fail(why);
  }
  void finish(double seconds) {
    c_.passed = ok_;
    c_.seconds = seconds;
    if (!ok_) ++failures;
    results.push_back(c_);
  }

 private:
  Criterion c_;
  bool ok_ = true;
};

double now_run(const std::function<void(Check&)>& body, Check& check) {
  auto start = std::chrono::steady_clock::now();
  try {
    body(check);
  } catch (const std::exception& e) {
    check.fail(std::string("exception: ") + e.what());
  }
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
      .count();
}

void run(int id, const std::string& summary,
         const std::function<void(Check&)>& body) {
  Check check(id, summary);
  double secs = now_run(body, check);
  check.finish(secs);
}

void random_score_set(Rng& rng, std::vector<double>& scores,
                      std::vector<int>& labels, bool ties) {
  std::size_t n = 3 + rng.bounded(50);
  scores.clear();
  labels.clear();
  bool any_pos = false, any_neg = false;
  for (std::size_t i = 0; i < n; ++i) {
    scores.push_back(ties ? std::floor(rng.uniform(0, 8)) / 7.0 : rng.next_double());
    labels.push_back(rng.bounded(2) ? 1 : 0);
    (labels.back() ? any_pos : any_neg) = true;
  }
  if (!any_pos) labels[0] = 1;
  if (!any_neg) labels[n - 1] = 0;
}

// ---------------------------------------------------------------------------
// fixtures

constexpr const char* kTmp = "acceptance_tmp";

pipeline::PipelineConfig fixture_config(const validation::SyntheticCorpus& files,
                                        const std::string& work_dir,
                                        std::uint64_t seed) {
  pipeline::PipelineConfig cfg;
  cfg.corpus_path = files.corpus_path;
  cfg.lexicon_path = files.lexicon_path;
  cfg.predicates_path = files.predicates_path;
  cfg.extractions_path = files.extractions_path;
  cfg.semnet_path = files.semnet_path;
  cfg.work_dir = work_dir;
  cfg.cut_date = files.cut_date;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

// ---------------------------------------------------------------------------

int main() {
  fs::remove_all(kTmp);
  fs::create_directories(kTmp);

  // Criterion 5 artifacts are shared by criteria 9 and 10.
  validation::SyntheticCorpus planted_files;
  pipeline::PipelineConfig planted_cfg;
  bool planted_ready = false;

  run(1, "metric oracle suite: ROC/PR/P@k/AP@k vs brute force on 1,000 sets",
      [&](Check& c) {
        auto start = std::chrono::steady_clock::now();
        // frozen hand cases
        c.require(std::abs(validation::roc_auc({0.8, 0.4, 0.6, 0.2}, {1, 1, 0, 0}) -
                           0.75) < 1e-12,
                  "ROC hand case 0.75");
        c.require(std::abs(validation::ap_at_k({0.9, 0.8, 0.7, 0.6}, {1, 0, 1, 0}, 4) -
                           (1.0 + 2.0 / 3.0) / 2.0) < 1e-12,
                  "AP@4 hand case 0.8333");
        Rng rng(20240517);
        std::vector<double> scores;
        std::vector<int> labels;
        for (int i = 0; i < 1000; ++i) {
          random_score_set(rng, scores, labels, i % 2 == 0);
          double lib_roc = validation::roc_auc(scores, labels);
          double ora_roc = oracles::roc_auc(scores, labels);
          if (std::abs(lib_roc - ora_roc) > 1e-9) {
            c.fail("roc mismatch at instance " + std::to_string(i));
            break;
          }
          double lib_pr = validation::pr_auc(scores, labels);
          double ora_pr = oracles::pr_auc(scores, labels);
          if (std::abs(lib_pr - ora_pr) > 1e-9) {
            c.fail("pr mismatch at instance " + std::to_string(i));
            break;
          }
          std::size_t k = 1 + rng.bounded(scores.size());
          if (validation::precision_at_k(scores, labels, k) !=
              oracles::precision_at_k(scores, labels, k)) {
            c.fail("p@k mismatch at instance " + std::to_string(i));
            break;
          }
          if (std::abs(validation::ap_at_k(scores, labels, k) -
                       oracles::ap_at_k(scores, labels, k)) > 1e-9) {
            c.fail("ap@k mismatch at instance " + std::to_string(i));
            break;
          }
        }
        double secs = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - start)
                          .count();
        c.require(secs < 10.0, "runtime over 10 s");
      });

  run(2, "similarity and loss correctness: hand case 29, 1e-12 cross-check, ln 2",
      [&](Check& c) {
        std::vector<double> u{1, 2}, v{3, 4}, t{5, 6};
        c.require(std::abs(embedding::score_edge(u, v, t) - 29.0) < 1e-12,
                  "d=2 hand case");
        Rng rng(88);
        for (int i = 0; i < 1000; ++i) {
          std::size_t d = 2 + rng.bounded(24);
          std::vector<double> a(d), b(d), tr(d);
          for (auto* vec : {&a, &b, &tr})
            for (auto& x : *vec) x = rng.uniform(-3, 3);
          // independent straight-line restatement
          double ref = a[0] + b[0] + tr[0];
          for (std::size_t j = 1; j < d; ++j) ref += a[j] * (b[j] + tr[j]);
          if (std::abs(embedding::score_edge(a, b, tr) - ref) > 1e-12) {
            c.fail("similarity mismatch at instance " + std::to_string(i));
            break;
          }
        }
        std::vector<double> negs{0.37};
        c.require(std::abs(embedding::softmax_edge_loss(0.37, negs) - std::log(2.0)) <
                      1e-9,
                  "equal-logit loss is ln 2");
      });

  run(3, "gradient checks: embedding loss and ranker forward vs finite differences",
      [&](Check& c) {
        auto start = std::chrono::steady_clock::now();
        Rng rng(3141);
        int embed_instances = 25, ranker_instances = 25;

        for (int inst = 0; inst < embed_instances; ++inst) {
          std::size_t d = 2 + rng.bounded(7);
          std::size_t k = 1 + rng.bounded(5);
          std::vector<double> u(d), v(d), t(d);
          std::vector<std::vector<double>> negs(k, std::vector<double>(d));
          for (auto* vec : {&u, &v, &t})
            for (auto& x : *vec) x = rng.uniform(-1.5, 1.5);
          for (auto& n : negs)
            for (auto& x : n) x = rng.uniform(-1.5, 1.5);

          std::vector<std::span<const double>> views(negs.begin(), negs.end());
          embedding::EdgeLossGrads grads;
          embedding::edge_loss(u, v, views, t, grads);
          auto loss_now = [&]() {
            std::vector<std::span<const double>> vs(negs.begin(), negs.end());
            embedding::EdgeLossGrads scratch;
            return embedding::edge_loss(u, v, vs, t, scratch);
          };
          auto fd_check = [&](std::vector<double>& param,
                              const std::vector<double>& grad, const char* name) {
            for (std::size_t i = 0; i < d; ++i) {
              double orig = param[i];
              double h = 1e-5 * std::max(1.0, std::abs(orig));
              param[i] = orig + h;
              double up = loss_now();
              param[i] = orig - h;
              double dn = loss_now();
              param[i] = orig;
              double fd = (up - dn) / (2 * h);
              double denom = std::max({std::abs(fd), std::abs(grad[i]), 1e-6});
              if (std::abs(fd - grad[i]) / denom > 1e-4)
                c.fail(std::string("embedding grad mismatch on ") + name);
            }
          };
          fd_check(u, grads.du, "u");
          fd_check(v, grads.dv_pos, "v");
          fd_check(t, grads.dt, "t");
          for (std::size_t j = 0; j < k; ++j) fd_check(negs[j], grads.dv_negs[j], "neg");
        }

        for (int inst = 0; inst < ranker_instances; ++inst) {
          ranker::RankerConfig mcfg;
          mcfg.input_dim = 4 + rng.bounded(4);
          mcfg.hidden_dim = inst % 2 ? 16 : 8;
          mcfg.heads = 2;
          mcfg.layers = 2;
          mcfg.ff_dim = 8;
          ranker::RankerModel model(mcfg, 500 + inst);

          std::size_t L = 3 + rng.bounded(4);
          std::vector<std::vector<double>> inputs(L,
                                                  std::vector<double>(mcfg.input_dim));
          for (auto& vec : inputs)
            for (auto& x : vec) x = rng.uniform(-1, 1);
          std::vector<std::span<const double>> seq(inputs.begin(), inputs.end());

          ranker::RankerModel::Tape tape;
          model.forward_tape(seq, tape);
          auto grads = model.zero_grads();
          model.backward(tape, 1.0, grads);

          auto& params = model.parameters();
          for (std::size_t p = 0; p < params.size() && !false; ++p)
            for (std::size_t i = 0; i < params[p].a.size(); ++i) {
              double orig = params[p].a[i];
              double h = 1e-5 * std::max(1.0, std::abs(orig));
              params[p].a[i] = orig + h;
              double up = model.forward(seq);
              params[p].a[i] = orig - h;
              double dn = model.forward(seq);
              params[p].a[i] = orig;
              double fd = (up - dn) / (2 * h);
              double an = grads[p].a[i];
              double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
              if (std::abs(fd - an) / denom > 1e-4) {
                c.fail("ranker grad mismatch in " + model.parameter_names()[p]);
                i = params[p].a.size();
                p = params.size() - 1;
              }
            }
        }
        double secs = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - start)
                          .count();
        c.require(secs < 120.0, "runtime over 2 minutes");
      });

  run(4, "schema conformance, sequential-edge count and exact kNN on the fixture",
      [&](Check& c) {
        validation::SyntheticConfig scfg;
        scfg.seed = 33;
        scfg.n_docs = 30;
        scfg.n_terms = 16;
        scfg.n_communities = 2;
        auto files =
            validation::generate_synthetic_corpus(std::string(kTmp) + "/schema", scfg);

        corpus::ParseReport rep;
        auto records = corpus::parse_corpus_file(files.corpus_path, rep);
        auto lexicon = corpus::Lexicon::load(files.lexicon_path);
        std::vector<corpus::AnnotatedDoc> docs;
        for (const auto& r : records)
          docs.push_back({r.doc_id, r.date, corpus::annotate_record(r, lexicon)});
        corpus::NgramConfig ncfg;
        corpus::mine_ngrams(docs, ncfg);
        auto preds = predicates::load_predicates(files.predicates_path);

        graph::GraphBuildConfig gcfg;
        gcfg.knn.k = 6;
        gcfg.sentence_embed_dim = 24;
        gcfg.sentence_embed_seed = derive_seed(33, "sentence-embed");
        graph::GraphBuildReport report;
        auto g = graph::build_graph(docs, preds, gcfg, &report);

        for (auto [a, b] : g.edges())
          if (!graph::schema_allows(g.keys()[a][0], g.keys()[b][0])) {
            c.fail("edge outside the schema: " + g.keys()[a] + " -- " + g.keys()[b]);
            break;
          }

        std::size_t expected_sequential = 0;
        for (const auto& d : docs) expected_sequential += d.sentences.size() - 1;
        c.require(report.sequential_edges == expected_sequential,
                  "sequential edge count != sum(T_doc - 1)");

        // exact kNN equals the brute-force oracle
        auto vectors = graph::compute_sentence_vectors(
            docs, gcfg.sentence_embed_dim, gcfg.sentence_embed_seed);
        auto got = graph::knn_edges(vectors, gcfg.knn.k);
        std::set<std::pair<std::string, std::string>> expected;
        for (std::size_t q = 0; q < vectors.size(); ++q) {
          std::vector<std::pair<double, std::string>> sims;
          for (std::size_t o = 0; o < vectors.size(); ++o) {
            if (o == q) continue;
            double dot = 0;
            for (std::size_t dd = 0; dd < vectors[q].second.size(); ++dd)
              dot += vectors[q].second[dd] * vectors[o].second[dd];
            sims.emplace_back(dot, vectors[o].first);
          }
          std::sort(sims.begin(), sims.end(), [](const auto& x, const auto& y) {
            if (x.first != y.first) return x.first > y.first;
            return x.second < y.second;
          });
          std::size_t kk =
              std::min<std::size_t>(static_cast<std::size_t>(gcfg.knn.k), sims.size());
          for (std::size_t j = 0; j < kk; ++j)
            expected.emplace(std::min(vectors[q].first, sims[j].second),
                             std::max(vectors[q].first, sims[j].second));
        }
        c.require(std::set<std::pair<std::string, std::string>>(got.begin(),
                                                                got.end()) == expected,
                  "kNN edges differ from the brute-force oracle");
      });

  run(5,
      "planted-structure recovery: variant C, d=32, defaults, ROC AUC >= 0.80 in "
      "< 5 min",
      [&](Check& c) {
        auto start = std::chrono::steady_clock::now();
        validation::SyntheticConfig scfg;
        scfg.seed = 1;
        scfg.n_docs = 200;
        scfg.n_terms = 60;
        scfg.n_communities = 2;
        planted_files =
            validation::generate_synthetic_corpus(std::string(kTmp) + "/planted", scfg);
        planted_cfg =
            fixture_config(planted_files, std::string(kTmp) + "/planted/work", 1);
        planted_cfg.embed.dim = 32;  // everything else stays at defaults
        planted_cfg.check();

        std::ostringstream log;
        pipeline::run_pipeline(planted_cfg, false, log);
        planted_ready = true;

        double secs = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - start)
                          .count();
        c.require(secs < 300.0, "pipeline exceeded 5 minutes");

        pipeline::ArtifactPaths art(planted_cfg.work_dir);
        auto metrics = nlohmann::json::parse(read_text_file(art.metrics_json));
        double mean_roc = metrics["mean"]["roc_auc"].get<double>();
        c.require(mean_roc >= 0.80, "mean ROC AUC " + std::to_string(mean_roc) +
                                        " below 0.80");
      });

  run(6, "filter oracles: semnet vs declarative oracle, cocount hand case",
      [&](Check& c) {
        Rng rng(606);
        const std::vector<std::string> types{"t0", "t1", "t2", "t3", "t4", "t5"};
        for (int inst = 0; inst < 1000; ++inst) {
          predicates::SemanticTypeNet net;
          std::set<std::pair<std::string, std::string>> rels, isa;
          std::set<std::string> inventory(types.begin(), types.end());
          for (const auto& t : types) net.add_type(t);
          int n_rel = 1 + static_cast<int>(rng.bounded(5));
          for (int i = 0; i < n_rel; ++i) {
            const auto& a = types[rng.bounded(types.size())];
            const auto& b = types[rng.bounded(types.size())];
            net.add_relation(a, b);
            rels.emplace(a, b);
          }
          for (std::size_t ch = 0; ch + 1 < types.size(); ++ch)
            if (rng.bounded(3) == 0) {
              std::size_t par = ch + 1 + rng.bounded(types.size() - ch - 1);
              net.add_isa(types[ch], types[par]);
              isa.emplace(types[ch], types[par]);
            }
          predicates::Predicate p;
          p.subj_cui = "C1";
          p.obj_cui = "C2";
          p.verb = "v";
          p.doc_id = "d";
          p.subj_types = {types[rng.bounded(types.size())]};
          p.obj_types = {types[rng.bounded(types.size())]};
          if (rng.bounded(2)) p.subj_types.push_back(types[rng.bounded(types.size())]);
          if (predicates::semnet_filter(p, net) !=
              oracles::semnet_valid(p.subj_types, p.obj_types, rels, isa, inventory)) {
            c.fail("semnet disagreement at instance " + std::to_string(inst));
            break;
          }
        }

        // the hierarchy-generalization case
        predicates::SemanticTypeNet net;
        net.add_relation("phsu", "biof");
        net.add_isa("dsyn", "biof");
        predicates::Predicate p;
        p.subj_cui = "C1";
        p.obj_cui = "C2";
        p.verb = "treats";
        p.doc_id = "d";
        p.subj_types = {"phsu"};
        p.obj_types = {"dsyn"};
        c.require(predicates::semnet_filter(p, net),
                  "generalization case should be valid");

        predicates::TermCounts counts;
        counts.count["a"] = 100;
        counts.count["b"] = 100;
        counts.cocount[{"a", "b"}] = 10;
        c.require(std::abs(predicates::cocount_score(counts, "a", "b") - 0.1) < 1e-12,
                  "cocount hand case 0.1");
        c.require(predicates::cocount_score(counts, "a", "b") ==
                      predicates::cocount_score(counts, "b", "a"),
                  "cocount symmetry");
        predicates::Predicate q = p;
        q.subj_cui = "a";
        q.obj_cui = "b";
        c.require(predicates::cocount_filter({q}, counts, 0.05).size() == 1,
                  "kept at tau 0.05");
      });

  run(7, "case-study harness: strict rank percentile 100/501, std 0, top-percent",
      [&](Check& c) {
        std::vector<std::string> pool;
        for (int i = 0; i < 700; ++i) pool.push_back("noise" + std::to_string(i));
        validation::CaseScorer scorer = [](const std::string&, const std::string& obj,
                                           Rng&) {
          return obj == "planted" ? 0.99 : 0.2;
        };
        auto result = validation::case_study(scorer, "subject", "planted", pool, 500,
                                             100, 777);
        c.require(result.mean_percentile == 100.0 / 501.0,
                  "percentile must be exactly 100/501");
        c.require(result.std_percentile == 0.0, "std must be 0");
        c.require(std::abs(result.mean_percentile - 0.1996) < 1e-3,
                  "percentile approx 0.20%");
        c.require(result.report.find("top ") != std::string::npos &&
                      result.report.find("percent") != std::string::npos,
                  "report must say top X percent");
        c.require(result.report.find("100 repeats") != std::string::npos,
                  "report must mention the repeats");
      });

  run(8, "determinism: two pipeline runs produce byte-identical artifacts",
      [&](Check& c) {
        validation::SyntheticConfig scfg;
        scfg.seed = 7;
        scfg.n_docs = 40;
        scfg.n_terms = 20;
        scfg.n_communities = 2;
        auto files =
            validation::generate_synthetic_corpus(std::string(kTmp) + "/det", scfg);

        auto small = [&](const std::string& work) {
          auto cfg = fixture_config(files, work, 7);
          cfg.graph.knn_k = 8;
          cfg.embed.dim = 16;
          cfg.embed.epochs = 3;
          cfg.ranker_model.hidden_dim = 16;
          cfg.ranker_model.heads = 2;
          cfg.ranker_model.ff_dim = 16;
          cfg.ranker_train.epochs = 2;
          cfg.ranker_train.positives_per_batch = 16;
          return cfg;
        };
        std::ostringstream log;
        auto cfg1 = small(std::string(kTmp) + "/det/w1");
        auto cfg2 = small(std::string(kTmp) + "/det/w2");
        pipeline::run_pipeline(cfg1, false, log);
        pipeline::run_pipeline(cfg2, false, log);

        pipeline::ArtifactPaths a1(cfg1.work_dir), a2(cfg2.work_dir);
        for (auto pick : {&pipeline::ArtifactPaths::embeddings,
                          &pipeline::ArtifactPaths::ranker_ckpt,
                          &pipeline::ArtifactPaths::metrics_json,
                          &pipeline::ArtifactPaths::metrics_table}) {
          if (read_text_file(a1.*pick) != read_text_file(a2.*pick)) {
            c.fail("artifact differs: " + a1.*pick);
            break;
          }
        }
      });

  run(9, "validation hygiene: no training pairs, no under-mentioned pairs",
      [&](Check& c) {
        c.require(planted_ready, "criterion 5 artifacts unavailable");
        if (!planted_ready) return;
        pipeline::ArtifactPaths art(planted_cfg.work_dir);
        auto train = predicates::load_predicates(art.predicates_train);
        auto holdout = predicates::load_predicates(art.predicates_holdout);
        auto positives = validation::extract_positive_pairs(
            holdout, train, planted_cfg.validate.min_mentions);
        c.require(!positives.empty(), "no validation positives on the fixture");

        std::set<std::pair<std::string, std::string>> train_pairs;
        for (const auto& p : train)
          train_pairs.emplace(to_lower(p.subj_cui), to_lower(p.obj_cui));
        std::map<std::pair<std::string, std::string>, int> mentions;
        for (const auto& p : holdout)
          ++mentions[{to_lower(p.subj_cui), to_lower(p.obj_cui)}];

        for (const auto& pos : positives) {
          if (train_pairs.count({pos.subj_cui, pos.obj_cui})) {
            c.fail("positive pair present in training: " + pos.subj_cui + " -> " +
                   pos.obj_cui);
            break;
          }
          if (mentions[{pos.subj_cui, pos.obj_cui}] <
              planted_cfg.validate.min_mentions) {
            c.fail("positive pair mentioned fewer than twice: " + pos.subj_cui +
                   " -> " + pos.obj_cui);
            break;
          }
        }
      });

  run(10, "query throughput: 1,000 fixture queries in under 10 seconds",
      [&](Check& c) {
        c.require(planted_ready, "criterion 5 artifacts unavailable");
        if (!planted_ready) return;
        auto engine = pipeline::LoadedEngine::load(planted_cfg);

        std::vector<std::string> terms;
        for (const auto& key : engine.store.keys())
          if (key[0] == 'm') terms.push_back(key.substr(2));
        c.require(terms.size() >= 2, "fixture has too few terms");

        std::ostringstream requests;
        Rng rng(1001);
        for (int i = 0; i < 1000; ++i) {
          const auto& a = terms[rng.bounded(terms.size())];
          const auto& b = terms[rng.bounded(terms.size())];
          requests << nlohmann::json{{"a", a}, {"b", b}}.dump() << "\n";
        }
        std::istringstream in(requests.str());
        std::ostringstream out;
        auto start = std::chrono::steady_clock::now();
        int n = pipeline::query_loop(engine, in, out);
        double secs = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - start)
                          .count();
        c.require(n == 1000, "not all queries answered");
        std::size_t lines = 0;
        std::istringstream check_out(out.str());
        std::string line;
        while (std::getline(check_out, line)) ++lines;
        c.require(lines == 1000, "response count mismatch");
        c.require(secs < 10.0,
                  "throughput too low: " + std::to_string(secs) + " s for 1,000");
      });

  // ---- report ----
  std::printf("\n");
  for (const auto& r : results)
    std::printf("[%s] criterion %2d: %s (%.2f s)%s%s\n", r.passed ? "PASS" : "FAIL",
                r.id, r.summary.c_str(), r.seconds,
                r.detail.empty() ? "" : " -- ", r.detail.c_str());
  std::printf("\n%zu/%zu criteria passed\n", results.size() - failures,
              results.size());
  return failures == 0 ? 0 : 1;
}
