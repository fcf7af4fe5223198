#include "hypgen/validation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "json.hpp"

namespace hypgen::validation {

using nlohmann::json;

// ---------------------------------------------------------------------------
// protocol

std::vector<ValidationSample> extract_positive_pairs(
    const std::vector<predicates::Predicate>& holdout,
    const std::vector<predicates::Predicate>& training, int min_mentions) {
  std::set<std::pair<std::string, std::string>> training_pairs;
  for (const auto& p : training)
    training_pairs.emplace(to_lower(p.subj_cui), to_lower(p.obj_cui));

  std::map<std::pair<std::string, std::string>, int> mentions;
  std::map<std::pair<std::string, std::string>, Subdomain> subdomains;
  for (const auto& p : holdout) {
    auto key = std::make_pair(to_lower(p.subj_cui), to_lower(p.obj_cui));
    ++mentions[key];
    if (!subdomains.count(key)) {
      if (p.subj_types.empty() || p.obj_types.empty())
        throw std::invalid_argument("holdout predicate without semantic types");
      subdomains[key] = {p.subj_types.front(), p.obj_types.front()};
    }
  }

  std::vector<ValidationSample> out;
  for (const auto& [key, count] : mentions) {
    if (count < min_mentions) continue;
    if (training_pairs.count(key)) continue;
    ValidationSample s;
    s.subj_cui = key.first;
    s.obj_cui = key.second;
    s.positive = true;
    s.subdomain = subdomains[key];
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<ValidationSample> generate_negatives(
    const std::vector<ValidationSample>& positives, const TermPool& pool, int ratio,
    const std::set<std::pair<std::string, std::string>>& known_pairs, Rng& rng,
    bool* with_replacement) {
  if (ratio < 1) throw std::invalid_argument("generate_negatives: ratio must be >= 1");
  if (with_replacement) *with_replacement = false;
  std::vector<ValidationSample> out;
  for (const auto& pos : positives) {
    auto it = pool.find(pos.subdomain.second);
    if (it == pool.end()) continue;  // no same-type terms: no negatives
    std::vector<std::string> candidates;
    for (const auto& cand : it->second) {
      if (cand == pos.subj_cui || cand == pos.obj_cui) continue;
      // A known pair in either direction counts as published with this subject.
      if (known_pairs.count({pos.subj_cui, cand})) continue;
      if (known_pairs.count({cand, pos.subj_cui})) continue;
      candidates.push_back(cand);
    }
    auto emit = [&](const std::string& obj) {
      ValidationSample n;
      n.subj_cui = pos.subj_cui;
      n.obj_cui = obj;
      n.positive = false;
      n.subdomain = pos.subdomain;
      out.push_back(std::move(n));
    };
    if (candidates.empty()) continue;
    if (candidates.size() >= static_cast<std::size_t>(ratio)) {
      auto idx = rng.sample_indices(candidates.size(), static_cast<std::size_t>(ratio));
      for (std::size_t i : idx) emit(candidates[i]);
    } else {
      if (with_replacement) *with_replacement = true;
      for (int i = 0; i < ratio; ++i)
        emit(candidates[static_cast<std::size_t>(rng.bounded(candidates.size()))]);
    }
  }
  return out;
}

std::vector<Subdomain> top_subdomains(const std::vector<ValidationSample>& positives,
                                      std::size_t count) {
  std::map<Subdomain, std::size_t> counts;
  for (const auto& p : positives)
    if (p.positive) ++counts[p.subdomain];
  std::vector<std::pair<Subdomain, std::size_t>> items(counts.begin(), counts.end());
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<Subdomain> out;
  for (const auto& [sd, _] : items) {
    if (out.size() >= count) break;
    out.push_back(sd);
  }
  return out;
}

// ---------------------------------------------------------------------------
// metrics

namespace {

void check_sizes(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw std::invalid_argument("scores and labels differ in length");
  if (scores.empty()) throw std::invalid_argument("empty sample set");
}

// Sample ids sorted by descending score, ascending id on ties.
std::vector<std::size_t> ranking(const std::vector<double>& scores) {
  std::vector<std::size_t> ids(scores.size());
  std::iota(ids.begin(), ids.end(), 0);
  std::sort(ids.begin(), ids.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  return ids;
}

}  // namespace

double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_sizes(scores, labels);
  std::size_t n_pos = 0, n_neg = 0;
  for (int l : labels) (l ? n_pos : n_neg)++;
  if (n_pos == 0 || n_neg == 0)
    throw std::invalid_argument("roc_auc needs both classes");

  // Average ranks handle ties as half credit.
  std::vector<std::size_t> ids(scores.size());
  std::iota(ids.begin(), ids.end(), 0);
  std::sort(ids.begin(), ids.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(scores.size(), 0.0);
  std::size_t i = 0;
  while (i < ids.size()) {
    std::size_t j = i;
    while (j + 1 < ids.size() && scores[ids[j + 1]] == scores[ids[i]]) ++j;
    double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[ids[k]] = avg;
    i = j + 1;
  }
  double r_pos = 0.0;
  for (std::size_t k = 0; k < labels.size(); ++k)
    if (labels[k]) r_pos += rank[k];
  double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (r_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

double pr_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_sizes(scores, labels);
  std::size_t n_pos = 0;
  for (int l : labels) n_pos += l ? 1 : 0;
  if (n_pos == 0) throw std::invalid_argument("pr_auc needs at least one positive");
  auto ids = ranking(scores);
  double ap = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (labels[ids[i]]) {
      ++hits;
      ap += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  return ap / static_cast<double>(n_pos);
}

double precision_at_k(const std::vector<double>& scores,
                      const std::vector<int>& labels, std::size_t k,
                      bool* truncated) {
  check_sizes(scores, labels);
  if (k < 1) throw std::invalid_argument("precision_at_k: k must be >= 1");
  if (truncated) *truncated = k > scores.size();
  std::size_t eff_k = std::min(k, scores.size());
  auto ids = ranking(scores);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < eff_k; ++i) hits += labels[ids[i]] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(eff_k);
}

double ap_at_k(const std::vector<double>& scores, const std::vector<int>& labels,
               std::size_t k, bool* truncated) {
  check_sizes(scores, labels);
  if (k < 1) throw std::invalid_argument("ap_at_k: k must be >= 1");
  if (truncated) *truncated = k > scores.size();
  std::size_t eff_k = std::min(k, scores.size());
  std::size_t n_pos = 0;
  for (int l : labels) n_pos += l ? 1 : 0;
  if (n_pos == 0) throw std::invalid_argument("ap_at_k needs at least one positive");
  auto ids = ranking(scores);
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < eff_k; ++i) {
    if (labels[ids[i]]) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  return sum / static_cast<double>(std::min(eff_k, n_pos));
}

// ---------------------------------------------------------------------------
// reports

namespace {

std::string subdomain_name(const Subdomain& sd) { return sd.first + ":" + sd.second; }

json row_to_json(const MetricsRow& r) {
  json j;
  j["subdomain"] = {r.subdomain.first, r.subdomain.second};
  j["positives"] = r.positives;
  j["negatives"] = r.negatives;
  j["roc_auc"] = r.roc_auc;
  j["pr_auc"] = r.pr_auc;
  j["p_at_10"] = r.p_at_10;
  j["p_at_100"] = r.p_at_100;
  j["ap_at_10"] = r.ap_at_10;
  j["ap_at_100"] = r.ap_at_100;
  return j;
}

}  // namespace

std::string MetricsReport::to_json() const {
  json j;
  j["rows"] = json::array();
  for (const auto& r : rows) j["rows"].push_back(row_to_json(r));
  j["mean"] = row_to_json(mean);
  j["skipped_no_negatives"] = json::array();
  for (const auto& sd : skipped_no_negatives)
    j["skipped_no_negatives"].push_back(subdomain_name(sd));
  return j.dump(2) + "\n";
}

std::string MetricsReport::to_table() const {
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-14s %6s %6s %8s %8s %7s %7s %8s %8s\n",
                "subdomain", "pos", "neg", "ROC AUC", "PR AUC", "P.@10", "P.@100",
                "AP.@10", "AP.@100");
  out << buf;
  auto line = [&](const std::string& name, const MetricsRow& r) {
    std::snprintf(buf, sizeof(buf),
                  "%-14s %6zu %6zu %8.4f %8.4f %7.4f %7.4f %8.4f %8.4f\n",
                  name.c_str(), r.positives, r.negatives, r.roc_auc, r.pr_auc,
                  r.p_at_10, r.p_at_100, r.ap_at_10, r.ap_at_100);
    out << buf;
  };
  for (const auto& r : rows) line(subdomain_name(r.subdomain), r);
  line("Mean", mean);
  return out.str();
}

MetricsReport subdomain_report(const PairScorer& scorer,
                               const std::vector<ValidationSample>& positives,
                               const std::vector<ValidationSample>& negatives,
                               const std::vector<Subdomain>& subdomains) {
  std::map<Subdomain, std::vector<const ValidationSample*>> pos_by, neg_by;
  std::set<Subdomain> wanted(subdomains.begin(), subdomains.end());
  for (const auto& p : positives)
    if (wanted.count(p.subdomain)) pos_by[p.subdomain].push_back(&p);
  for (const auto& n : negatives)
    if (wanted.count(n.subdomain)) neg_by[n.subdomain].push_back(&n);

  MetricsReport report;
  std::vector<std::pair<Subdomain, std::size_t>> order;
  for (const auto& sd : subdomains) {
    auto it = pos_by.find(sd);
    if (it == pos_by.end() || it->second.empty()) continue;
    order.emplace_back(sd, it->second.size());
  }
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  for (const auto& [sd, n_pos] : order) {
    const auto& neg = neg_by[sd];
    if (neg.empty()) {
      report.skipped_no_negatives.push_back(sd);
      continue;
    }
    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto* s : pos_by[sd]) {
      scores.push_back(s->score ? *s->score : scorer(*s));
      labels.push_back(1);
    }
    for (const auto* s : neg) {
      scores.push_back(s->score ? *s->score : scorer(*s));
      labels.push_back(0);
    }
    MetricsRow row;
    row.subdomain = sd;
    row.positives = n_pos;
    row.negatives = neg.size();
    row.roc_auc = roc_auc(scores, labels);
    row.pr_auc = pr_auc(scores, labels);
    row.p_at_10 = precision_at_k(scores, labels, 10);
    row.p_at_100 = precision_at_k(scores, labels, 100);
    row.ap_at_10 = ap_at_k(scores, labels, 10);
    row.ap_at_100 = ap_at_k(scores, labels, 100);
    report.rows.push_back(row);
  }

  if (!report.rows.empty()) {
    MetricsRow& m = report.mean;
    for (const auto& r : report.rows) {
      m.positives += r.positives;
      m.negatives += r.negatives;
      m.roc_auc += r.roc_auc;
      m.pr_auc += r.pr_auc;
      m.p_at_10 += r.p_at_10;
      m.p_at_100 += r.p_at_100;
      m.ap_at_10 += r.ap_at_10;
      m.ap_at_100 += r.ap_at_100;
    }
    double n = static_cast<double>(report.rows.size());
    m.roc_auc /= n;
    m.pr_auc /= n;
    m.p_at_10 /= n;
    m.p_at_100 /= n;
    m.ap_at_10 /= n;
    m.ap_at_100 /= n;
  }
  return report;
}

// ---------------------------------------------------------------------------
// case study

CaseStudyResult case_study(const CaseScorer& scorer, const std::string& subj_cui,
                           const std::string& obj_cui,
                           const std::vector<std::string>& object_pool, int ratio,
                           int repeats, std::uint64_t seed) {
  if (ratio < 1 || repeats < 1)
    throw std::invalid_argument("case_study: ratio and repeats must be >= 1");
  std::vector<std::string> pool;
  for (const auto& t : object_pool)
    if (t != subj_cui && t != obj_cui) pool.push_back(t);
  if (pool.size() < static_cast<std::size_t>(ratio))
    throw std::invalid_argument("case_study: object pool smaller than ratio");

  double sum = 0.0, sum_sq = 0.0;
  for (int r = 0; r < repeats; ++r) {
    Rng rng(derive_seed(seed, "case-study", static_cast<std::uint64_t>(r)));
    double pos = scorer(subj_cui, obj_cui, rng);
    auto idx = rng.sample_indices(pool.size(), static_cast<std::size_t>(ratio));
    int higher = 0;
    for (std::size_t i : idx)
      if (scorer(subj_cui, pool[i], rng) > pos) ++higher;
    double percentile =
        100.0 * static_cast<double>(1 + higher) / static_cast<double>(ratio + 1);
    sum += percentile;
    sum_sq += percentile * percentile;
  }
  double n = static_cast<double>(repeats);
  CaseStudyResult out;
  out.mean_percentile = sum / n;
  out.std_percentile = std::sqrt(std::max(0.0, sum_sq / n - out.mean_percentile *
                                                               out.mean_percentile));
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "top %.4f percent (std %.4f over %d repeats, 1:%d ratio)",
                out.mean_percentile, out.std_percentile, repeats, ratio);
  out.report = buf;
  return out;
}

// ---------------------------------------------------------------------------
// synthetic corpus

namespace {

const char* kSyllables[] = {"ba", "re", "mi", "to", "ka", "lu", "ne",
                            "so", "vi", "da", "po", "fe", "gu", "ri",
                            "ta", "mo", "zu", "le", "ha", "ni"};
const char* kSecondWords[] = {"factor", "complex", "agent", "pathway"};
const char* kVerbs[] = {"activates", "inhibits", "modulates", "binds"};
const char* kFillers[] = {"cells",    "tissue",  "assay",   "model",
                          "levels",   "samples", "cohort",  "culture",
                          "baseline", "profile", "subject", "series"};

std::string term_surface(int t) {
  std::string first = std::string(kSyllables[t % 20]) + kSyllables[(t / 20) % 20] +
                      kSyllables[(t / 400) % 20];
  if (t % 3 == 0) return first + " " + kSecondWords[t % 4];
  return first;
}

std::string term_cui(int t) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "C%07d", t + 1);
  return buf;
}

std::string term_type(int t) { return t % 2 == 0 ? "tpa" : "tpb"; }

struct DocDraft {
  std::string doc_id;
  Date date;
  int home = 0;
  bool train = false;
  std::vector<std::string> sentences;           // title at index 0
  std::vector<std::vector<int>> sentence_terms; // term ids per sentence
  std::vector<std::string> mesh;
};

}  // namespace

SyntheticCorpus generate_synthetic_corpus(const std::string& out_dir,
                                          const SyntheticConfig& cfg) {
  if (cfg.n_communities < 2 || cfg.n_terms % cfg.n_communities != 0)
    throw std::invalid_argument(
        "synthetic corpus: n_terms must divide evenly into >= 2 communities");
  int per_comm = cfg.n_terms / cfg.n_communities;
  if (per_comm < 6 || cfg.n_docs < 10)
    throw std::invalid_argument("synthetic corpus: degenerate sizes");

  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  Rng rng(derive_seed(cfg.seed, "synthetic"));

  auto community_of = [&](int t) { return t / per_comm; };

  // Reserved pairs: within-community pairs planted only after the cut, and
  // cross-community pairs that never co-occur at all.
  std::set<std::pair<int, int>> forbidden;  // unordered, stored (lo, hi)
  std::vector<std::pair<int, int>> within_pairs, cross_pairs;
  auto forbid = [&](int a, int b) {
    forbidden.emplace(std::min(a, b), std::max(a, b));
  };
  // Never reserve more than an eighth of a community's pairs, so enough
  // co-occurrence structure remains to learn from.
  int per_comm_pairs = per_comm * (per_comm - 1) / 2;
  int reserve = std::max(1, std::min(cfg.heldout_pairs_per_community,
                                     per_comm_pairs / 8));
  for (int c = 0; c < cfg.n_communities; ++c) {
    int added = 0;
    while (added < reserve) {
      int a = c * per_comm + static_cast<int>(rng.bounded(per_comm));
      int b = c * per_comm + static_cast<int>(rng.bounded(per_comm));
      if (a == b) continue;
      auto key = std::make_pair(std::min(a, b), std::max(a, b));
      if (forbidden.count(key)) continue;
      forbid(a, b);
      within_pairs.emplace_back(a, b);
      ++added;
    }
  }
  int cross_needed = static_cast<int>(within_pairs.size());
  while (static_cast<int>(cross_pairs.size()) < cross_needed) {
    int a = static_cast<int>(rng.bounded(cfg.n_terms));
    int b = static_cast<int>(rng.bounded(cfg.n_terms));
    if (a == b || community_of(a) == community_of(b)) continue;
    auto key = std::make_pair(std::min(a, b), std::max(a, b));
    if (forbidden.count(key)) continue;
    forbid(a, b);
    cross_pairs.emplace_back(a, b);
  }

  int n_train = static_cast<int>(std::llround(cfg.train_fraction * cfg.n_docs));
  n_train = std::clamp(n_train, 1, cfg.n_docs - 1);
  Date cut{2020, 10, 28};
  long cut_serial = cut.serial();

  auto draw_terms = [&](int home, std::size_t want) {
    std::vector<int> terms;
    for (int tries = 0; tries < 200 && terms.size() < want; ++tries) {
      int comm = home;
      if (rng.next_double() >= cfg.home_probability) {
        int other = static_cast<int>(rng.bounded(cfg.n_communities - 1));
        comm = other >= home ? other + 1 : other;
      }
      int t = comm * per_comm + static_cast<int>(rng.bounded(per_comm));
      bool clash = false;
      for (int u : terms) {
        if (u == t) clash = true;
        auto key = std::make_pair(std::min(t, u), std::max(t, u));
        if (forbidden.count(key)) clash = true;
      }
      if (!clash) terms.push_back(t);
    }
    return terms;
  };

  auto compose_sentence = [&](const std::vector<int>& terms, const char* verb) {
    std::string s = "The " + term_surface(terms[0]) + " " + verb + " the " +
                    term_surface(terms[1]);
    if (terms.size() > 2) s += " and the " + term_surface(terms[2]);
    s += " in " + std::string(kFillers[rng.bounded(12)]) + " " +
         kFillers[rng.bounded(12)] + ".";
    return s;
  };

  std::vector<DocDraft> docs;
  std::vector<bool> seen_in_train(static_cast<std::size_t>(cfg.n_terms), false);
  for (int i = 0; i < cfg.n_docs; ++i) {
    DocDraft d;
    char idbuf[16];
    std::snprintf(idbuf, sizeof(idbuf), "doc%05d", i);
    d.doc_id = idbuf;
    d.home = i % cfg.n_communities;
    d.train = i < n_train;
    if (d.train) {
      long span = 280;
      d.date = Date::from_serial(Date{2020, 1, 1}.serial() +
                                 (static_cast<long>(i) * span) / std::max(1, n_train));
    } else {
      long span = 80;
      long off = (static_cast<long>(i - n_train) * span) /
                 std::max(1, cfg.n_docs - n_train);
      d.date = Date::from_serial(cut_serial + 1 + off);
    }

    // Title mentions two home terms.
    auto title_terms = draw_terms(d.home, 2);
    std::string title = "Observations on " + term_surface(title_terms[0]);
    if (title_terms.size() > 1) title += " and " + term_surface(title_terms[1]);
    title += ".";
    d.sentences.push_back(title);
    d.sentence_terms.push_back(title_terms);

    int body_n = 4 + static_cast<int>(rng.bounded(3));
    for (int s = 0; s < body_n; ++s) {
      std::size_t want = 2 + rng.bounded(2);
      auto terms = draw_terms(d.home, want);
      if (terms.size() < 2) continue;
      const char* verb = kVerbs[rng.bounded(4)];
      d.sentences.push_back(compose_sentence(terms, verb));
      d.sentence_terms.push_back(terms);
    }

    if (i % 2 == 0) {
      int t = d.home * per_comm + static_cast<int>(rng.bounded(per_comm));
      d.mesh.push_back(term_cui(t));
    }
    if (d.train)
      for (const auto& terms : d.sentence_terms)
        for (int t : terms) seen_in_train[static_cast<std::size_t>(t)] = true;
    docs.push_back(std::move(d));
  }

  // Every term must occur before the cut so it has a trained embedding.
  for (int t = 0; t < cfg.n_terms; ++t) {
    if (seen_in_train[static_cast<std::size_t>(t)]) continue;
    int c = community_of(t);
    for (int tries = 0; tries < 200; ++tries) {
      int partner = c * per_comm + static_cast<int>(rng.bounded(per_comm));
      if (partner == t) continue;
      auto key = std::make_pair(std::min(t, partner), std::max(t, partner));
      if (forbidden.count(key)) continue;
      DocDraft& d = docs[static_cast<std::size_t>(
          static_cast<int>(rng.bounded(static_cast<std::uint64_t>(n_train))))];
      if (d.home != c) continue;
      const char* verb = kVerbs[rng.bounded(4)];
      d.sentences.push_back(compose_sentence({t, partner}, verb));
      d.sentence_terms.push_back({t, partner});
      seen_in_train[static_cast<std::size_t>(t)] = true;
      break;
    }
  }

  // Plant each within-community held-out pair in two post-cut documents.
  {
    std::vector<std::size_t> holdout_by_comm_cursor(
        static_cast<std::size_t>(cfg.n_communities), 0);
    std::vector<std::vector<std::size_t>> holdout_docs(
        static_cast<std::size_t>(cfg.n_communities));
    for (std::size_t di = 0; di < docs.size(); ++di)
      if (!docs[di].train)
        holdout_docs[static_cast<std::size_t>(docs[di].home)].push_back(di);
    for (const auto& [a, b] : within_pairs) {
      std::size_t c = static_cast<std::size_t>(community_of(a));
      if (holdout_docs[c].empty())
        throw std::runtime_error("synthetic corpus: no holdout docs for community");
      for (int rep = 0; rep < 2; ++rep) {
        std::size_t& cur = holdout_by_comm_cursor[c];
        DocDraft& d = docs[holdout_docs[c][cur % holdout_docs[c].size()]];
        ++cur;
        const char* verb = kVerbs[rng.bounded(4)];
        d.sentences.push_back(compose_sentence({a, b}, verb));
        d.sentence_terms.push_back({a, b});
      }
    }
  }

  // ---- emit files ----
  SyntheticCorpus out;
  out.cut_date = cut;
  out.corpus_path = out_dir + "/corpus.jsonl";
  out.lexicon_path = out_dir + "/lexicon.tsv";
  out.predicates_path = out_dir + "/predicates.jsonl";
  out.extractions_path = out_dir + "/extractions.jsonl";
  out.semnet_path = out_dir + "/semnet.tsv";
  out.heldout_path = out_dir + "/heldout_pairs.tsv";

  {
    std::ostringstream corpus;
    for (const auto& d : docs) {
      json j;
      j["doc_id"] = d.doc_id;
      j["date"] = d.date.to_string();
      j["title"] = d.sentences.front();
      std::string abstract;
      for (std::size_t s = 1; s < d.sentences.size(); ++s) {
        if (s > 1) abstract += " ";
        abstract += d.sentences[s];
      }
      j["abstract"] = abstract;
      j["language"] = "en";
      j["mesh_terms"] = d.mesh;
      corpus << j.dump() << '\n';
    }
    write_text_file(out.corpus_path, corpus.str());
  }

  {
    std::ostringstream lex;
    for (int t = 0; t < cfg.n_terms; ++t) {
      std::string surface = term_surface(t);
      std::string name = surface;
      name[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(name[0])));
      lex << surface << '\t' << term_cui(t) << '\t' << term_type(t) << '\t' << name
          << '\n';
    }
    write_text_file(out.lexicon_path, lex.str());
  }

  {
    std::vector<predicates::Predicate> preds;
    for (const auto& d : docs)
      for (std::size_t s = 0; s < d.sentence_terms.size(); ++s) {
        const auto& terms = d.sentence_terms[s];
        std::string verb = "relates";
        for (const auto& tok : corpus::tokenize(d.sentences[s])) {
          std::string lt = to_lower(tok.text);
          for (const char* v : kVerbs)
            if (lt == v) verb = v;
        }
        for (std::size_t i = 0; i < terms.size(); ++i)
          for (std::size_t j = i + 1; j < terms.size(); ++j) {
            predicates::Predicate p;
            p.subj_cui = term_cui(terms[i]);
            p.subj_types = {term_type(terms[i])};
            p.verb = verb;
            p.obj_cui = term_cui(terms[j]);
            p.obj_types = {term_type(terms[j])};
            p.doc_id = d.doc_id;
            p.sent_idx = static_cast<int>(s);
            p.source = predicates::Source::Curated;
            preds.push_back(std::move(p));
          }
      }
    predicates::save_predicates(out.predicates_path, preds);
  }

  {
    // Open-IE style extractions for a slice of sentences, plus a few noise
    // records that exercise the skip paths.
    std::ostringstream ext;
    int emitted = 0;
    for (std::size_t di = 0; di < docs.size(); di += 2) {
      const auto& d = docs[di];
      for (std::size_t s = 0; s < d.sentence_terms.size(); ++s) {
        const auto& terms = d.sentence_terms[s];
        if (terms.size() < 2) continue;
        std::string verb;
        auto tokens = corpus::tokenize(d.sentences[s]);
        for (const auto& tok : tokens) {
          std::string lt = to_lower(tok.text);
          for (const char* v : kVerbs)
            if (lt == v) verb = v;
        }
        if (verb.empty()) continue;
        json j;
        j["doc_id"] = d.doc_id;
        j["sent_idx"] = static_cast<int>(s);
        j["arg0"] = term_surface(terms[0]);
        j["verb"] = verb;
        j["arg1"] = term_surface(terms[1]);
        ext << j.dump() << '\n';
        ++emitted;
      }
    }
    // Noise: malformed line, unknown document, unalignable argument.
    ext << "{\"doc_id\": \"doc00000\", \"sent_idx\": 0}" << '\n';
    ext << R"({"doc_id":"nodoc","sent_idx":0,"arg0":"x","verb":"binds","arg1":"y"})"
        << '\n';
    if (!docs.empty() && docs[0].sentence_terms[0].size() >= 2) {
      json j;
      j["doc_id"] = docs[0].doc_id;
      j["sent_idx"] = 0;
      j["arg0"] = "Observations";
      j["verb"] = "on";
      j["arg1"] = "Observations";
      ext << j.dump() << '\n';
    }
    write_text_file(out.extractions_path, ext.str());
  }

  {
    std::ostringstream net;
    net << "REL\ttpa\ttpa\n";
    net << "REL\ttpa\ttgen\n";
    net << "REL\ttpb\ttpb\n";
    net << "ISA\ttpb\ttgen\n";
    write_text_file(out.semnet_path, net.str());
  }

  {
    std::ostringstream held;
    for (const auto& [a, b] : within_pairs)
      held << term_cui(a) << '\t' << term_cui(b) << "\t1\n";
    for (const auto& [a, b] : cross_pairs)
      held << term_cui(a) << '\t' << term_cui(b) << "\t0\n";
    write_text_file(out.heldout_path, held.str());
  }

  return out;
}

}  // namespace hypgen::validation
