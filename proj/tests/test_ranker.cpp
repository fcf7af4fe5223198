#include "hypgen/ranker.hpp"

#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "fixtures.hpp"

using namespace hypgen;
using namespace hypgen::ranker;

namespace {

RankerConfig tiny_config(std::size_t input_dim = 6, std::size_t hidden = 8,
                         std::size_t heads = 2, std::size_t layers = 2,
                         std::size_t ff = 12) {
  RankerConfig cfg;
  cfg.input_dim = input_dim;
  cfg.hidden_dim = hidden;
  cfg.heads = heads;
  cfg.layers = layers;
  cfg.ff_dim = ff;
  return cfg;
}

std::vector<std::vector<double>> random_inputs(Rng& rng, std::size_t n,
                                               std::size_t d) {
  std::vector<std::vector<double>> out(n);
  for (auto& v : out) {
    v.resize(d);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  }
  return out;
}

std::vector<std::span<const double>> views(const std::vector<std::vector<double>>& v) {
  return {v.begin(), v.end()};
}

}  // namespace

TEST_CASE("forward: all-zero weights squash to one half") {
  RankerModel model(tiny_config(), 1);
  for (auto& p : model.parameters())
    for (auto& x : p.a) x = 0.0;
  Rng rng(2);
  auto inputs = random_inputs(rng, 4, 6);
  CHECK(model.forward(views(inputs)) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("forward: outputs stay strictly inside the unit interval") {
  Rng rng(3);
  for (int inst = 0; inst < 10; ++inst) {
    RankerModel model(tiny_config(), 100 + inst);
    auto inputs = random_inputs(rng, 2 + rng.bounded(8), 6);
    double out = model.forward(views(inputs));
    CHECK(out > 0.0);
    CHECK(out < 1.0);
  }
}

TEST_CASE("forward: permuting the neighborhood leaves the score unchanged") {
  RankerModel model(tiny_config(), 7);
  Rng rng(4);
  auto inputs = random_inputs(rng, 8, 6);
  double base = model.forward(views(inputs));
  // keep the two term vectors in front, permute the neighborhood part
  auto permuted = inputs;
  std::swap(permuted[2], permuted[6]);
  std::swap(permuted[3], permuted[5]);
  std::rotate(permuted.begin() + 2, permuted.begin() + 4, permuted.end());
  CHECK(std::abs(model.forward(views(permuted)) - base) <= 1e-6);
}

TEST_CASE("forward rejects dimension mismatches and short sequences") {
  RankerModel model(tiny_config(), 1);
  Rng rng(5);
  auto bad = random_inputs(rng, 3, 5);
  CHECK_THROWS_AS(model.forward(views(bad)), std::invalid_argument);
  auto one = random_inputs(rng, 1, 6);
  CHECK_THROWS_AS(model.forward(views(one)), std::invalid_argument);
}

TEST_CASE("layer_norm: per-position mean zero and unit variance before affine") {
  Rng rng(6);
  Mat x(5, 16);
  for (auto& v : x.a) v = rng.uniform(-3.0, 3.0);
  std::vector<double> gain(16, 2.0), bias(16, -1.0);
  Mat normalized;
  layer_norm(x, gain, bias, &normalized);
  for (std::size_t i = 0; i < normalized.rows; ++i) {
    double mu = 0.0, var = 0.0;
    for (std::size_t j = 0; j < normalized.cols; ++j) mu += normalized.at(i, j);
    mu /= 16.0;
    for (std::size_t j = 0; j < normalized.cols; ++j) {
      double d = normalized.at(i, j) - mu;
      var += d * d;
    }
    var /= 16.0;
    CHECK(std::abs(mu) < 1e-5);
    CHECK(std::abs(var - 1.0) < 1e-4);
  }
}

TEST_CASE("forward gradients match central finite differences on every parameter") {
  Rng rng(8);
  for (int inst = 0; inst < 3; ++inst) {
    auto cfg = tiny_config(4, inst == 2 ? 16 : 8, 2, 2, 8);
    RankerModel model(cfg, 50 + inst);
    auto inputs = random_inputs(rng, 5, 4);
    auto seq = views(inputs);

    RankerModel::Tape tape;
    model.forward_tape(seq, tape);
    auto grads = model.zero_grads();
    model.backward(tape, 1.0, grads);

    auto& params = model.parameters();
    for (std::size_t p = 0; p < params.size(); ++p)
      for (std::size_t i = 0; i < params[p].a.size(); ++i) {
        double orig = params[p].a[i];
        double h = 1e-5 * std::max(1.0, std::abs(orig));
        params[p].a[i] = orig + h;
        double up = model.forward(seq);
        params[p].a[i] = orig - h;
        double down = model.forward(seq);
        params[p].a[i] = orig;
        double fd = (up - down) / (2 * h);
        double an = grads[p].a[i];
        double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
        CHECK_MESSAGE(std::abs(fd - an) / denom < 1e-4,
                      "param ", model.parameter_names()[p], " index ", i);
      }
  }
}

TEST_CASE("margin_loss hand cases") {
  std::vector<double> neg1{0.7};
  CHECK(margin_loss(0.9, neg1, 0.1) == 0.0);
  std::vector<double> neg2{0.5};
  CHECK(margin_loss(0.5, neg2, 0.1) == doctest::Approx(0.1));
  std::vector<double> negs{0.5, 0.9};
  // hinge terms: max(0, .1-.6+.5)=0, max(0,.1-.6+.9)=0.4 -> mean 0.2
  CHECK(margin_loss(0.6, negs, 0.1) == doctest::Approx(0.2));
  RankTrainConfig cfg;
  CHECK(cfg.margin == doctest::Approx(0.1));
  CHECK(cfg.neighborhood == 15);
}

TEST_CASE("make_training_batch: counts, corruption rules, determinism") {
  // 600 positives with 3 corruptions each gives 2,400 sequences.
  graph::SemanticGraph g;
  for (int i = 0; i < 700; ++i) g.add_node("m:t" + std::to_string(1000 + i));
  g.freeze();

  std::vector<std::pair<std::string, std::string>> positives;
  for (int i = 0; i < 600; ++i)
    positives.emplace_back("m:t" + std::to_string(1000 + i),
                           "m:t" + std::to_string(1000 + (i + 1) % 700));
  std::set<std::pair<std::string, std::string>> training_pairs(positives.begin(),
                                                               positives.end());
  std::vector<std::size_t> idx(positives.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;

  RankTrainConfig cfg;
  cfg.negatives = 3;
  Rng rng(99);
  auto batch = make_training_batch(positives, idx, g, training_pairs, cfg, rng);
  REQUIRE(batch.examples.size() == 600);
  std::size_t sequences = 0;
  for (const auto& ex : batch.examples) {
    sequences += 1 + ex.negatives.size();
    for (const auto& neg : ex.negatives) {
      CHECK(neg.subj_key == ex.positive.subj_key);
      CHECK(neg.obj_key != ex.positive.obj_key);
      CHECK(neg.obj_key != ex.positive.subj_key);
      CHECK(training_pairs.count({neg.subj_key, neg.obj_key}) == 0);
    }
  }
  CHECK(sequences == 2400);

  Rng rng2(99);
  auto batch2 = make_training_batch(positives, idx, g, training_pairs, cfg, rng2);
  REQUIRE(batch2.examples.size() == batch.examples.size());
  for (std::size_t i = 0; i < batch.examples.size(); ++i) {
    CHECK(batch.examples[i].positive.obj_key == batch2.examples[i].positive.obj_key);
    for (std::size_t k = 0; k < batch.examples[i].negatives.size(); ++k)
      CHECK(batch.examples[i].negatives[k].obj_key ==
            batch2.examples[i].negatives[k].obj_key);
  }
}

TEST_CASE("train_ranker rejects fewer than 10 predicates") {
  const auto& f = fixtures::smoke();
  std::vector<predicates::Predicate> few(f.train_preds.begin(),
                                         f.train_preds.begin() + 5);
  RankerConfig mcfg = tiny_config(16, 8, 2, 1, 8);
  RankTrainConfig tcfg;
  CHECK_THROWS_AS(train_ranker(f.graph, f.store, few, mcfg, tcfg),
                  std::invalid_argument);
}

TEST_CASE("train_ranker: best validation loss beats the initial loss") {
  const auto& f = fixtures::smoke();
  RankerConfig mcfg = tiny_config(16, 16, 2, 2, 24);
  RankTrainConfig tcfg;
  tcfg.epochs = 4;
  tcfg.positives_per_batch = 24;
  tcfg.warmup_batches = 10;
  tcfg.holdout_fraction = 0.05;
  tcfg.seed = 13;
  RankTrainStats stats;
  auto model = train_ranker(f.graph, f.store, f.train_preds, mcfg, tcfg, &stats);
  CHECK(stats.best_validation_loss < stats.initial_validation_loss);
  CHECK(stats.validation_losses.size() == 4);

  // warmup: the learning rate rises linearly and hits the peak at step w
  REQUIRE(stats.learning_rates.size() >= 10);
  for (std::size_t i = 0; i < 9; ++i) {
    CHECK(stats.learning_rates[i] ==
          doctest::Approx(tcfg.learning_rate * static_cast<double>(i + 1) / 10.0));
    CHECK(stats.learning_rates[i] < tcfg.learning_rate);
  }
  CHECK(stats.learning_rates[9] == doctest::Approx(tcfg.learning_rate));
}

TEST_CASE("train_ranker is deterministic for a fixed seed") {
  const auto& f = fixtures::smoke();
  RankerConfig mcfg = tiny_config(16, 8, 2, 1, 12);
  RankTrainConfig tcfg;
  tcfg.epochs = 2;
  tcfg.positives_per_batch = 16;
  tcfg.seed = 77;
  auto m1 = train_ranker(f.graph, f.store, f.train_preds, mcfg, tcfg);
  auto m2 = train_ranker(f.graph, f.store, f.train_preds, mcfg, tcfg);
  for (std::size_t p = 0; p < m1.parameters().size(); ++p)
    CHECK(m1.parameters()[p].a == m2.parameters()[p].a);
}

TEST_CASE("score_pair: determinism and zero variance for small neighborhoods") {
  const auto& f = fixtures::smoke();
  RankerModel model(tiny_config(16, 8, 2, 1, 12), 3);

  // find a term with at most s predicate neighbors
  std::string small_term;
  std::string big_term;
  for (const auto& key : f.store.keys()) {
    if (key[0] != 'm') continue;
    auto n = f.graph.neighbors(key, graph::NodeType::Predicate).size();
    if (n > 0 && n <= 5 && small_term.empty()) small_term = key;
    if (n > 20 && big_term.empty()) big_term = key;
  }
  REQUIRE(!small_term.empty());
  REQUIRE(!big_term.empty());

  auto a = score_pair(model, f.store, f.graph, small_term, big_term, 10, 42, 5);
  auto b = score_pair(model, f.store, f.graph, small_term, big_term, 10, 42, 5);
  CHECK(a.mean == b.mean);
  CHECK(a.stddev == b.stddev);

  // constant neighborhoods: repeats cannot vary
  auto c = score_pair(model, f.store, f.graph, small_term, small_term, 7, 1, 5);
  CHECK(c.stddev == 0.0);
}

TEST_CASE("score_pair errors name the unknown term") {
  const auto& f = fixtures::smoke();
  RankerModel model(tiny_config(16, 8, 2, 1, 12), 3);
  CHECK_THROWS_WITH_AS(score_pair(model, f.store, f.graph, "m:zzz", "m:zzz", 1, 1, 5),
                       doctest::Contains("m:zzz"), std::out_of_range);
}

TEST_CASE("rank_candidates: ordering, ties, skipped candidates") {
  const auto& f = fixtures::smoke();
  RankerModel model(tiny_config(16, 8, 2, 1, 12), 3);
  std::vector<std::string> terms;
  for (const auto& key : f.store.keys())
    if (key[0] == 'm' && terms.size() < 4) terms.push_back(key);
  REQUIRE(terms.size() == 4);

  std::vector<std::string> candidates{terms[1], terms[2], terms[3], "m:absent"};
  std::vector<std::string> skipped;
  auto ranked = rank_candidates(model, f.store, f.graph, terms[0], candidates, 3, 9,
                                5, &skipped);
  CHECK(ranked.size() == 3);
  CHECK(skipped == std::vector<std::string>{"m:absent"});
  for (std::size_t i = 1; i < ranked.size(); ++i) {
    bool ordered = ranked[i - 1].second > ranked[i].second ||
                   (ranked[i - 1].second == ranked[i].second &&
                    ranked[i - 1].first < ranked[i].first);
    CHECK(ordered);
  }

  auto single = rank_candidates(model, f.store, f.graph, terms[0], {terms[1]}, 1, 2,
                                5, nullptr);
  CHECK(single.size() == 1);
}

TEST_CASE("checkpoint round-trips parameters and the store checksum") {
  RankerModel model(tiny_config(6, 8, 2, 2, 12), 31);
  std::filesystem::create_directories("test_tmp");
  model.save("test_tmp/model.ckpt", 0xabcdef1234567890ULL);
  std::uint64_t checksum = 0;
  auto loaded = RankerModel::load("test_tmp/model.ckpt", &checksum);
  CHECK(checksum == 0xabcdef1234567890ULL);
  CHECK(loaded.config().hidden_dim == 8);
  CHECK(loaded.parameter_count() == model.parameter_count());
  for (std::size_t p = 0; p < model.parameters().size(); ++p)
    for (std::size_t i = 0; i < model.parameters()[p].a.size(); ++i)
      CHECK(static_cast<float>(model.parameters()[p].a[i]) ==
            doctest::Approx(loaded.parameters()[p].a[i]));

  Rng rng(1);
  auto inputs = random_inputs(rng, 4, 6);
  // f32 rounding moves the score a little; the two models must stay close
  CHECK(model.forward(views(inputs)) ==
        doctest::Approx(loaded.forward(views(inputs))).epsilon(1e-4));
}
