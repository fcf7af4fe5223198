// Command-line front end: pipeline stages, synthetic corpus generation,
// case studies and the streaming query mode.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "hypgen/pipeline.hpp"
#include "hypgen/validation.hpp"
#include "hypgen/version.hpp"

namespace {

using namespace hypgen;

struct CommonOpts {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> cut_date;
  std::optional<std::string> variant;
  std::optional<int> workers;
  std::optional<bool> deterministic;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "pipeline config file (JSON)")
      ->required();
  cmd->add_option("--seed", opts.seed, "override the global seed");
  cmd->add_option("--cut-date", opts.cut_date, "override the cut date (YYYY-MM-DD)");
  cmd->add_option("--variant", opts.variant, "override the variant (C or GP)");
  cmd->add_option("--workers", opts.workers, "worker threads for parallel stages");
  cmd->add_flag("--deterministic,!--no-deterministic", opts.deterministic,
                "single-worker deterministic mode (default on)");
}

pipeline::PipelineConfig load_config(const CommonOpts& opts) {
  auto cfg = pipeline::PipelineConfig::load(opts.config_path);
  if (opts.seed) cfg.seed = *opts.seed;
  if (opts.cut_date) {
    auto d = Date::parse(*opts.cut_date);
    if (!d) throw pipeline::ConfigError("cut_date", "not an ISO-8601 date");
    cfg.cut_date = *d;
  }
  if (opts.variant) cfg.variant = *opts.variant;
  if (opts.workers) cfg.workers = *opts.workers;
  if (opts.deterministic) cfg.deterministic = *opts.deterministic;
  if (cfg.deterministic) cfg.workers = 1;
  cfg.check();
  return cfg;
}

int run_one_stage(const CommonOpts& opts, const std::string& stage) {
  auto cfg = load_config(opts);
  auto outcome = pipeline::run_stage(cfg, stage);
  std::cout << "[" << outcome.name << "] done in " << outcome.seconds << " s\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{std::string(kToolVersion) +
               " - literature-graph hypothesis ranking pipeline"};
  app.require_subcommand(1);

  CommonOpts opts;
  bool force = false;

  auto* ingest = app.add_subcommand("ingest", "parse and annotate the corpus");
  auto* filter = app.add_subcommand("filter-predicates",
                                    "align, filter and split the predicate set");
  auto* build = app.add_subcommand("build-graph", "construct the semantic graph");
  auto* embed = app.add_subcommand("train-embed", "train node embeddings");
  auto* ranker_cmd = app.add_subcommand("train-ranker", "train the pair ranker");
  auto* validate = app.add_subcommand("validate", "run the time-sliced evaluation");
  auto* pipe = app.add_subcommand("pipeline", "run all stages with skip detection");
  pipe->add_flag("--force", force, "rerun stages even when inputs are unchanged");
  for (auto* cmd : {ingest, filter, build, embed, ranker_cmd, validate, pipe})
    add_common(cmd, opts);

  auto* query = app.add_subcommand(
      "query", "stream pair queries from stdin, one JSON object per line");
  add_common(query, opts);

  std::string cs_subject, cs_object, cs_pool_type;
  int cs_ratio = -1, cs_repeats = -1;
  auto* case_study =
      app.add_subcommand("case-study", "rank one pair against typed noise");
  add_common(case_study, opts);
  case_study->add_option("--subject", cs_subject, "subject CUI")->required();
  case_study->add_option("--object", cs_object, "object CUI")->required();
  case_study->add_option("--pool-type", cs_pool_type,
                         "semantic type of the noise pool (default: object's type)");
  case_study->add_option("--ratio", cs_ratio, "negatives per repeat (default 500)");
  case_study->add_option("--repeats", cs_repeats, "repeats (default 100)");

  std::string gen_out;
  std::uint64_t gen_seed = 1;
  int gen_docs = 200, gen_terms = 60, gen_comms = 2;
  auto* gen =
      app.add_subcommand("gen-synthetic", "write a deterministic synthetic corpus");
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--docs", gen_docs, "number of documents");
  gen->add_option("--terms", gen_terms, "number of coded terms");
  gen->add_option("--communities", gen_comms, "number of term communities");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) {
      validation::SyntheticConfig scfg;
      scfg.seed = gen_seed;
      scfg.n_docs = gen_docs;
      scfg.n_terms = gen_terms;
      scfg.n_communities = gen_comms;
      auto files = validation::generate_synthetic_corpus(gen_out, scfg);

      pipeline::PipelineConfig cfg;
      cfg.corpus_path = files.corpus_path;
      cfg.lexicon_path = files.lexicon_path;
      cfg.predicates_path = files.predicates_path;
      cfg.extractions_path = files.extractions_path;
      cfg.semnet_path = files.semnet_path;
      cfg.work_dir = gen_out + "/work";
      cfg.cut_date = files.cut_date;
      cfg.seed = gen_seed;
      cfg.embed.dim = 32;
      write_text_file(gen_out + "/config.json", cfg.to_json());
      std::cout << "synthetic corpus written to " << gen_out << "\n"
                << "pipeline config: " << gen_out << "/config.json\n";
      return 0;
    }
    if (pipe->parsed()) {
      auto cfg = load_config(opts);
      pipeline::run_pipeline(cfg, force, std::cout);
      return 0;
    }
    for (auto [cmd, name] :
         std::initializer_list<std::pair<CLI::App*, const char*>>{
             {ingest, "ingest"},
             {filter, "filter-predicates"},
             {build, "build-graph"},
             {embed, "train-embed"},
             {ranker_cmd, "train-ranker"},
             {validate, "validate"}})
      if (cmd->parsed()) return run_one_stage(opts, name);

    if (query->parsed()) {
      auto cfg = load_config(opts);
      auto engine = pipeline::LoadedEngine::load(cfg);
      pipeline::query_loop(engine, std::cin, std::cout);
      return 0;
    }
    if (case_study->parsed()) {
      auto cfg = load_config(opts);
      auto engine = pipeline::LoadedEngine::load(cfg);
      int ratio = cs_ratio > 0 ? cs_ratio : cfg.case_study.ratio;
      int repeats = cs_repeats > 0 ? cs_repeats : cfg.case_study.repeats;

      std::string pool_type = cs_pool_type;
      if (pool_type.empty()) {
        const auto* types = engine.lexicon.types_of(cs_object);
        if (!types || types->empty())
          throw std::runtime_error("object CUI has no semantic type in the lexicon");
        pool_type = types->front();
      }
      auto pool_map = engine.term_pool();
      auto it = pool_map.find(pool_type);
      if (it == pool_map.end())
        throw std::runtime_error("no scoreable terms of type " + pool_type);

      auto scorer = [&](const std::string& subj, const std::string& obj, Rng& rng) {
        return ranker::score_pair(engine.model, engine.store, engine.graph, subj,
                                  obj, 1, rng.next_u64(),
                                  engine.cfg.ranker_train.neighborhood)
            .mean;
      };
      auto result = validation::case_study(scorer, to_lower(cs_subject),
                                           to_lower(cs_object), it->second, ratio,
                                           repeats, derive_seed(cfg.seed, "case-study"));
      std::cout << "pair: " << cs_subject << " -> " << cs_object << "\n"
                << result.report << "\n";
      return 0;
    }
  } catch (const pipeline::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
