// Command line front end for the event detection pipeline.
//
// Each pipeline stage is a subcommand taking --config plus optional --set
// overrides. `pipeline` runs all stages in order. `generate-fixture` emits a
// synthetic ontology/corpus pair, and `evaluate` can also score prediction
// files directly without a pipeline directory.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "evdet/fixture.hpp"
#include "evdet/metrics.hpp"
#include "evdet/pipeline.hpp"

using namespace evdet;

namespace {

struct StageArgs {
  std::string config_path;
  std::vector<std::string> overrides;
};

void add_config_options(CLI::App* sub, StageArgs& args) {
  sub->add_option("--config", args.config_path, "pipeline config file (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  sub->add_option("--set", args.overrides,
                  "override a config value, e.g. --set trigger.epochs=3");
}

void flush_warnings(const Warnings& warnings) {
  for (const std::string& w : warnings) std::cerr << "warning: " << w << "\n";
}

const char* error_kind(const std::exception& e) {
  if (dynamic_cast<const ParseError*>(&e)) return "parse";
  if (dynamic_cast<const ValidationError*>(&e)) return "validation";
  if (dynamic_cast<const ArgumentError*>(&e)) return "argument";
  if (dynamic_cast<const DependencyError*>(&e)) return "dependency";
  if (dynamic_cast<const ConsistencyError*>(&e)) return "consistency";
  if (dynamic_cast<const IoError*>(&e)) return "io";
  return "internal";
}

int run_evaluate_files(const std::string& gold_path, const std::string& pred_path,
                       std::vector<int> ks, const std::string& output, Warnings& warnings) {
  if (ks.empty()) ks = {1, 2, 5, 10, 20, 50};
  Corpus gold_corpus = load_corpus(gold_path);
  GoldBySentence gold = gold_from_corpus(gold_corpus, &warnings);
  PredBySentence preds = predictions_for_metrics(load_predictions(pred_path));
  MetricReport report = evaluate_predictions(preds, gold, ks, &warnings);
  std::string text = report.to_json().dump(2) + "\n";
  if (output.empty())
    std::cout << text;
  else
    atomic_write_file(output, text);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"large-ontology event detection pipeline"};
  app.require_subcommand(1);

  StageArgs stage_args;
  std::map<std::string, Stage> stage_subs;
  for (Stage s : all_stages()) {
    CLI::App* sub = app.add_subcommand(to_string(s), std::string("run the ") + to_string(s) +
                                                         " stage");
    stage_subs[to_string(s)] = s;
    if (s == Stage::evaluate) continue;  // configured below with extra options
    add_config_options(sub, stage_args);
  }

  CLI::App* pipeline_sub = app.add_subcommand("pipeline", "run every stage in order");
  add_config_options(pipeline_sub, stage_args);

  // evaluate works against a pipeline directory (--config) or directly
  // against files (--gold/--pred).
  CLI::App* eval_sub = app.get_subcommand("evaluate");
  std::string gold_path, pred_path, eval_output;
  std::vector<int> eval_ks;
  eval_sub->add_option("--config", stage_args.config_path, "pipeline config file (JSON)")
      ->check(CLI::ExistingFile);
  eval_sub->add_option("--set", stage_args.overrides,
                       "override a config value, e.g. --set eval.split=test");
  eval_sub->add_option("--gold", gold_path, "gold corpus (JSONL)")->check(CLI::ExistingFile);
  eval_sub->add_option("--pred", pred_path, "predictions (JSONL)")->check(CLI::ExistingFile);
  eval_sub->add_option("--ks", eval_ks, "Hit@K cutoffs (default 1,2,5,10,20,50)")
      ->delimiter(',');
  eval_sub->add_option("--output", eval_output, "write metrics JSON here instead of stdout");

  CLI::App* fixture_sub =
      app.add_subcommand("generate-fixture", "write a synthetic ontology and corpus");
  FixtureSpec spec;
  std::string fixture_dir;
  fixture_sub->add_option("--out", fixture_dir, "output directory")->required();
  fixture_sub->add_option("--types", spec.type_count, "number of event types");
  fixture_sub->add_option("--vocab-per-type", spec.vocab_per_type, "vocabulary words per type");
  fixture_sub->add_option("--sentences-per-type", spec.sentences_per_type,
                          "mention sentences per type");
  fixture_sub->add_option("--noise-rate", spec.noise_rate,
                          "fraction of mentions with ambiguous candidate sets");
  fixture_sub->add_option("--bigram-rate", spec.bigram_rate, "fraction of two-token triggers");
  fixture_sub->add_option("--confusion-rate", spec.confusion_rate,
                          "fraction of noisy sentences with decoy context");
  fixture_sub->add_option("--filler-pool", spec.filler_pool, "distinct filler words");
  fixture_sub->add_option("--empty-sentences", spec.empty_sentences, "trigger-free sentences");
  fixture_sub->add_option("--doc-size", spec.doc_size, "sentences per document");
  fixture_sub->add_option("--seed", spec.seed, "generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  Warnings warnings;
  try {
    if (fixture_sub->parsed()) {
      std::filesystem::path dir(fixture_dir);
      write_fixture(spec, dir / "ontology.jsonl", dir / "corpus.jsonl");
      flush_warnings(warnings);
      return 0;
    }
    if (eval_sub->parsed() && stage_args.config_path.empty()) {
      if (gold_path.empty() || pred_path.empty())
        throw ArgumentError("evaluate needs --config, or both --gold and --pred");
      int rc = run_evaluate_files(gold_path, pred_path, eval_ks, eval_output, warnings);
      flush_warnings(warnings);
      return rc;
    }
    PipelineConfig cfg = PipelineConfig::load(stage_args.config_path, stage_args.overrides);
    if (pipeline_sub->parsed()) {
      run_all(cfg, &warnings);
    } else {
      CLI::App* parsed = app.get_subcommands().at(0);
      run_stage(cfg, stage_subs.at(parsed->get_name()), &warnings);
    }
    flush_warnings(warnings);
    return 0;
  } catch (const std::exception& e) {
    flush_warnings(warnings);
    json err{{"error", {{"kind", error_kind(e)}, {"message", e.what()}}}};
    std::cerr << err.dump() << "\n";
    return 1;
  }
}
