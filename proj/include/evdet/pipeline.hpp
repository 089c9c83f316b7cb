#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "evdet/classifier.hpp"
#include "evdet/corpus.hpp"
#include "evdet/fixture.hpp"
#include "evdet/metrics.hpp"
#include "evdet/ontology.hpp"
#include "evdet/ranker.hpp"
#include "evdet/trigger.hpp"

namespace evdet {

inline constexpr const char* kPipelineVersion = "0.1.0";

struct DataConfig {
  double train_ratio = 0.90, dev_ratio = 0.05, test_ratio = 0.05;
  int min_mentions = 3;
  bool drop_modal_for_amr = true;
  std::string filter_rules_path;  // optional deny-list document
};

struct EncoderConfig {
  int dim = 160;
  uint64_t vocab_seed = 11;
};

struct TriggerStageConfig {
  int epochs = 5, batch_size = 128, max_len = 128;
  double lr = 1e-5, weight_decay = 0.01;
  int warmup_steps = 50;
  int max_span_len = 10;
  double threshold = 0.5;
};

struct RankerStageConfig {
  int epochs = 5, batch_size = 64, max_len = 128;
  double lr = 1e-5, weight_decay = 0.01;
  int warmup_steps = 50;
  double margin = 1.0;
  int negatives = 5;
  int top_k = 10;
};

struct ClassifierStageConfig {
  int epochs = 2, batch_size = 32, max_len = 512;
  double lr = 1e-5, weight_decay = 0.01;
  int warmup_steps = 50;
  int negatives = 5;
};

struct SelfLabelStageConfig {
  double margin_threshold = 0.9;
  int rounds = 1;
};

struct EvalConfig {
  std::string split = "dev";  // dev or test
  std::vector<int> ks = {1, 2, 5, 10, 20, 50};
  bool prioritize_hierarchy = false;
};

struct PipelineConfig {
  uint64_t seed = 7;
  std::string ontology_path;
  std::string corpus_path;
  std::string out_dir = "out";
  DataConfig data;
  EncoderConfig encoder;
  TriggerStageConfig trigger;
  RankerStageConfig ranker;
  ClassifierStageConfig classifier;
  SelfLabelStageConfig self_label;
  EvalConfig eval;

  static PipelineConfig from_json(const json& doc);
  json to_json() const;

  // File plus "--set dotted.key=value" overrides; unknown keys are
  // rejected.
  static PipelineConfig load(const std::filesystem::path& file,
                             const std::vector<std::string>& overrides = {});

  // Stable across machines and output locations (out_dir excluded).
  uint64_t config_hash() const;

  std::filesystem::path out() const { return out_dir; }
  std::filesystem::path data_dir() const { return out() / "data"; }
  std::filesystem::path model_dir() const { return out() / "models"; }
  std::filesystem::path pred_dir() const { return out() / "preds"; }
  std::filesystem::path eval_dir() const { return out() / "eval"; }
  std::filesystem::path manifest_dir() const { return out() / "manifests"; }
};

enum class Stage {
  build_data,
  train_ti,
  train_rank,
  build_index,
  train_cls_base,
  self_label,
  train_cls_final,
  predict,
  evaluate,
  error_analysis,
};

const char* to_string(Stage s);
Stage stage_from_name(const std::string& name);
// Canonical run order (a topological order of the stage DAG).
const std::vector<Stage>& all_stages();

// Runs one stage: verifies upstream artifacts via their manifests, writes
// outputs atomically, then writes this stage's manifest. The output
// directory is locked for the duration.
void run_stage(const PipelineConfig& cfg, Stage stage, Warnings* warnings = nullptr);

void run_all(const PipelineConfig& cfg, Warnings* warnings = nullptr);

// One decoded trigger with its classified type and the full type ranking
// (classifier-reordered head, ranker-ordered tail).
struct PredictedEvent {
  Span span;
  double prob = 0.0;
  std::string chosen_type;
  std::vector<RankedType> ranked;
};

struct SentenceOutput {
  std::string sent_id;
  std::vector<PredictedEvent> events;
};

// Full three-stage inference. Sentences without decoded triggers produce an
// empty record and skip ranking; one ranking call is shared by all triggers
// of a sentence.
std::vector<SentenceOutput> predict_end_to_end(const TriggerModel& trigger,
                                               const RankerModel& ranker, const TypeIndex& index,
                                               const ClassifierModel& classifier,
                                               const Ontology& ont, const Corpus& corpus,
                                               double threshold, int top_k,
                                               Warnings* warnings = nullptr);

// Stage diagnostics on gold spans: the sentence-level ranking plus the
// classifier's ordering of the top candidates, per gold mention.
std::vector<GoldSpanRecord> per_stage_records(const RankerModel& ranker, const TypeIndex& index,
                                              const ClassifierModel& classifier,
                                              const Ontology& ont, const Corpus& corpus, int top_k,
                                              Warnings* warnings = nullptr);

void save_predictions(const std::filesystem::path& path, const std::vector<SentenceOutput>& preds);
std::vector<SentenceOutput> load_predictions(const std::filesystem::path& path);
PredBySentence predictions_for_metrics(const std::vector<SentenceOutput>& preds);

void save_per_stage_records(const std::filesystem::path& path,
                            const std::vector<GoldSpanRecord>& records);
std::vector<GoldSpanRecord> load_per_stage_records(const std::filesystem::path& path);

// Example builders shared by training stages and tests.
std::vector<TriggerExample> trigger_examples(const Corpus& corpus);
std::vector<RankerExample> ranker_examples(const Corpus& corpus, Warnings* warnings = nullptr);
std::vector<ClassifierExample> clean_classifier_examples(const Corpus& corpus,
                                                         const RankerModel& ranker,
                                                         const TypeIndex& index, int top_k,
                                                         int negatives);
std::vector<NoisyMention> noisy_mentions(const Corpus& corpus, const RankerModel& ranker,
                                         const TypeIndex& index, int top_k);

void save_classifier_examples(const std::filesystem::path& path,
                              const std::vector<ClassifierExample>& examples);
std::vector<ClassifierExample> load_classifier_examples(const std::filesystem::path& path);

}  // namespace evdet
