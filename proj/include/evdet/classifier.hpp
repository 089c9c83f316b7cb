#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "evdet/corpus.hpp"
#include "evdet/encoder.hpp"
#include "evdet/ontology.hpp"
#include "evdet/optim.hpp"

namespace evdet {

struct QAPrompt {
  std::vector<std::string> tokens;
  int mask_index = -1;  // token position of the [MASK] slot
};

// "{name} is defined as {definition}. {sentence}. Does {trigger} indicate a
// {name} event? [MASK]". When the prompt exceeds the encoder budget the
// sentence window shrinks, dropping the token farthest from the trigger
// first; trigger tokens are never dropped.
QAPrompt render_prompt(const EventType& type, const std::vector<std::string>& sentence_tokens,
                       Span trigger, const Encoder& enc, Warnings* warnings = nullptr);

struct PairScore {
  double p_yes = 0.5;
  double logit_yes = 0.0;
  double logit_no = 0.0;
};

// Softmax over the two verbalizer logits, numerically stable.
double yes_probability(double logit_yes, double logit_no);

// Stage 3: fills the prompt's mask slot and reads the yes/no scores.
class ClassifierModel {
 public:
  explicit ClassifierModel(Encoder encoder);

  const Encoder& encoder() const { return encoder_; }
  Encoder& encoder() { return encoder_; }

  PairScore score(const QAPrompt& prompt) const;

  // BCE of p_yes against `target` in {0, 1}; accumulates gradients. Returns
  // the pair loss. Call with zeroed gradients only through the trainer.
  double pair_loss_and_grad(const QAPrompt& prompt, double target);

  std::vector<Tensor*> trainable_tensors();

  void serialize(BinaryWriter& w) const;
  static ClassifierModel deserialize(BinaryReader& r);

 private:
  Encoder encoder_;
};

struct RankedCandidate {
  std::string type_id;
  double ranker_score = 0.0;
};

struct CandidateScore {
  std::string type_id;
  double ranker_score = 0.0;
  double p_yes = 0.0;
};

struct ClassifyResult {
  std::string chosen_type;
  std::vector<CandidateScore> scores;  // descending p_yes
};

// Scores each candidate independently and picks the best p_yes; ties fall
// back to the ranker score, then to the type id.
ClassifyResult classify_mention(const ClassifierModel& model, const Ontology& ont,
                                const std::vector<std::string>& sentence_tokens, Span trigger,
                                const std::vector<RankedCandidate>& candidates,
                                Warnings* warnings = nullptr);

struct ClassifierExample {
  std::vector<std::string> sentence_tokens;
  Span trigger;
  std::string positive_type_id;
  std::vector<std::string> negative_type_ids;
};

struct ClassifierTrainConfig {
  int epochs = 2;
  int batch_size = 32;
  OptimConfig optim;
  uint64_t seed = 3;
};

// Mean pair BCE per epoch. Positives train toward yes, sampled negatives
// toward no.
std::vector<double> train_classifier(ClassifierModel& model,
                                     const std::vector<ClassifierExample>& examples,
                                     const Ontology& ont, const ClassifierTrainConfig& cfg,
                                     Warnings* warnings = nullptr);

// First `count` entries of the ranker's top `top_k` with the positive
// removed: the hard negatives for one mention.
std::vector<std::string> negatives_from_ranking(const std::vector<std::string>& ranked_type_ids,
                                                const std::string& positive_type_id, int top_k,
                                                int count);

// A partially labeled mention: the gold type is only known to lie in
// candidate_type_ids.
struct NoisyMention {
  std::string mention_id;
  std::vector<std::string> sentence_tokens;
  Span trigger;
  std::vector<std::string> candidate_type_ids;
  std::vector<std::string> negative_pool;  // ranker candidates for training negatives
};

struct SelfLabelConfig {
  double margin_threshold = 0.9;  // top-1 minus runner-up probability
  int rounds = 1;
  int negatives_per_positive = 5;
};

struct PseudoLabelRecord {
  std::string mention_id;
  std::vector<std::pair<std::string, double>> candidate_p;  // descending p_yes
  double margin = 0.0;
  bool selected = false;
  std::string pseudo_label;
};

struct SelfLabelOutcome {
  std::vector<PseudoLabelRecord> audit;
  std::vector<ClassifierExample> pseudo_examples;
  int selected = 0;
};

// One labeling pass: scores every candidate of every noisy mention and
// keeps those whose margin clears the threshold.
SelfLabelOutcome self_label_mentions(const ClassifierModel& labeler,
                                     const std::vector<NoisyMention>& noisy, const Ontology& ont,
                                     const SelfLabelConfig& cfg, Warnings* warnings = nullptr);

struct SelfTrainResult {
  ClassifierModel final_model;
  std::vector<PseudoLabelRecord> audit;
  int selected = 0;
  int rounds_run = 0;
};

// Iterates labeling and retraining: each round labels with the latest
// model and retrains a fresh one on clean plus pseudo-labeled data. With no
// selections the base model is kept and the loop stops.
SelfTrainResult self_train(const std::function<ClassifierModel()>& fresh_model,
                           const ClassifierModel& base, const std::vector<ClassifierExample>& clean,
                           const std::vector<NoisyMention>& noisy, const Ontology& ont,
                           const ClassifierTrainConfig& train_cfg, const SelfLabelConfig& cfg,
                           Warnings* warnings = nullptr);

void save_pseudo_label_audit(const std::filesystem::path& path,
                             const std::vector<PseudoLabelRecord>& records);
std::vector<PseudoLabelRecord> load_pseudo_label_audit(const std::filesystem::path& path);

void save_classifier_model(const std::filesystem::path& path, const ClassifierModel& model);
ClassifierModel load_classifier_model(const std::filesystem::path& path);

}  // namespace evdet
