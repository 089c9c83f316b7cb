#pragma once

#include <string>
#include <vector>

#include "evdet/corpus.hpp"
#include "evdet/encoder.hpp"
#include "evdet/optim.hpp"

namespace evdet {

struct SpanScore {
  Span span;
  double logit = 0.0;
  double probability = 0.5;
};

double sigmoid(double z);

// Numerically stable binary cross entropy against a logit.
double bce_with_logit(double logit, double target);

struct TriggerTrainConfig {
  int epochs = 5;
  int batch_size = 128;
  OptimConfig optim;  // lr 1e-5, weight decay 0.01, linear schedule, 50 warmup
  uint64_t seed = 1;
};

struct TriggerExample {
  std::vector<std::string> tokens;
  std::vector<Span> gold_spans;
};

enum class OverlapPolicy { greedy };

// Stage 1: every candidate span is scored as start + end + sum-of-parts,
// each part a learned projection of the token embedding.
class TriggerModel {
 public:
  TriggerModel(Encoder encoder, int max_span_len = 10);

  const Encoder& encoder() const { return encoder_; }
  Encoder& encoder() { return encoder_; }
  int max_span_len() const { return max_span_len_; }

  // All spans of length <= max_span_len over the token rows of `token_rows`.
  // Row 0 holds sentence-level context and is skipped; span indices count
  // tokens, so [i, j] covers rows i+1 .. j+1. Exposed over raw embeddings so
  // scores can be checked by hand arithmetic.
  static std::vector<SpanScore> score_rows(const MatrixXd& token_rows,
                                           const VectorXd& start_weight,
                                           const VectorXd& end_weight,
                                           const VectorXd& part_weight, int max_span_len);

  std::vector<SpanScore> score_spans(const std::vector<std::string>& tokens) const;

  // Mean BCE over all enumerated spans of the batch; no gradients.
  double compute_loss(const std::vector<TriggerExample>& batch) const;

  // As compute_loss, but accumulates gradients into the weight tensors and
  // the encoder.
  double compute_loss_and_grad(const std::vector<TriggerExample>& batch);

  std::vector<Tensor*> trainable_tensors();

  void serialize(BinaryWriter& w) const;
  static TriggerModel deserialize(BinaryReader& r);

  Tensor& start_tensor() { return start_weight_; }
  Tensor& end_tensor() { return end_weight_; }
  Tensor& part_tensor() { return part_weight_; }

 private:
  Encoder encoder_;
  int max_span_len_ = 10;
  Tensor start_weight_, end_weight_, part_weight_;  // h x 1 each
};

// Minimizes BCE over all candidate spans. Returns the per-epoch mean loss
// curve. Warns when the data contains no positive span at all.
std::vector<double> train_trigger_model(TriggerModel& model,
                                        const std::vector<TriggerExample>& examples,
                                        const TriggerTrainConfig& cfg,
                                        Warnings* warnings = nullptr);

// Thresholds and resolves overlaps greedily by descending probability; ties
// broken by earlier start, then shorter span.
std::vector<SpanScore> decode_triggers(std::vector<SpanScore> scored, double threshold,
                                       OverlapPolicy policy = OverlapPolicy::greedy);

// Trigger predictions artifact: {sent_id, spans:[{start,end,prob}]}.
struct TriggerPrediction {
  std::string sent_id;
  std::vector<SpanScore> spans;
};

void save_trigger_predictions(const std::filesystem::path& path,
                              const std::vector<TriggerPrediction>& preds);
std::vector<TriggerPrediction> load_trigger_predictions(const std::filesystem::path& path);

void save_trigger_model(const std::filesystem::path& path, const TriggerModel& model);
TriggerModel load_trigger_model(const std::filesystem::path& path);

}  // namespace evdet
