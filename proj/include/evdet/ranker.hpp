#pragma once

#include <functional>
#include <string>
#include <vector>

#include "evdet/encoder.hpp"
#include "evdet/ontology.hpp"
#include "evdet/optim.hpp"

namespace evdet {

// Fixed-size late-interaction representation: a small stack of unit rows.
struct EmbeddingBag {
  MatrixXd rows;  // m x h, every row L2-normalized
};

struct ConvSpec {
  int width = 4;
  int stride = 2;
  int max_rows = 32;
};

enum class TextKind { sentence, event };

// Relevance of an event bag to a sentence bag: for every sentence row, the
// best-matching event row, summed.
double max_sim(const EmbeddingBag& event, const EmbeddingBag& sentence);

struct RankerTrainConfig {
  int epochs = 5;
  int batch_size = 64;
  OptimConfig optim;
  double margin = 1.0;
  int negatives_per_sentence = 5;
  uint64_t seed = 2;
};

struct RankerExample {
  std::vector<std::string> tokens;            // sentence text
  std::vector<std::string> candidate_type_ids;  // admissible types for its trigger
};

// Draws negative type ids for one example. Members of the candidate set are
// skipped by the trainer, so over-drawing is fine.
using NegativeSampler =
    std::function<std::vector<std::string>(const RankerExample&, int count, DetRng&)>;

NegativeSampler uniform_negative_sampler(const Ontology& ont);

struct MarginStats {
  double loss = 0.0;     // mean hinge over counted sentence-negative pairs
  long pairs = 0;        // counted pairs
  long skipped = 0;      // sampled negatives that fell inside a candidate set
  long active = 0;       // pairs with a positive hinge term
};

// Stage 2: sentence and event texts are encoded, pooled by a strided
// convolution into a fixed number of unit rows, and compared with max_sim.
class RankerModel {
 public:
  RankerModel(Encoder encoder, ConvSpec spec = {});

  const Encoder& encoder() const { return encoder_; }
  Encoder& encoder() { return encoder_; }
  const ConvSpec& spec() const { return spec_; }

  // Tokens fed to the encoder for a text: marker first, then the text.
  static std::vector<std::string> marked_tokens(TextKind kind,
                                                const std::vector<std::string>& text);

  // The event-side text of a type: its name followed by its definition.
  static std::vector<std::string> event_text(const EventType& type);

  EmbeddingBag embed(TextKind kind, const std::vector<std::string>& text) const;
  EmbeddingBag embed_type(const EventType& type) const;

  // Mean hinge loss over (sentence, negative) pairs of the batch; the
  // positive score is the best candidate of each example. Gradients are
  // accumulated when `accumulate_grads` is set; call with zeroed gradients.
  MarginStats margin_loss(const std::vector<RankerExample>& batch,
                          const std::vector<std::vector<std::string>>& negatives,
                          const Ontology& ont, double margin, bool accumulate_grads);

  std::vector<Tensor*> trainable_tensors();

  void serialize(BinaryWriter& w) const;
  static RankerModel deserialize(BinaryReader& r);

  Tensor& conv_filter() { return conv_filter_; }
  Tensor& conv_bias() { return conv_bias_; }

 private:
  struct ConvTrace {
    EncodeTrace enc;
    MatrixXd pre_norm;  // m x h rows before normalization
    MatrixXd bag;
    int padded_rows = 0;
  };

  ConvTrace embed_traced(const std::vector<std::string>& tokens) const;
  void conv_backward(const ConvTrace& trace, const MatrixXd& bag_grads);

  Encoder encoder_;
  ConvSpec spec_;
  Tensor conv_filter_;  // (width*h) x h
  Tensor conv_bias_;    // h x 1
};

std::vector<double> train_ranker(RankerModel& model, const std::vector<RankerExample>& examples,
                                 const Ontology& ont, const RankerTrainConfig& cfg,
                                 const NegativeSampler& sampler = {},
                                 Warnings* warnings = nullptr, MarginStats* last_epoch = nullptr);

// Precomputed event bags for the whole ontology, tied to the parameters
// that produced them.
struct TypeIndex {
  std::vector<std::string> type_ids;
  std::vector<EmbeddingBag> bags;
  int h = 0;
  uint64_t parameter_hash = 0;
};

TypeIndex build_type_index(const RankerModel& model, const Ontology& ont);

// Blob plus JSON manifest; loading verifies the manifest against the blob.
void save_type_index(const std::filesystem::path& bin_path, const TypeIndex& index);
TypeIndex load_type_index(const std::filesystem::path& bin_path);

// Throws ConsistencyError when the index was built by different parameters.
void check_index_fresh(const TypeIndex& index, const RankerModel& model);

struct RankedType {
  std::string type_id;
  double score = 0.0;
};

// All index types by descending max_sim; ties broken by type id.
std::vector<RankedType> rank_types(const RankerModel& model, const TypeIndex& index,
                                   const std::vector<std::string>& sentence_tokens);

std::vector<RankedType> top_k(const std::vector<RankedType>& ranked, int k);

void save_ranker_model(const std::filesystem::path& path, const RankerModel& model);
RankerModel load_ranker_model(const std::filesystem::path& path);

}  // namespace evdet
