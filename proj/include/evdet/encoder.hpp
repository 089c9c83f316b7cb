#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "evdet/binio.hpp"
#include "evdet/common.hpp"

namespace evdet {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// A parameter with its gradient accumulator. Vectors are h x 1 matrices so
// the optimizer can treat every block uniformly.
struct Tensor {
  MatrixXd value;
  MatrixXd grad;

  Tensor() = default;
  Tensor(Eigen::Index rows, Eigen::Index cols)
      : value(MatrixXd::Zero(rows, cols)), grad(MatrixXd::Zero(rows, cols)) {}
  explicit Tensor(MatrixXd v) : value(std::move(v)) { grad = MatrixXd::Zero(value.rows(), value.cols()); }

  void zero_grad() { grad.setZero(); }
};

inline constexpr const char* kClsToken = "[CLS]";
inline constexpr const char* kSepToken = "[SEP]";
inline constexpr const char* kSentMarker = "[SENT]";
inline constexpr const char* kEventMarker = "[EVENT]";
inline constexpr const char* kMaskToken = "[MASK]";

// Output of encoding: one row per surviving input token plus the leading
// classification row (row 0). Rows beyond row 0 align to input tokens via
// first-subword pooling.
struct EncodeResult {
  MatrixXd rows;           // (tokens_encoded + 1) x h
  int tokens_encoded = 0;  // input tokens that survived truncation
  bool truncated = false;
};

// Encoding plus everything the backward pass needs. Base vectors are fixed,
// so the tape only keeps the pooled bases and the subword context mean.
struct EncodeTrace {
  MatrixXd rows;
  MatrixXd pooled_bases;  // same shape as rows: base vector behind each row
  VectorXd context;       // mean base over the full subword stream
  int tokens_encoded = 0;
  bool truncated = false;
};

enum class EncoderKind : uint8_t { reference = 0, pretrained = 1 };

// Token encoder shared by all three stages.
//
// Every subword gets a fixed unit base vector (hashed for the reference
// backend, table lookup with hashed fallback for the pretrained one). A
// trainable mixing layer produces the output row for subword i:
//
//   row_i = W * base_i + U * context + Q * (context o context) + bias
//
// where context is the mean of all base vectors and o is the elementwise
// product. The linear context term lets mask-slot rows see the rest of the
// input; the squared term carries the cross products between input segments,
// which is what lets a linear head detect that a sentence and a type
// definition share vocabulary. W starts as the identity and U, Q, bias at
// zero, so a fresh encoder reproduces the base vectors exactly.
// Deterministic in evaluation mode; eval calls are read-only.
class Encoder {
 public:
  // Reference backend: every word hashes to a fixed base vector.
  static Encoder reference(int h, uint64_t vocab_seed);

  // Pretrained backend: base vectors come from an embedding table exported
  // offline; words outside the table fall back to hashed vectors.
  static Encoder pretrained(int h, uint64_t vocab_seed,
                            std::map<std::string, VectorXd> vocab_table);

  EncoderKind kind() const { return kind_; }
  int dim() const { return h_; }
  bool trainable() const { return trainable_; }
  void set_trainable(bool v) { trainable_ = v; }

  int max_len() const { return max_len_; }
  void set_max_len(int n);

  // Subword pieces of one token. Marker tokens ([CLS], [MASK], ...) never
  // split; other tokens split at '_' and '-'.
  std::vector<std::string> subwords(const std::string& token) const;
  int subword_count(const std::vector<std::string>& tokens) const;

  // Fixed base vector for one subword.
  VectorXd base_vector(const std::string& subword) const;

  EncodeResult encode(const std::vector<std::string>& tokens) const;
  EncodeTrace encode_traced(const std::vector<std::string>& tokens) const;

  // Accumulates d(loss)/d(params) given d(loss)/d(rows). No-op when the
  // backend is frozen.
  void backward(const EncodeTrace& trace, const MatrixXd& row_grads);

  // Scores candidate words for the single [MASK] slot in `tokens`.
  std::vector<double> mask_fill_logits(const std::vector<std::string>& tokens,
                                       const std::vector<std::string>& words) const;

  // Index of the [MASK] token; throws unless exactly one is present.
  static int find_mask_index(const std::vector<std::string>& tokens);

  // Head vector for a mask-fill word. The const path never mutates state;
  // ensure_head() materializes a trainable entry (single-writer, training
  // only).
  VectorXd head_vector(const std::string& word) const;
  Tensor& ensure_head(const std::string& word);

  Tensor& mix_w() { return mix_w_; }
  Tensor& mix_u() { return mix_u_; }
  Tensor& mix_q() { return mix_q_; }
  Tensor& mix_bias() { return mix_bias_; }

  // Trainable blocks: the mixing layer plus heads for `head_words`.
  std::vector<Tensor*> trainable_tensors(const std::vector<std::string>& head_words = {});

  void serialize(BinaryWriter& w) const;
  static Encoder deserialize(BinaryReader& r);

  // Fingerprint of all parameters; changes whenever training moves them.
  uint64_t parameter_hash() const;

 private:
  Encoder() = default;

  EncoderKind kind_ = EncoderKind::reference;
  int h_ = 0;
  uint64_t vocab_seed_ = 0;
  bool trainable_ = true;
  int max_len_ = 128;

  Tensor mix_w_, mix_u_, mix_q_, mix_bias_;
  std::map<std::string, Tensor> head_;              // trainable mask-fill heads
  std::map<std::string, VectorXd> vocab_table_;     // pretrained bases

  VectorXd hashed_base(const std::string& subword) const;
};

// Checkpoint files: binary blob plus a JSON sidecar naming the backend.
void save_encoder_checkpoint(const std::filesystem::path& bin_path, const Encoder& enc);
Encoder load_encoder_checkpoint(const std::filesystem::path& bin_path);
json encoder_sidecar(const Encoder& enc);

}  // namespace evdet
