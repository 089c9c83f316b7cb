#include "evdet/encoder.hpp"

#include <algorithm>

namespace evdet {

namespace {

constexpr uint32_t kCheckpointVersion = 2;

bool is_marker(const std::string& token) {
  return token.size() >= 3 && token.front() == '[' && token.back() == ']';
}

}  // namespace

Encoder Encoder::reference(int h, uint64_t vocab_seed) {
  if (h < 4) throw ArgumentError("encoder dimension must be at least 4");
  Encoder enc;
  enc.kind_ = EncoderKind::reference;
  enc.h_ = h;
  enc.vocab_seed_ = vocab_seed;
  enc.mix_w_ = Tensor(MatrixXd::Identity(h, h));
  enc.mix_u_ = Tensor(h, h);
  enc.mix_q_ = Tensor(h, h);
  enc.mix_bias_ = Tensor(h, 1);
  return enc;
}

Encoder Encoder::pretrained(int h, uint64_t vocab_seed,
                            std::map<std::string, VectorXd> vocab_table) {
  Encoder enc = reference(h, vocab_seed);
  enc.kind_ = EncoderKind::pretrained;
  for (const auto& [word, vec] : vocab_table) {
    if (vec.size() != h) {
      throw ArgumentError("embedding table entry \"" + word + "\" has dimension " +
                          std::to_string(vec.size()) + ", expected " + std::to_string(h));
    }
  }
  enc.vocab_table_ = std::move(vocab_table);
  return enc;
}

void Encoder::set_max_len(int n) {
  if (n < 8) throw ArgumentError("max sequence length must be at least 8");
  max_len_ = n;
}

std::vector<std::string> Encoder::subwords(const std::string& token) const {
  if (is_marker(token)) return {token};
  std::vector<std::string> pieces;
  std::string cur;
  for (char ch : token) {
    if (ch == '_' || ch == '-') {
      if (!cur.empty()) pieces.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (!cur.empty()) pieces.push_back(std::move(cur));
  if (pieces.empty()) pieces.push_back(token);
  return pieces;
}

int Encoder::subword_count(const std::vector<std::string>& tokens) const {
  int n = 0;
  for (const auto& t : tokens) n += static_cast<int>(subwords(t).size());
  return n;
}

VectorXd Encoder::hashed_base(const std::string& subword) const {
  DetRng rng(fnv1a64(subword) ^ vocab_seed_);
  VectorXd v(h_);
  for (int i = 0; i < h_; ++i) v(i) = rng.next_gaussian();
  double norm = v.norm();
  if (norm < 1e-12) v(0) = norm = 1.0;
  return v / norm;
}

VectorXd Encoder::base_vector(const std::string& subword) const {
  if (kind_ == EncoderKind::pretrained) {
    auto it = vocab_table_.find(subword);
    if (it != vocab_table_.end()) return it->second;
  }
  return hashed_base(subword);
}

namespace {

struct SubwordStream {
  std::vector<std::string> pieces;   // [CLS] + kept pieces + [SEP]
  int tokens_encoded = 0;
  std::vector<int> first_piece;      // per encoded token: index into pieces
  bool truncated = false;
};

}  // namespace

EncodeTrace Encoder::encode_traced(const std::vector<std::string>& tokens) const {
  if (tokens.empty()) throw ArgumentError("cannot encode an empty token sequence");

  SubwordStream stream;
  stream.pieces.push_back(kClsToken);
  const int budget = max_len_ - 1;  // one slot reserved for [SEP]
  for (const auto& token : tokens) {
    auto pieces = subwords(token);
    if (static_cast<int>(stream.pieces.size()) + 1 > budget) {
      stream.truncated = true;
      break;
    }
    stream.first_piece.push_back(static_cast<int>(stream.pieces.size()));
    stream.tokens_encoded += 1;
    for (auto& p : pieces) {
      if (static_cast<int>(stream.pieces.size()) >= budget) {
        stream.truncated = true;
        break;
      }
      stream.pieces.push_back(std::move(p));
    }
  }
  stream.pieces.push_back(kSepToken);

  const int total = static_cast<int>(stream.pieces.size());
  MatrixXd bases(total, h_);
  for (int i = 0; i < total; ++i) bases.row(i) = base_vector(stream.pieces[i]).transpose();
  VectorXd context = bases.colwise().mean().transpose();

  const int out_rows = stream.tokens_encoded + 1;
  EncodeTrace trace;
  trace.pooled_bases.resize(out_rows, h_);
  trace.pooled_bases.row(0) = bases.row(0);
  for (int t = 0; t < stream.tokens_encoded; ++t) {
    trace.pooled_bases.row(t + 1) = bases.row(stream.first_piece[t]);
  }
  VectorXd shift = mix_u_.value * context +
                   mix_q_.value * VectorXd(context.array().square()) +
                   mix_bias_.value.col(0);
  trace.rows = trace.pooled_bases * mix_w_.value.transpose();
  trace.rows.rowwise() += shift.transpose();
  trace.context = std::move(context);
  trace.tokens_encoded = stream.tokens_encoded;
  trace.truncated = stream.truncated;
  return trace;
}

EncodeResult Encoder::encode(const std::vector<std::string>& tokens) const {
  EncodeTrace trace = encode_traced(tokens);
  EncodeResult out;
  out.rows = std::move(trace.rows);
  out.tokens_encoded = trace.tokens_encoded;
  out.truncated = trace.truncated;
  return out;
}

void Encoder::backward(const EncodeTrace& trace, const MatrixXd& row_grads) {
  if (!trainable_) return;
  if (row_grads.rows() != trace.rows.rows() || row_grads.cols() != h_) {
    throw ArgumentError("row gradient shape does not match encoding");
  }
  mix_w_.grad.noalias() += row_grads.transpose() * trace.pooled_bases;
  VectorXd g_sum = row_grads.colwise().sum().transpose();
  mix_u_.grad.noalias() += g_sum * trace.context.transpose();
  mix_q_.grad.noalias() += g_sum * trace.context.array().square().matrix().transpose();
  mix_bias_.grad.col(0) += g_sum;
}

int Encoder::find_mask_index(const std::vector<std::string>& tokens) {
  int idx = -1;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] == kMaskToken) {
      if (idx >= 0) throw ArgumentError("input contains more than one mask slot");
      idx = static_cast<int>(i);
    }
  }
  if (idx < 0) throw ArgumentError("input contains no mask slot");
  return idx;
}

VectorXd Encoder::head_vector(const std::string& word) const {
  auto it = head_.find(word);
  if (it != head_.end()) return it->second.value.col(0);
  // Unseen words score zero everywhere; heads only carry what training put
  // into them.
  return VectorXd::Zero(h_);
}

Tensor& Encoder::ensure_head(const std::string& word) {
  auto it = head_.find(word);
  if (it == head_.end()) it = head_.emplace(word, Tensor(h_, 1)).first;
  return it->second;
}

std::vector<double> Encoder::mask_fill_logits(const std::vector<std::string>& tokens,
                                              const std::vector<std::string>& words) const {
  int mask_token = find_mask_index(tokens);
  EncodeResult enc = encode(tokens);
  if (mask_token >= enc.tokens_encoded) {
    throw ArgumentError("mask slot was truncated away; shorten the input");
  }
  VectorXd mask_row = enc.rows.row(mask_token + 1).transpose();
  std::vector<double> logits;
  logits.reserve(words.size());
  for (const auto& w : words) logits.push_back(head_vector(w).dot(mask_row));
  return logits;
}

std::vector<Tensor*> Encoder::trainable_tensors(const std::vector<std::string>& head_words) {
  std::vector<Tensor*> out{&mix_w_, &mix_u_, &mix_q_, &mix_bias_};
  for (const auto& w : head_words) out.push_back(&ensure_head(w));
  return out;
}

void Encoder::serialize(BinaryWriter& w) const {
  w.put_u32(kCheckpointVersion);
  w.put_u8(static_cast<uint8_t>(kind_));
  w.put_u32(static_cast<uint32_t>(h_));
  w.put_u64(vocab_seed_);
  w.put_u8(trainable_ ? 1 : 0);
  w.put_u32(static_cast<uint32_t>(max_len_));
  w.put_matrix(mix_w_.value);
  w.put_matrix(mix_u_.value);
  w.put_matrix(mix_q_.value);
  w.put_matrix(mix_bias_.value);
  w.put_u32(static_cast<uint32_t>(head_.size()));
  for (const auto& [word, tensor] : head_) {
    w.put_string(word);
    w.put_matrix(tensor.value);
  }
  w.put_u32(static_cast<uint32_t>(vocab_table_.size()));
  for (const auto& [word, vec] : vocab_table_) {
    w.put_string(word);
    w.put_matrix(vec);
  }
}

Encoder Encoder::deserialize(BinaryReader& r) {
  uint32_t version = r.get_u32();
  if (version != kCheckpointVersion) {
    throw ParseError("unsupported checkpoint version " + std::to_string(version));
  }
  Encoder enc;
  enc.kind_ = static_cast<EncoderKind>(r.get_u8());
  enc.h_ = static_cast<int>(r.get_u32());
  enc.vocab_seed_ = r.get_u64();
  enc.trainable_ = r.get_u8() != 0;
  enc.max_len_ = static_cast<int>(r.get_u32());
  enc.mix_w_ = Tensor(r.get_matrix());
  enc.mix_u_ = Tensor(r.get_matrix());
  enc.mix_q_ = Tensor(r.get_matrix());
  enc.mix_bias_ = Tensor(r.get_matrix());
  uint32_t heads = r.get_u32();
  for (uint32_t i = 0; i < heads; ++i) {
    std::string word = r.get_string();
    enc.head_.emplace(std::move(word), Tensor(r.get_matrix()));
  }
  uint32_t vocab = r.get_u32();
  for (uint32_t i = 0; i < vocab; ++i) {
    std::string word = r.get_string();
    enc.vocab_table_.emplace(std::move(word), VectorXd(r.get_matrix().col(0)));
  }
  return enc;
}

uint64_t Encoder::parameter_hash() const {
  BinaryWriter w;
  serialize(w);
  return fnv1a64(w.buffer().data(), w.buffer().size());
}

json encoder_sidecar(const Encoder& enc) {
  return json{{"backend_kind", enc.kind() == EncoderKind::reference ? "reference" : "pretrained"},
              {"h", enc.dim()},
              {"version", kCheckpointVersion}};
}

void save_encoder_checkpoint(const std::filesystem::path& bin_path, const Encoder& enc) {
  BinaryWriter w;
  enc.serialize(w);
  atomic_write_file(bin_path, w.buffer());
  std::filesystem::path sidecar = bin_path;
  sidecar += ".json";
  atomic_write_file(sidecar, encoder_sidecar(enc).dump(2) + "\n");
}

Encoder load_encoder_checkpoint(const std::filesystem::path& bin_path) {
  BinaryReader r(read_file(bin_path));
  return Encoder::deserialize(r);
}

}  // namespace evdet
