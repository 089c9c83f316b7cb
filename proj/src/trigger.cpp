#include "evdet/trigger.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace evdet {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

double bce_with_logit(double logit, double target) {
  // max(z,0) - z*y + log(1 + exp(-|z|))
  return std::max(logit, 0.0) - logit * target + std::log1p(std::exp(-std::abs(logit)));
}

TriggerModel::TriggerModel(Encoder encoder, int max_span_len)
    : encoder_(std::move(encoder)), max_span_len_(max_span_len) {
  if (max_span_len_ < 1) throw ArgumentError("max_span_len must be >= 1");
  int h = encoder_.dim();
  start_weight_ = Tensor(h, 1);
  end_weight_ = Tensor(h, 1);
  part_weight_ = Tensor(h, 1);
}

std::vector<SpanScore> TriggerModel::score_rows(const MatrixXd& token_rows,
                                                const VectorXd& start_weight,
                                                const VectorXd& end_weight,
                                                const VectorXd& part_weight, int max_span_len) {
  // Row 0 carries sentence-level context and is never a span endpoint; token
  // i lives at row i + 1.
  const int n = static_cast<int>(token_rows.rows()) - 1;
  if (n <= 0) return {};
  MatrixXd rows = token_rows.bottomRows(n);
  VectorXd fs = rows * start_weight;
  VectorXd fe = rows * end_weight;
  VectorXd fp = rows * part_weight;
  VectorXd prefix = VectorXd::Zero(n + 1);
  for (int k = 0; k < n; ++k) prefix[k + 1] = prefix[k] + fp[k];

  std::vector<SpanScore> out;
  for (int i = 0; i < n; ++i) {
    int j_max = std::min(n - 1, i + max_span_len - 1);
    for (int j = i; j <= j_max; ++j) {
      double z = fs[i] + fe[j] + prefix[j + 1] - prefix[i];
      out.push_back({Span{i, j}, z, sigmoid(z)});
    }
  }
  return out;
}

std::vector<SpanScore> TriggerModel::score_spans(const std::vector<std::string>& tokens) const {
  EncodeResult enc = encoder_.encode(tokens);
  return score_rows(enc.rows, start_weight_.value.col(0), end_weight_.value.col(0),
                    part_weight_.value.col(0), max_span_len_);
}

double TriggerModel::compute_loss(const std::vector<TriggerExample>& batch) const {
  double total = 0.0;
  long count = 0;
  for (const auto& ex : batch) {
    std::set<Span> gold(ex.gold_spans.begin(), ex.gold_spans.end());
    for (const SpanScore& s : score_spans(ex.tokens)) {
      total += bce_with_logit(s.logit, gold.count(s.span) ? 1.0 : 0.0);
      ++count;
    }
  }
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

double TriggerModel::compute_loss_and_grad(const std::vector<TriggerExample>& batch) {
  double total = 0.0;
  long count = 0;
  const int h = encoder_.dim();

  for (const auto& ex : batch) {
    EncodeTrace trace = encoder_.encode_traced(ex.tokens);
    const int n = trace.tokens_encoded;
    if (n == 0) continue;
    MatrixXd token_rows = trace.rows.bottomRows(n);
    std::set<Span> gold(ex.gold_spans.begin(), ex.gold_spans.end());

    VectorXd fs = token_rows * start_weight_.value.col(0);
    VectorXd fe = token_rows * end_weight_.value.col(0);
    VectorXd fp = token_rows * part_weight_.value.col(0);
    VectorXd prefix = VectorXd::Zero(n + 1);
    for (int k = 0; k < n; ++k) prefix[k + 1] = prefix[k] + fp[k];

    // Per-token coefficients of d(loss)/d(f): range updates for the part
    // term go through a difference array.
    VectorXd a_start = VectorXd::Zero(n), a_end = VectorXd::Zero(n);
    VectorXd part_diff = VectorXd::Zero(n + 1);

    for (int i = 0; i < n; ++i) {
      int j_max = std::min(n - 1, i + max_span_len_ - 1);
      for (int j = i; j <= j_max; ++j) {
        double z = fs[i] + fe[j] + prefix[j + 1] - prefix[i];
        double y = gold.count(Span{i, j}) ? 1.0 : 0.0;
        total += bce_with_logit(z, y);
        ++count;
        double g = sigmoid(z) - y;
        a_start[i] += g;
        a_end[j] += g;
        part_diff[i] += g;
        part_diff[j + 1] -= g;
      }
    }

    VectorXd a_part = VectorXd::Zero(n);
    double run = 0.0;
    for (int k = 0; k < n; ++k) {
      run += part_diff[k];
      a_part[k] = run;
    }

    start_weight_.grad.col(0) += token_rows.transpose() * a_start;
    end_weight_.grad.col(0) += token_rows.transpose() * a_end;
    part_weight_.grad.col(0) += token_rows.transpose() * a_part;

    MatrixXd row_grads = MatrixXd::Zero(n + 1, h);
    row_grads.bottomRows(n) = a_start * start_weight_.value.col(0).transpose() +
                              a_end * end_weight_.value.col(0).transpose() +
                              a_part * part_weight_.value.col(0).transpose();
    encoder_.backward(trace, row_grads);
  }

  if (count == 0) return 0.0;
  // Loss is the mean over spans; the per-span grads above were accumulated
  // with weight 1, so scale. Call with zeroed gradients.
  double inv = 1.0 / static_cast<double>(count);
  for (Tensor* t : trainable_tensors()) t->grad *= inv;
  return total * inv;
}

std::vector<Tensor*> TriggerModel::trainable_tensors() {
  std::vector<Tensor*> out = {&start_weight_, &end_weight_, &part_weight_};
  for (Tensor* t : encoder_.trainable_tensors()) out.push_back(t);
  return out;
}

void TriggerModel::serialize(BinaryWriter& w) const {
  w.put_string("EVTR");
  w.put_u32(1);
  w.put_u32(static_cast<uint32_t>(max_span_len_));
  w.put_matrix(start_weight_.value);
  w.put_matrix(end_weight_.value);
  w.put_matrix(part_weight_.value);
  encoder_.serialize(w);
}

TriggerModel TriggerModel::deserialize(BinaryReader& r) {
  if (r.get_string() != "EVTR") throw ParseError("not a trigger model blob");
  uint32_t version = r.get_u32();
  if (version != 1) throw ParseError("unsupported trigger model version");
  int max_span_len = static_cast<int>(r.get_u32());
  MatrixXd ws = r.get_matrix(), we = r.get_matrix(), wp = r.get_matrix();
  Encoder enc = Encoder::deserialize(r);
  TriggerModel m(std::move(enc), max_span_len);
  m.start_weight_.value = ws;
  m.end_weight_.value = we;
  m.part_weight_.value = wp;
  return m;
}

std::vector<double> train_trigger_model(TriggerModel& model,
                                        const std::vector<TriggerExample>& examples,
                                        const TriggerTrainConfig& cfg, Warnings* warnings) {
  if (examples.empty()) throw ArgumentError("no trigger training examples");
  if (cfg.batch_size < 1) throw ArgumentError("batch_size must be >= 1");
  if (cfg.epochs < 0) throw ArgumentError("epochs must be >= 0");
  bool any_positive = false;
  for (const auto& ex : examples)
    if (!ex.gold_spans.empty()) any_positive = true;
  if (!any_positive) warn(warnings, "trigger training data has no positive spans");

  size_t n = examples.size();
  size_t batches_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  OptimConfig opt = cfg.optim;
  if (opt.total_steps == 0) opt.total_steps = static_cast<int>(batches_per_epoch) * cfg.epochs;
  AdamW optimizer(model.trainable_tensors(), opt);

  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;

  std::vector<double> curve;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    DetRng rng(cfg.seed ^ (0x9e3779b97f4a7c15ULL * (epoch + 1)));
    rng.shuffle(order);
    double epoch_loss = 0.0;
    size_t epoch_batches = 0;
    for (size_t off = 0; off < n; off += cfg.batch_size) {
      std::vector<TriggerExample> batch;
      for (size_t k = off; k < std::min(n, off + cfg.batch_size); ++k)
        batch.push_back(examples[order[k]]);
      optimizer.zero_grad();
      epoch_loss += model.compute_loss_and_grad(batch);
      ++epoch_batches;
      optimizer.step();
    }
    curve.push_back(epoch_loss / static_cast<double>(epoch_batches));
  }
  return curve;
}

std::vector<SpanScore> decode_triggers(std::vector<SpanScore> scored, double threshold,
                                       OverlapPolicy policy) {
  (void)policy;  // only greedy is defined
  std::vector<SpanScore> kept;
  for (const auto& s : scored)
    if (s.probability >= threshold) kept.push_back(s);
  std::sort(kept.begin(), kept.end(), [](const SpanScore& a, const SpanScore& b) {
    if (a.logit != b.logit) return a.logit > b.logit;
    if (a.span.start != b.span.start) return a.span.start < b.span.start;
    return a.span.length() < b.span.length();
  });
  std::vector<SpanScore> selected;
  for (const auto& s : kept) {
    bool clashes = false;
    for (const auto& t : selected)
      if (s.span.overlaps(t.span)) {
        clashes = true;
        break;
      }
    if (!clashes) selected.push_back(s);
  }
  return selected;
}

void save_trigger_predictions(const std::filesystem::path& path,
                              const std::vector<TriggerPrediction>& preds) {
  std::vector<json> records;
  for (const auto& p : preds) {
    json spans = json::array();
    for (const auto& s : p.spans)
      spans.push_back({{"start", s.span.start}, {"end", s.span.end}, {"prob", s.probability}});
    records.push_back({{"sent_id", p.sent_id}, {"spans", spans}});
  }
  write_jsonl(path, records);
}

std::vector<TriggerPrediction> load_trigger_predictions(const std::filesystem::path& path) {
  std::vector<TriggerPrediction> out;
  for (const json& rec : read_jsonl(path)) {
    TriggerPrediction p;
    p.sent_id = rec.at("sent_id").get<std::string>();
    for (const json& s : rec.at("spans")) {
      SpanScore ss;
      ss.span = Span{s.at("start").get<int>(), s.at("end").get<int>()};
      ss.probability = s.at("prob").get<double>();
      if (!(ss.probability >= 0.0 && ss.probability <= 1.0))
        throw ParseError("probability outside [0,1] in " + path.string());
      if (ss.probability <= 0.0)
        ss.logit = -std::numeric_limits<double>::infinity();
      else if (ss.probability >= 1.0)
        ss.logit = std::numeric_limits<double>::infinity();
      else
        ss.logit = std::log(ss.probability) - std::log1p(-ss.probability);
      p.spans.push_back(ss);
    }
    out.push_back(p);
  }
  return out;
}

void save_trigger_model(const std::filesystem::path& path, const TriggerModel& model) {
  BinaryWriter w;
  model.serialize(w);
  atomic_write_file(path, w.buffer());
  atomic_write_file(path.string() + ".json", encoder_sidecar(model.encoder()).dump(2) + "\n");
}

TriggerModel load_trigger_model(const std::filesystem::path& path) {
  std::string blob = read_file(path);
  BinaryReader r(blob);
  return TriggerModel::deserialize(r);
}

}  // namespace evdet
