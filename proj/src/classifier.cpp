#include "evdet/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace evdet {

namespace {

void append_tokens(std::vector<std::string>& out, const std::vector<std::string>& extra) {
  out.insert(out.end(), extra.begin(), extra.end());
}

}  // namespace

QAPrompt render_prompt(const EventType& type, const std::vector<std::string>& sentence_tokens,
                       Span trigger, const Encoder& enc, Warnings* warnings) {
  int n = static_cast<int>(sentence_tokens.size());
  if (trigger.start < 0 || trigger.end < trigger.start || trigger.end >= n)
    throw ArgumentError("trigger span out of range for prompt");

  std::vector<std::string> name = split_whitespace(type.name);
  if (name.empty()) name.push_back(type.type_id);
  std::vector<std::string> definition = split_whitespace(type.definition);
  if (definition.empty())
    warn(warnings, "type " + type.type_id + " has an empty definition in its prompt");

  std::vector<std::string> trigger_tokens(sentence_tokens.begin() + trigger.start,
                                          sentence_tokens.begin() + trigger.end + 1);

  std::vector<std::string> head(name);
  append_tokens(head, {"is", "defined", "as"});
  append_tokens(head, definition);
  head.push_back(".");

  std::vector<std::string> tail{"."};
  tail.push_back("Does");
  append_tokens(tail, trigger_tokens);
  append_tokens(tail, {"indicate", "a"});
  append_tokens(tail, name);
  tail.push_back("event?");
  tail.push_back(kMaskToken);

  // Subword budget: the encoder keeps room for [CLS] and [SEP] itself.
  int budget = enc.max_len() - 2;
  int fixed = enc.subword_count(head) + enc.subword_count(tail);
  std::vector<int> cost(n);
  int window_cost = 0;
  for (int i = 0; i < n; ++i) {
    cost[i] = static_cast<int>(enc.subwords(sentence_tokens[i]).size());
    window_cost += cost[i];
  }

  int lo = 0, hi = n;  // window [lo, hi)
  bool shrunk = false;
  while (fixed + window_cost > budget && (lo < trigger.start || hi > trigger.end + 1)) {
    int left_gap = trigger.start - lo;
    int right_gap = hi - 1 - trigger.end;
    if (left_gap > right_gap) {
      window_cost -= cost[lo++];
    } else {
      window_cost -= cost[--hi];
    }
    shrunk = true;
  }
  if (fixed + window_cost > budget)
    throw ArgumentError("prompt for type " + type.type_id +
                        " does not fit the encoder budget even after truncation");
  if (shrunk)
    warn(warnings, "prompt context truncated to tokens [" + std::to_string(lo) + ", " +
                       std::to_string(hi) + ") around the trigger");

  QAPrompt prompt;
  prompt.tokens = std::move(head);
  prompt.tokens.insert(prompt.tokens.end(), sentence_tokens.begin() + lo,
                       sentence_tokens.begin() + hi);
  append_tokens(prompt.tokens, tail);
  prompt.mask_index = static_cast<int>(prompt.tokens.size()) - 1;
  return prompt;
}

double yes_probability(double logit_yes, double logit_no) {
  double m = std::max(logit_yes, logit_no);
  double ey = std::exp(logit_yes - m);
  double en = std::exp(logit_no - m);
  return ey / (ey + en);
}

ClassifierModel::ClassifierModel(Encoder encoder) : encoder_(std::move(encoder)) {
  encoder_.ensure_head("yes");
  encoder_.ensure_head("no");
}

PairScore ClassifierModel::score(const QAPrompt& prompt) const {
  std::vector<double> logits = encoder_.mask_fill_logits(prompt.tokens, {"yes", "no"});
  PairScore s;
  s.logit_yes = logits[0];
  s.logit_no = logits[1];
  s.p_yes = yes_probability(s.logit_yes, s.logit_no);
  return s;
}

double ClassifierModel::pair_loss_and_grad(const QAPrompt& prompt, double target) {
  EncodeTrace trace = encoder_.encode_traced(prompt.tokens);
  int mask_token = Encoder::find_mask_index(prompt.tokens);
  if (mask_token >= trace.tokens_encoded)
    throw ConsistencyError("mask slot fell outside the encoder budget");
  int mask_row = mask_token + 1;

  VectorXd v = trace.rows.row(mask_row).transpose();
  Tensor& u_yes = encoder_.ensure_head("yes");
  Tensor& u_no = encoder_.ensure_head("no");
  double a = u_yes.value.col(0).dot(v);
  double b = u_no.value.col(0).dot(v);

  double m = std::max(a, b);
  double lse = m + std::log(std::exp(a - m) + std::exp(b - m));
  double loss = lse - (target * a + (1.0 - target) * b);

  double p = yes_probability(a, b);
  double da = p - target;
  double db = target - p;
  u_yes.grad.col(0) += da * v;
  u_no.grad.col(0) += db * v;

  MatrixXd row_grads = MatrixXd::Zero(trace.rows.rows(), trace.rows.cols());
  row_grads.row(mask_row) = (da * u_yes.value.col(0) + db * u_no.value.col(0)).transpose();
  encoder_.backward(trace, row_grads);
  return loss;
}

std::vector<Tensor*> ClassifierModel::trainable_tensors() {
  return encoder_.trainable_tensors({"yes", "no"});
}

void ClassifierModel::serialize(BinaryWriter& w) const {
  w.put_string("EVCL");
  w.put_u32(1);
  encoder_.serialize(w);
}

ClassifierModel ClassifierModel::deserialize(BinaryReader& r) {
  if (r.get_string() != "EVCL") throw ParseError("not a classifier model blob");
  if (r.get_u32() != 1) throw ParseError("unsupported classifier model version");
  return ClassifierModel(Encoder::deserialize(r));
}

ClassifyResult classify_mention(const ClassifierModel& model, const Ontology& ont,
                                const std::vector<std::string>& sentence_tokens, Span trigger,
                                const std::vector<RankedCandidate>& candidates,
                                Warnings* warnings) {
  if (candidates.empty()) throw ArgumentError("classify_mention needs at least one candidate");
  ClassifyResult result;
  for (const RankedCandidate& c : candidates) {
    QAPrompt prompt = render_prompt(ont.type(c.type_id), sentence_tokens, trigger,
                                    model.encoder(), warnings);
    PairScore s = model.score(prompt);
    result.scores.push_back({c.type_id, c.ranker_score, s.p_yes});
  }
  std::sort(result.scores.begin(), result.scores.end(),
            [](const CandidateScore& a, const CandidateScore& b) {
              if (a.p_yes != b.p_yes) return a.p_yes > b.p_yes;
              if (a.ranker_score != b.ranker_score) return a.ranker_score > b.ranker_score;
              return a.type_id < b.type_id;
            });
  result.chosen_type = result.scores.front().type_id;
  return result;
}

std::vector<double> train_classifier(ClassifierModel& model,
                                     const std::vector<ClassifierExample>& examples,
                                     const Ontology& ont, const ClassifierTrainConfig& cfg,
                                     Warnings* warnings) {
  if (examples.empty()) throw ArgumentError("no classifier training examples");
  if (cfg.batch_size < 1) throw ArgumentError("batch_size must be >= 1");

  size_t n = examples.size();
  size_t batches_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  OptimConfig opt = cfg.optim;
  if (opt.total_steps == 0) opt.total_steps = static_cast<int>(batches_per_epoch) * cfg.epochs;
  AdamW optimizer(model.trainable_tensors(), opt);

  long negatives = 0;
  for (const auto& ex : examples) negatives += static_cast<long>(ex.negative_type_ids.size());
  if (negatives == 0) warn(warnings, "classifier training data has no negative pairs");

  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;

  std::vector<double> curve;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    DetRng rng(cfg.seed ^ (0x9e3779b97f4a7c15ULL * (epoch + 1)));
    rng.shuffle(order);
    double epoch_loss = 0.0;
    long epoch_pairs = 0;
    for (size_t off = 0; off < n; off += cfg.batch_size) {
      optimizer.zero_grad();
      double batch_loss = 0.0;
      long batch_pairs = 0;
      for (size_t k = off; k < std::min(n, off + static_cast<size_t>(cfg.batch_size)); ++k) {
        const ClassifierExample& ex = examples[order[k]];
        QAPrompt pos = render_prompt(ont.type(ex.positive_type_id), ex.sentence_tokens,
                                     ex.trigger, model.encoder(), warnings);
        batch_loss += model.pair_loss_and_grad(pos, 1.0);
        ++batch_pairs;
        for (const std::string& neg_id : ex.negative_type_ids) {
          QAPrompt neg = render_prompt(ont.type(neg_id), ex.sentence_tokens, ex.trigger,
                                       model.encoder(), warnings);
          batch_loss += model.pair_loss_and_grad(neg, 0.0);
          ++batch_pairs;
        }
      }
      double inv = 1.0 / static_cast<double>(batch_pairs);
      for (Tensor* t : model.trainable_tensors()) t->grad *= inv;
      optimizer.step();
      epoch_loss += batch_loss;
      epoch_pairs += batch_pairs;
    }
    curve.push_back(epoch_loss / static_cast<double>(epoch_pairs));
  }
  return curve;
}

std::vector<std::string> negatives_from_ranking(const std::vector<std::string>& ranked_type_ids,
                                                const std::string& positive_type_id, int top_k,
                                                int count) {
  std::vector<std::string> out;
  int limit = std::min<int>(top_k, static_cast<int>(ranked_type_ids.size()));
  for (int i = 0; i < limit && static_cast<int>(out.size()) < count; ++i)
    if (ranked_type_ids[i] != positive_type_id) out.push_back(ranked_type_ids[i]);
  return out;
}

SelfLabelOutcome self_label_mentions(const ClassifierModel& labeler,
                                     const std::vector<NoisyMention>& noisy, const Ontology& ont,
                                     const SelfLabelConfig& cfg, Warnings* warnings) {
  SelfLabelOutcome outcome;
  for (const NoisyMention& m : noisy) {
    if (m.candidate_type_ids.empty())
      throw ArgumentError("noisy mention " + m.mention_id + " has no candidates");
    PseudoLabelRecord rec;
    rec.mention_id = m.mention_id;
    for (const std::string& id : m.candidate_type_ids) {
      QAPrompt prompt =
          render_prompt(ont.type(id), m.sentence_tokens, m.trigger, labeler.encoder(), warnings);
      rec.candidate_p.emplace_back(id, labeler.score(prompt).p_yes);
    }
    std::sort(rec.candidate_p.begin(), rec.candidate_p.end(),
              [](const auto& a, const auto& b) {
                if (a.second != b.second) return a.second > b.second;
                return a.first < b.first;
              });
    double runner_up = rec.candidate_p.size() > 1 ? rec.candidate_p[1].second : 0.0;
    rec.margin = rec.candidate_p[0].second - runner_up;
    rec.selected = rec.margin >= cfg.margin_threshold;
    if (rec.selected) {
      rec.pseudo_label = rec.candidate_p[0].first;
      ++outcome.selected;
      ClassifierExample ex;
      ex.sentence_tokens = m.sentence_tokens;
      ex.trigger = m.trigger;
      ex.positive_type_id = rec.pseudo_label;
      // Committing to the pseudo label resolves the partial label, so the
      // rejected candidates stop being "possibly correct" and become the
      // hardest negatives available; they go first, and the ranking pool
      // only tops up the remaining slots.
      for (std::size_t i = 1;
           i < rec.candidate_p.size() &&
           static_cast<int>(ex.negative_type_ids.size()) < cfg.negatives_per_positive;
           ++i)
        ex.negative_type_ids.push_back(rec.candidate_p[i].first);
      for (const std::string& id : m.negative_pool) {
        if (static_cast<int>(ex.negative_type_ids.size()) >= cfg.negatives_per_positive) break;
        if (id == rec.pseudo_label) continue;
        if (std::find(ex.negative_type_ids.begin(), ex.negative_type_ids.end(), id) !=
            ex.negative_type_ids.end())
          continue;
        ex.negative_type_ids.push_back(id);
      }
      outcome.pseudo_examples.push_back(std::move(ex));
    }
    outcome.audit.push_back(std::move(rec));
  }
  return outcome;
}

SelfTrainResult self_train(const std::function<ClassifierModel()>& fresh_model,
                           const ClassifierModel& base, const std::vector<ClassifierExample>& clean,
                           const std::vector<NoisyMention>& noisy, const Ontology& ont,
                           const ClassifierTrainConfig& train_cfg, const SelfLabelConfig& cfg,
                           Warnings* warnings) {
  if (cfg.rounds < 1) throw ArgumentError("self-labeling needs at least one round");
  SelfTrainResult result{base, {}, 0, 0};
  const ClassifierModel* labeler = &base;
  for (int round = 0; round < cfg.rounds; ++round) {
    SelfLabelOutcome outcome = self_label_mentions(*labeler, noisy, ont, cfg, warnings);
    result.audit = outcome.audit;
    result.selected = outcome.selected;
    if (outcome.selected == 0) {
      warn(warnings, "self-labeling round " + std::to_string(round) +
                         " selected nothing; keeping the previous model");
      break;
    }
    std::vector<ClassifierExample> merged = clean;
    merged.insert(merged.end(), outcome.pseudo_examples.begin(), outcome.pseudo_examples.end());
    ClassifierModel retrained = fresh_model();
    train_classifier(retrained, merged, ont, train_cfg, warnings);
    result.final_model = std::move(retrained);
    labeler = &result.final_model;
    ++result.rounds_run;
  }
  return result;
}

void save_pseudo_label_audit(const std::filesystem::path& path,
                             const std::vector<PseudoLabelRecord>& records) {
  std::vector<json> out;
  for (const auto& r : records) {
    json candidates = json::array();
    for (const auto& [id, p] : r.candidate_p)
      candidates.push_back({{"type_id", id}, {"p_yes", p}});
    json rec{{"mention_id", r.mention_id},
             {"candidates", candidates},
             {"margin", r.margin},
             {"selected", r.selected}};
    if (r.selected) rec["pseudo_label"] = r.pseudo_label;
    out.push_back(std::move(rec));
  }
  write_jsonl(path, out);
}

std::vector<PseudoLabelRecord> load_pseudo_label_audit(const std::filesystem::path& path) {
  std::vector<PseudoLabelRecord> out;
  for (const json& rec : read_jsonl(path)) {
    PseudoLabelRecord r;
    r.mention_id = rec.at("mention_id").get<std::string>();
    for (const json& c : rec.at("candidates"))
      r.candidate_p.emplace_back(c.at("type_id").get<std::string>(),
                                 c.at("p_yes").get<double>());
    r.margin = rec.at("margin").get<double>();
    r.selected = rec.at("selected").get<bool>();
    if (rec.contains("pseudo_label")) r.pseudo_label = rec.at("pseudo_label").get<std::string>();
    out.push_back(std::move(r));
  }
  return out;
}

void save_classifier_model(const std::filesystem::path& path, const ClassifierModel& model) {
  BinaryWriter w;
  model.serialize(w);
  atomic_write_file(path, w.buffer());
  atomic_write_file(path.string() + ".json", encoder_sidecar(model.encoder()).dump(2) + "\n");
}

ClassifierModel load_classifier_model(const std::filesystem::path& path) {
  std::string blob = read_file(path);
  BinaryReader r(blob);
  return ClassifierModel::deserialize(r);
}

}  // namespace evdet
