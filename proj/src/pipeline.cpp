#include "evdet/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <set>

namespace evdet {

namespace fs = std::filesystem;

namespace {

void check_keys(const json& doc, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, value] : doc.items())
    if (!allowed.count(key))
      throw ValidationError("unknown config key '" + key + "' in " + where);
}

template <typename T>
void take(const json& doc, const char* key, T& out) {
  if (doc.contains(key)) out = doc.at(key).get<T>();
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const json& doc) {
  PipelineConfig cfg;
  check_keys(doc,
             {"seed", "ontology_path", "corpus_path", "out_dir", "data", "encoder", "trigger",
              "ranker", "classifier", "self_label", "eval"},
             "config");
  take(doc, "seed", cfg.seed);
  take(doc, "ontology_path", cfg.ontology_path);
  take(doc, "corpus_path", cfg.corpus_path);
  take(doc, "out_dir", cfg.out_dir);

  if (doc.contains("data")) {
    const json& d = doc.at("data");
    check_keys(d,
               {"train_ratio", "dev_ratio", "test_ratio", "min_mentions", "drop_modal_for_amr",
                "filter_rules_path"},
               "data");
    take(d, "train_ratio", cfg.data.train_ratio);
    take(d, "dev_ratio", cfg.data.dev_ratio);
    take(d, "test_ratio", cfg.data.test_ratio);
    take(d, "min_mentions", cfg.data.min_mentions);
    take(d, "drop_modal_for_amr", cfg.data.drop_modal_for_amr);
    take(d, "filter_rules_path", cfg.data.filter_rules_path);
  }
  if (doc.contains("encoder")) {
    const json& d = doc.at("encoder");
    check_keys(d, {"dim", "vocab_seed"}, "encoder");
    take(d, "dim", cfg.encoder.dim);
    take(d, "vocab_seed", cfg.encoder.vocab_seed);
  }
  if (doc.contains("trigger")) {
    const json& d = doc.at("trigger");
    check_keys(d,
               {"epochs", "batch_size", "max_len", "lr", "weight_decay", "warmup_steps",
                "max_span_len", "threshold"},
               "trigger");
    take(d, "epochs", cfg.trigger.epochs);
    take(d, "batch_size", cfg.trigger.batch_size);
    take(d, "max_len", cfg.trigger.max_len);
    take(d, "lr", cfg.trigger.lr);
    take(d, "weight_decay", cfg.trigger.weight_decay);
    take(d, "warmup_steps", cfg.trigger.warmup_steps);
    take(d, "max_span_len", cfg.trigger.max_span_len);
    take(d, "threshold", cfg.trigger.threshold);
  }
  if (doc.contains("ranker")) {
    const json& d = doc.at("ranker");
    check_keys(d,
               {"epochs", "batch_size", "max_len", "lr", "weight_decay", "warmup_steps", "margin",
                "negatives", "top_k"},
               "ranker");
    take(d, "epochs", cfg.ranker.epochs);
    take(d, "batch_size", cfg.ranker.batch_size);
    take(d, "max_len", cfg.ranker.max_len);
    take(d, "lr", cfg.ranker.lr);
    take(d, "weight_decay", cfg.ranker.weight_decay);
    take(d, "warmup_steps", cfg.ranker.warmup_steps);
    take(d, "margin", cfg.ranker.margin);
    take(d, "negatives", cfg.ranker.negatives);
    take(d, "top_k", cfg.ranker.top_k);
  }
  if (doc.contains("classifier")) {
    const json& d = doc.at("classifier");
    check_keys(d,
               {"epochs", "batch_size", "max_len", "lr", "weight_decay", "warmup_steps",
                "negatives"},
               "classifier");
    take(d, "epochs", cfg.classifier.epochs);
    take(d, "batch_size", cfg.classifier.batch_size);
    take(d, "max_len", cfg.classifier.max_len);
    take(d, "lr", cfg.classifier.lr);
    take(d, "weight_decay", cfg.classifier.weight_decay);
    take(d, "warmup_steps", cfg.classifier.warmup_steps);
    take(d, "negatives", cfg.classifier.negatives);
  }
  if (doc.contains("self_label")) {
    const json& d = doc.at("self_label");
    check_keys(d, {"margin_threshold", "rounds"}, "self_label");
    take(d, "margin_threshold", cfg.self_label.margin_threshold);
    take(d, "rounds", cfg.self_label.rounds);
  }
  if (doc.contains("eval")) {
    const json& d = doc.at("eval");
    check_keys(d, {"split", "ks", "prioritize_hierarchy"}, "eval");
    take(d, "split", cfg.eval.split);
    take(d, "ks", cfg.eval.ks);
    take(d, "prioritize_hierarchy", cfg.eval.prioritize_hierarchy);
  }

  if (cfg.eval.split != "dev" && cfg.eval.split != "test")
    throw ValidationError("eval.split must be 'dev' or 'test'");
  if (cfg.encoder.dim < 4) throw ValidationError("encoder.dim must be >= 4");
  return cfg;
}

json PipelineConfig::to_json() const {
  return json{
      {"seed", seed},
      {"ontology_path", ontology_path},
      {"corpus_path", corpus_path},
      {"out_dir", out_dir},
      {"data",
       {{"train_ratio", data.train_ratio},
        {"dev_ratio", data.dev_ratio},
        {"test_ratio", data.test_ratio},
        {"min_mentions", data.min_mentions},
        {"drop_modal_for_amr", data.drop_modal_for_amr},
        {"filter_rules_path", data.filter_rules_path}}},
      {"encoder", {{"dim", encoder.dim}, {"vocab_seed", encoder.vocab_seed}}},
      {"trigger",
       {{"epochs", trigger.epochs},
        {"batch_size", trigger.batch_size},
        {"max_len", trigger.max_len},
        {"lr", trigger.lr},
        {"weight_decay", trigger.weight_decay},
        {"warmup_steps", trigger.warmup_steps},
        {"max_span_len", trigger.max_span_len},
        {"threshold", trigger.threshold}}},
      {"ranker",
       {{"epochs", ranker.epochs},
        {"batch_size", ranker.batch_size},
        {"max_len", ranker.max_len},
        {"lr", ranker.lr},
        {"weight_decay", ranker.weight_decay},
        {"warmup_steps", ranker.warmup_steps},
        {"margin", ranker.margin},
        {"negatives", ranker.negatives},
        {"top_k", ranker.top_k}}},
      {"classifier",
       {{"epochs", classifier.epochs},
        {"batch_size", classifier.batch_size},
        {"max_len", classifier.max_len},
        {"lr", classifier.lr},
        {"weight_decay", classifier.weight_decay},
        {"warmup_steps", classifier.warmup_steps},
        {"negatives", classifier.negatives}}},
      {"self_label",
       {{"margin_threshold", self_label.margin_threshold}, {"rounds", self_label.rounds}}},
      {"eval",
       {{"split", eval.split},
        {"ks", eval.ks},
        {"prioritize_hierarchy", eval.prioritize_hierarchy}}}};
}

PipelineConfig PipelineConfig::load(const fs::path& file, const std::vector<std::string>& overrides) {
  json doc;
  try {
    doc = json::parse(read_file(file));
  } catch (const json::parse_error& e) {
    throw ParseError("config " + file.string() + ": " + e.what());
  }
  for (const std::string& ov : overrides) {
    size_t eq = ov.find('=');
    if (eq == std::string::npos)
      throw ArgumentError("override '" + ov + "' is not of the form key=value");
    std::string key = ov.substr(0, eq);
    std::string value = ov.substr(eq + 1);
    json parsed;
    try {
      parsed = json::parse(value);
    } catch (const json::parse_error&) {
      parsed = value;  // bare strings are fine
    }
    json* node = &doc;
    size_t pos = 0;
    for (;;) {
      size_t dot = key.find('.', pos);
      std::string part = key.substr(pos, dot == std::string::npos ? dot : dot - pos);
      if (part.empty()) throw ArgumentError("override key '" + key + "' has an empty segment");
      if (dot == std::string::npos) {
        (*node)[part] = parsed;
        break;
      }
      node = &(*node)[part];
      pos = dot + 1;
    }
  }
  return from_json(doc);
}

uint64_t PipelineConfig::config_hash() const {
  json doc = to_json();
  doc.erase("out_dir");  // relocating outputs does not invalidate them
  return fnv1a64(doc.dump());
}

const char* to_string(Stage s) {
  switch (s) {
    case Stage::build_data: return "build-data";
    case Stage::train_ti: return "train-ti";
    case Stage::train_rank: return "train-rank";
    case Stage::build_index: return "build-index";
    case Stage::train_cls_base: return "train-cls-base";
    case Stage::self_label: return "self-label";
    case Stage::train_cls_final: return "train-cls-final";
    case Stage::predict: return "predict";
    case Stage::evaluate: return "evaluate";
    case Stage::error_analysis: return "error-analysis";
  }
  throw ArgumentError("unknown stage");
}

const std::vector<Stage>& all_stages() {
  static const std::vector<Stage> order = {
      Stage::build_data,     Stage::train_ti,   Stage::train_rank,     Stage::build_index,
      Stage::train_cls_base, Stage::self_label, Stage::train_cls_final, Stage::predict,
      Stage::evaluate,       Stage::error_analysis};
  return order;
}

Stage stage_from_name(const std::string& name) {
  for (Stage s : all_stages())
    if (name == to_string(s)) return s;
  throw ArgumentError("unknown stage '" + name + "'");
}

namespace {

std::vector<Stage> deps_of(Stage s) {
  switch (s) {
    case Stage::build_data: return {};
    case Stage::train_ti: return {Stage::build_data};
    case Stage::train_rank: return {Stage::build_data};
    case Stage::build_index: return {Stage::build_data, Stage::train_rank};
    case Stage::train_cls_base: return {Stage::build_data, Stage::train_rank, Stage::build_index};
    case Stage::self_label:
      return {Stage::build_data, Stage::train_rank, Stage::build_index, Stage::train_cls_base};
    case Stage::train_cls_final:
      return {Stage::build_data, Stage::train_rank, Stage::build_index, Stage::self_label};
    case Stage::predict:
      return {Stage::build_data, Stage::train_ti, Stage::train_rank, Stage::build_index,
              Stage::train_cls_final};
    case Stage::evaluate: return {Stage::build_data, Stage::predict};
    case Stage::error_analysis: return {Stage::build_data, Stage::predict};
  }
  throw ArgumentError("unknown stage");
}

// Exclusive ownership of the output directory for one stage run.
class DirLock {
 public:
  explicit DirLock(const fs::path& dir) : path_(dir / ".lock") {
    std::error_code ec;
    fs::create_directories(dir, ec);
    int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
      if (errno == EEXIST)
        throw ConsistencyError("output directory is locked (" + path_.string() +
                               " exists); another run owns it, or a crashed run left it behind");
      throw IoError("cannot create lock file " + path_.string());
    }
    ::close(fd);
  }
  ~DirLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  fs::path path_;
};

// Collects input/output hashes while a stage runs, then persists the run
// record. Paths under out_dir are stored relative to it.
class ManifestBuilder {
 public:
  ManifestBuilder(const PipelineConfig& cfg, Stage stage) : cfg_(cfg), stage_(stage) {}

  std::string display(const fs::path& p) const {
    fs::path rel = p.lexically_relative(cfg_.out());
    if (!rel.empty() && rel.native().rfind("..", 0) != 0) return rel.generic_string();
    return p.generic_string();
  }

  void input(const fs::path& p) { inputs_[display(p)] = to_hex(hash_file(p)); }
  void output(const fs::path& p) { outputs_[display(p)] = to_hex(hash_file(p)); }

  void save() const {
    json doc{{"stage", to_string(stage_)},
             {"version", kPipelineVersion},
             {"config_hash", to_hex(cfg_.config_hash())},
             {"inputs", inputs_},
             {"outputs", outputs_}};
    fs::create_directories(cfg_.manifest_dir());
    atomic_write_file(cfg_.manifest_dir() / (std::string(to_string(stage_)) + ".json"),
                      doc.dump(2) + "\n");
  }

 private:
  const PipelineConfig& cfg_;
  Stage stage_;
  std::map<std::string, std::string> inputs_, outputs_;
};

void require_deps(const PipelineConfig& cfg, Stage stage) {
  for (Stage dep : deps_of(stage)) {
    fs::path mpath = cfg.manifest_dir() / (std::string(to_string(dep)) + ".json");
    if (!fs::exists(mpath))
      throw DependencyError(std::string("stage '") + to_string(stage) + "' requires '" +
                            to_string(dep) + "' to run first");
    json doc;
    try {
      doc = json::parse(read_file(mpath));
    } catch (const json::parse_error& e) {
      throw ParseError("manifest " + mpath.string() + ": " + e.what());
    }
    for (const auto& [rel, hash] : doc.at("outputs").items()) {
      fs::path p = fs::path(rel).is_absolute() ? fs::path(rel) : cfg.out() / rel;
      if (!fs::exists(p))
        throw DependencyError("artifact " + rel + " from stage '" + to_string(dep) +
                              "' is missing; rerun '" + to_string(dep) + "'");
      if (to_hex(hash_file(p)) != hash.get<std::string>())
        throw ConsistencyError("artifact " + rel + " no longer matches what stage '" +
                               to_string(dep) + "' wrote; rerun '" + to_string(dep) + "'");
    }
  }
}

uint64_t stage_seed(const PipelineConfig& cfg, const char* salt) {
  return cfg.seed ^ fnv1a64(salt);
}

Encoder make_encoder(const PipelineConfig& cfg, int max_len) {
  Encoder enc = Encoder::reference(cfg.encoder.dim, cfg.encoder.vocab_seed);
  enc.set_max_len(max_len);
  return enc;
}

OptimConfig make_optim(double lr, double weight_decay, int warmup_steps) {
  OptimConfig o;
  o.lr = lr;
  o.weight_decay = weight_decay;
  o.warmup_steps = warmup_steps;
  return o;
}

json curve_json(const std::vector<double>& curve) {
  json epochs = json::array();
  for (size_t i = 0; i < curve.size(); ++i)
    epochs.push_back({{"epoch", i}, {"loss", curve[i]}});
  return json{{"epochs", epochs}};
}

fs::path split_path(const PipelineConfig& cfg, const std::string& split) {
  return cfg.data_dir() / (split + ".jsonl");
}

// Per-sentence ranking cache for the example builders.
class SentenceRankings {
 public:
  SentenceRankings(const RankerModel& ranker, const TypeIndex& index)
      : ranker_(ranker), index_(index) {}

  const std::vector<RankedType>& of(const Sentence& sent) {
    auto it = cache_.find(sent.sent_id);
    if (it == cache_.end())
      it = cache_.emplace(sent.sent_id, rank_types(ranker_, index_, sent.tokens)).first;
    return it->second;
  }

  std::vector<std::string> ids_of(const Sentence& sent) {
    std::vector<std::string> ids;
    for (const RankedType& r : of(sent)) ids.push_back(r.type_id);
    return ids;
  }

 private:
  const RankerModel& ranker_;
  const TypeIndex& index_;
  std::map<std::string, std::vector<RankedType>> cache_;
};

}  // namespace

std::vector<TriggerExample> trigger_examples(const Corpus& corpus) {
  std::vector<TriggerExample> out;
  for (const Sentence& s : corpus.sentences) {
    TriggerExample ex;
    ex.tokens = s.tokens;
    for (const EventMention& m : s.mentions) ex.gold_spans.push_back(m.span);
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<RankerExample> ranker_examples(const Corpus& corpus, Warnings* warnings) {
  std::vector<RankerExample> out;
  int skipped = 0;
  for (const Sentence& s : corpus.sentences)
    for (const EventMention& m : s.mentions) {
      if (m.candidate_type_ids.empty()) {
        ++skipped;
        continue;
      }
      out.push_back({s.tokens, m.candidate_type_ids});
    }
  if (skipped > 0)
    warn(warnings, std::to_string(skipped) + " mentions without candidate sets skipped");
  return out;
}

std::vector<ClassifierExample> clean_classifier_examples(const Corpus& corpus,
                                                         const RankerModel& ranker,
                                                         const TypeIndex& index, int top_k,
                                                         int negatives) {
  SentenceRankings rankings(ranker, index);
  std::vector<ClassifierExample> out;
  for (const Sentence& s : corpus.sentences)
    for (const EventMention& m : s.mentions) {
      if (m.candidate_type_ids.size() != 1) continue;
      ClassifierExample ex;
      ex.sentence_tokens = s.tokens;
      ex.trigger = m.span;
      ex.positive_type_id = m.candidate_type_ids[0];
      ex.negative_type_ids =
          negatives_from_ranking(rankings.ids_of(s), ex.positive_type_id, top_k, negatives);
      out.push_back(std::move(ex));
    }
  return out;
}

std::vector<NoisyMention> noisy_mentions(const Corpus& corpus, const RankerModel& ranker,
                                         const TypeIndex& index, int top_k) {
  SentenceRankings rankings(ranker, index);
  std::vector<NoisyMention> out;
  for (const Sentence& s : corpus.sentences)
    for (const EventMention& m : s.mentions) {
      if (m.candidate_type_ids.size() < 2) continue;
      NoisyMention n;
      n.mention_id = m.mention_id;
      n.sentence_tokens = s.tokens;
      n.trigger = m.span;
      n.candidate_type_ids = m.candidate_type_ids;
      std::vector<std::string> ids = rankings.ids_of(s);
      ids.resize(std::min(ids.size(), static_cast<size_t>(top_k)));
      n.negative_pool = std::move(ids);
      out.push_back(std::move(n));
    }
  return out;
}

std::vector<SentenceOutput> predict_end_to_end(const TriggerModel& trigger,
                                               const RankerModel& ranker, const TypeIndex& index,
                                               const ClassifierModel& classifier,
                                               const Ontology& ont, const Corpus& corpus,
                                               double threshold, int top_k_arg,
                                               Warnings* warnings) {
  check_index_fresh(index, ranker);
  std::vector<SentenceOutput> out;
  for (const Sentence& s : corpus.sentences) {
    SentenceOutput so;
    so.sent_id = s.sent_id;
    std::vector<SpanScore> decoded = decode_triggers(trigger.score_spans(s.tokens), threshold);
    std::sort(decoded.begin(), decoded.end(),
              [](const SpanScore& a, const SpanScore& b) { return a.span < b.span; });
    if (!decoded.empty()) {
      // One ranking serves every trigger of the sentence.
      std::vector<RankedType> ranking = rank_types(ranker, index, s.tokens);
      std::vector<RankedCandidate> candidates;
      for (const RankedType& r : top_k(ranking, top_k_arg))
        candidates.push_back({r.type_id, r.score});
      for (const SpanScore& span : decoded) {
        ClassifyResult res =
            classify_mention(classifier, ont, s.tokens, span.span, candidates, warnings);
        PredictedEvent ev;
        ev.span = span.span;
        ev.prob = span.probability;
        ev.chosen_type = res.chosen_type;
        for (const CandidateScore& c : res.scores) ev.ranked.push_back({c.type_id, c.p_yes});
        for (size_t i = candidates.size(); i < ranking.size(); ++i)
          ev.ranked.push_back(ranking[i]);
        so.events.push_back(std::move(ev));
      }
    }
    out.push_back(std::move(so));
  }
  return out;
}

std::vector<GoldSpanRecord> per_stage_records(const RankerModel& ranker, const TypeIndex& index,
                                              const ClassifierModel& classifier,
                                              const Ontology& ont, const Corpus& corpus,
                                              int top_k_arg, Warnings* warnings) {
  check_index_fresh(index, ranker);
  std::vector<GoldSpanRecord> out;
  for (const Sentence& s : corpus.sentences) {
    if (s.mentions.empty()) continue;
    std::vector<RankedType> ranking = rank_types(ranker, index, s.tokens);
    std::vector<std::string> ranking_ids;
    for (const RankedType& r : ranking) ranking_ids.push_back(r.type_id);
    std::vector<RankedCandidate> candidates;
    for (const RankedType& r : top_k(ranking, top_k_arg))
      candidates.push_back({r.type_id, r.score});
    for (const EventMention& m : s.mentions) {
      if (!m.gold_type_id) {
        warn(warnings, "mention " + m.mention_id + " has no gold type; skipped in diagnostics");
        continue;
      }
      GoldSpanRecord rec;
      rec.mention_id = m.mention_id;
      rec.gold_type = *m.gold_type_id;
      rec.ranking = ranking_ids;
      ClassifyResult res =
          classify_mention(classifier, ont, s.tokens, m.span, candidates, warnings);
      for (const CandidateScore& c : res.scores) rec.classifier_order.push_back(c.type_id);
      out.push_back(std::move(rec));
    }
  }
  return out;
}

void save_predictions(const fs::path& path, const std::vector<SentenceOutput>& preds) {
  std::vector<json> records;
  for (const SentenceOutput& so : preds) {
    json events = json::array();
    for (const PredictedEvent& ev : so.events) {
      json ranked = json::array();
      for (const RankedType& r : ev.ranked)
        ranked.push_back({{"type_id", r.type_id}, {"score", r.score}});
      events.push_back({{"start", ev.span.start},
                        {"end", ev.span.end},
                        {"prob", ev.prob},
                        {"chosen_type", ev.chosen_type},
                        {"ranked", ranked}});
    }
    records.push_back({{"sent_id", so.sent_id}, {"events", events}});
  }
  write_jsonl(path, records);
}

std::vector<SentenceOutput> load_predictions(const fs::path& path) {
  std::vector<SentenceOutput> out;
  for (const json& rec : read_jsonl(path)) {
    SentenceOutput so;
    so.sent_id = rec.at("sent_id").get<std::string>();
    for (const json& e : rec.at("events")) {
      PredictedEvent ev;
      ev.span = Span{e.at("start").get<int>(), e.at("end").get<int>()};
      ev.prob = e.at("prob").get<double>();
      ev.chosen_type = e.at("chosen_type").get<std::string>();
      for (const json& r : e.at("ranked"))
        ev.ranked.push_back({r.at("type_id").get<std::string>(), r.at("score").get<double>()});
      so.events.push_back(std::move(ev));
    }
    out.push_back(std::move(so));
  }
  return out;
}

PredBySentence predictions_for_metrics(const std::vector<SentenceOutput>& preds) {
  PredBySentence out;
  for (const SentenceOutput& so : preds) {
    std::vector<PredictedMention> mentions;
    for (const PredictedEvent& ev : so.events) {
      PredictedMention m;
      m.span = ev.span;
      m.chosen_type = ev.chosen_type;
      for (const RankedType& r : ev.ranked) m.ranked_types.push_back(r.type_id);
      mentions.push_back(std::move(m));
    }
    out[so.sent_id] = std::move(mentions);
  }
  return out;
}

void save_per_stage_records(const fs::path& path, const std::vector<GoldSpanRecord>& records) {
  std::vector<json> out;
  for (const GoldSpanRecord& r : records)
    out.push_back({{"mention_id", r.mention_id},
                   {"gold_type", r.gold_type},
                   {"ranking", r.ranking},
                   {"classifier_order", r.classifier_order}});
  write_jsonl(path, out);
}

std::vector<GoldSpanRecord> load_per_stage_records(const fs::path& path) {
  std::vector<GoldSpanRecord> out;
  for (const json& rec : read_jsonl(path)) {
    GoldSpanRecord r;
    r.mention_id = rec.at("mention_id").get<std::string>();
    r.gold_type = rec.at("gold_type").get<std::string>();
    r.ranking = rec.at("ranking").get<std::vector<std::string>>();
    r.classifier_order = rec.at("classifier_order").get<std::vector<std::string>>();
    out.push_back(std::move(r));
  }
  return out;
}

void save_classifier_examples(const fs::path& path,
                              const std::vector<ClassifierExample>& examples) {
  std::vector<json> out;
  for (const ClassifierExample& ex : examples)
    out.push_back({{"tokens", ex.sentence_tokens},
                   {"start", ex.trigger.start},
                   {"end", ex.trigger.end},
                   {"positive_type_id", ex.positive_type_id},
                   {"negative_type_ids", ex.negative_type_ids}});
  write_jsonl(path, out);
}

std::vector<ClassifierExample> load_classifier_examples(const fs::path& path) {
  std::vector<ClassifierExample> out;
  for (const json& rec : read_jsonl(path)) {
    ClassifierExample ex;
    ex.sentence_tokens = rec.at("tokens").get<std::vector<std::string>>();
    ex.trigger = Span{rec.at("start").get<int>(), rec.at("end").get<int>()};
    ex.positive_type_id = rec.at("positive_type_id").get<std::string>();
    ex.negative_type_ids = rec.at("negative_type_ids").get<std::vector<std::string>>();
    out.push_back(std::move(ex));
  }
  return out;
}

namespace {

void stage_build_data(const PipelineConfig& cfg, ManifestBuilder& mf, Warnings* warnings) {
  if (cfg.ontology_path.empty() || cfg.corpus_path.empty())
    throw ValidationError("config needs ontology_path and corpus_path");
  mf.input(cfg.ontology_path);
  mf.input(cfg.corpus_path);

  Ontology raw = load_ontology(cfg.ontology_path, warnings);
  Corpus corpus = load_corpus(cfg.corpus_path);

  CleanOptions copt;
  copt.drop_modal_for_amr = cfg.data.drop_modal_for_amr;
  CleanReport creport = clean_corpus(corpus, copt);

  FilterRules rules;
  if (!cfg.data.filter_rules_path.empty()) {
    mf.input(cfg.data.filter_rules_path);
    try {
      rules = filter_rules_from_json(json::parse(read_file(cfg.data.filter_rules_path)));
    } catch (const json::parse_error& e) {
      throw ParseError("filter rules " + cfg.data.filter_rules_path + ": " + e.what());
    }
  }
  rules.min_mentions = std::max(rules.min_mentions, cfg.data.min_mentions);

  Ontology ont = filter_ontology(raw, rules, count_roleset_mentions(corpus));
  int dropped = attach_candidates(corpus, ont);
  if (dropped > 0)
    warn(warnings, std::to_string(dropped) + " mentions dropped: roleset not in the ontology");

  CorpusSplit split = split_corpus(corpus, cfg.data.train_ratio, cfg.data.dev_ratio,
                                   cfg.data.test_ratio, cfg.seed);

  fs::create_directories(cfg.data_dir());
  fs::path ont_path = cfg.data_dir() / "ontology.jsonl";
  save_ontology(ont_path, ont);
  save_corpus(split_path(cfg, "train"), split.train);
  save_corpus(split_path(cfg, "dev"), split.dev);
  save_corpus(split_path(cfg, "test"), split.test);

  json freq = json::object();
  for (const auto& [id, f] : build_frequency_table(split.train)) freq[id] = f;
  fs::path freq_path = cfg.data_dir() / "freq_table.json";
  atomic_write_file(freq_path, freq.dump(2) + "\n");

  json report{{"types", ont.types().size()},
              {"rolesets", ont.mappings().size()},
              {"sentences",
               {{"train", split.train.sentences.size()},
                {"dev", split.dev.sentences.size()},
                {"test", split.test.sentences.size()}}},
              {"cleaning",
               {{"sentences_removed_short", creport.sentences_removed_short},
                {"sentences_removed_duplicate", creport.sentences_removed_duplicate},
                {"mentions_removed_special", creport.mentions_removed_special},
                {"mentions_removed_overlap", creport.mentions_removed_overlap},
                {"mentions_removed_pos", creport.mentions_removed_pos},
                {"special_tokens_removed", creport.special_tokens_removed}}},
              {"mentions_dropped_unmapped", dropped}};
  fs::path report_path = cfg.data_dir() / "build_report.json";
  atomic_write_file(report_path, report.dump(2) + "\n");

  mf.output(ont_path);
  mf.output(split_path(cfg, "train"));
  mf.output(split_path(cfg, "dev"));
  mf.output(split_path(cfg, "test"));
  mf.output(freq_path);
  mf.output(report_path);
}

void stage_train_ti(const PipelineConfig& cfg, ManifestBuilder& mf, Warnings* warnings) {
  mf.input(split_path(cfg, "train"));
  Corpus train = load_corpus(split_path(cfg, "train"));

  TriggerModel model(make_encoder(cfg, cfg.trigger.max_len), cfg.trigger.max_span_len);
  TriggerTrainConfig tc;
  tc.epochs = cfg.trigger.epochs;
  tc.batch_size = cfg.trigger.batch_size;
  tc.optim = make_optim(cfg.trigger.lr, cfg.trigger.weight_decay, cfg.trigger.warmup_steps);
  tc.seed = stage_seed(cfg, "train-ti");
  std::vector<double> curve = train_trigger_model(model, trigger_examples(train), tc, warnings);

  fs::create_directories(cfg.model_dir());
  fs::path model_path = cfg.model_dir() / "trigger.bin";
  save_trigger_model(model_path, model);
  fs::path curve_path = cfg.model_dir() / "trigger_loss.json";
  atomic_write_file(curve_path, curve_json(curve).dump(2) + "\n");
  mf.output(model_path);
  mf.output(fs::path(model_path.string() + ".json"));
  mf.output(curve_path);
}

void stage_train_rank(const PipelineConfig& cfg, ManifestBuilder& mf, Warnings* warnings) {
  mf.input(split_path(cfg, "train"));
  mf.input(cfg.data_dir() / "ontology.jsonl");
  Corpus train = load_corpus(split_path(cfg, "train"));
  Ontology ont = load_ontology(cfg.data_dir() / "ontology.jsonl");

  RankerModel model(make_encoder(cfg, cfg.ranker.max_len));
  RankerTrainConfig rc;
  rc.epochs = cfg.ranker.epochs;
  rc.batch_size = cfg.ranker.batch_size;
  rc.optim = make_optim(cfg.ranker.lr, cfg.ranker.weight_decay, cfg.ranker.warmup_steps);
  rc.margin = cfg.ranker.margin;
  rc.negatives_per_sentence = cfg.ranker.negatives;
  rc.seed = stage_seed(cfg, "train-rank");
  std::vector<double> curve =
      train_ranker(model, ranker_examples(train, warnings), ont, rc, {}, warnings);

  fs::create_directories(cfg.model_dir());
  fs::path model_path = cfg.model_dir() / "ranker.bin";
  save_ranker_model(model_path, model);
  fs::path curve_path = cfg.model_dir() / "ranker_loss.json";
  atomic_write_file(curve_path, curve_json(curve).dump(2) + "\n");
  mf.output(model_path);
  mf.output(fs::path(model_path.string() + ".json"));
  mf.output(curve_path);
}

void stage_build_index(const PipelineConfig& cfg, ManifestBuilder& mf, Warnings*) {
  mf.input(cfg.model_dir() / "ranker.bin");
  mf.input(cfg.data_dir() / "ontology.jsonl");
  RankerModel model = load_ranker_model(cfg.model_dir() / "ranker.bin");
  Ontology ont = load_ontology(cfg.data_dir() / "ontology.jsonl");

  TypeIndex index = build_type_index(model, ont);
  fs::path index_path = cfg.model_dir() / "type_index.bin";
  save_type_index(index_path, index);
  mf.output(index_path);
  mf.output(fs::path(index_path.string() + ".json"));
}

struct RankedResources {
  RankerModel ranker;
  TypeIndex index;
};

RankedResources load_ranked_resources(const PipelineConfig& cfg) {
  RankerModel ranker = load_ranker_model(cfg.model_dir() / "ranker.bin");
  TypeIndex index = load_type_index(cfg.model_dir() / "type_index.bin");
  check_index_fresh(index, ranker);
  return {std::move(ranker), std::move(index)};
}

ClassifierTrainConfig classifier_train_config(const PipelineConfig& cfg, const char* salt) {
  ClassifierTrainConfig cc;
  cc.epochs = cfg.classifier.epochs;
  cc.batch_size = cfg.classifier.batch_size;
  cc.optim = make_optim(cfg.classifier.lr, cfg.classifier.weight_decay,
                        cfg.classifier.warmup_steps);
  cc.seed = stage_seed(cfg, salt);
  return cc;
}

void stage_train_cls_base(const PipelineConfig& cfg, ManifestBuilder& mf, Warnings* warnings) {
  mf.input(split_path(cfg, "train"));
  mf.input(cfg.data_dir() / "ontology.jsonl");
  mf.input(cfg.model_dir() / "ranker.bin");
  mf.input(cfg.model_dir() / "type_index.bin");
  Corpus train = load_corpus(split_path(cfg, "train"));
  Ontology ont = load_ontology(cfg.data_dir() / "ontology.jsonl");
  RankedResources rr = load_ranked_resources(cfg);

  std::vector<ClassifierExample> clean = clean_classifier_examples(
      train, rr.ranker, rr.index, cfg.ranker.top_k, cfg.classifier.negatives);
  if (clean.empty()) throw ValidationError("training split has no clean mentions");

  ClassifierModel model(make_encoder(cfg, cfg.classifier.max_len));
  std::vector<double> curve =
      train_classifier(model, clean, ont, classifier_train_config(cfg, "train-cls-base"), warnings);

  fs::path model_path = cfg.model_dir() / "classifier_base.bin";
  save_classifier_model(model_path, model);
  fs::path curve_path = cfg.model_dir() / "classifier_base_loss.json";
  atomic_write_file(curve_path, curve_json(curve).dump(2) + "\n");
  mf.output(model_path);
  mf.output(fs::path(model_path.string() + ".json"));
  mf.output(curve_path);
}

void stage_self_label(const PipelineConfig& cfg, ManifestBuilder& mf, Warnings* warnings) {
  mf.input(split_path(cfg, "train"));
  mf.input(cfg.data_dir() / "ontology.jsonl");
  mf.input(cfg.model_dir() / "ranker.bin");
  mf.input(cfg.model_dir() / "type_index.bin");
  mf.input(cfg.model_dir() / "classifier_base.bin");
  Corpus train = load_corpus(split_path(cfg, "train"));
  Ontology ont = load_ontology(cfg.data_dir() / "ontology.jsonl");
  RankedResources rr = load_ranked_resources(cfg);
  ClassifierModel base = load_classifier_model(cfg.model_dir() / "classifier_base.bin");

  std::vector<NoisyMention> noisy = noisy_mentions(train, rr.ranker, rr.index, cfg.ranker.top_k);
  SelfLabelConfig slc;
  slc.margin_threshold = cfg.self_label.margin_threshold;
  slc.rounds = cfg.self_label.rounds;
  slc.negatives_per_positive = cfg.classifier.negatives;

  // The final round's labeling is persisted; train-cls-final completes it.
  // Earlier rounds retrain an interim model here.
  SelfLabelOutcome outcome = self_label_mentions(base, noisy, ont, slc, warnings);
  if (slc.rounds > 1) {
    std::vector<ClassifierExample> clean = clean_classifier_examples(
        train, rr.ranker, rr.index, cfg.ranker.top_k, cfg.classifier.negatives);
    ClassifierModel labeler = base;
    for (int round = 1; round < slc.rounds && outcome.selected > 0; ++round) {
      std::vector<ClassifierExample> merged = clean;
      merged.insert(merged.end(), outcome.pseudo_examples.begin(),
                    outcome.pseudo_examples.end());
      ClassifierModel interim(make_encoder(cfg, cfg.classifier.max_len));
      train_classifier(interim, merged, ont, classifier_train_config(cfg, "self-label"),
                       warnings);
      labeler = std::move(interim);
      outcome = self_label_mentions(labeler, noisy, ont, slc, warnings);
    }
  }
  if (outcome.selected == 0)
    warn(warnings, "self-labeling selected no mentions; the final classifier will see clean data only");

  fs::create_directories(cfg.data_dir());
  fs::path audit_path = cfg.data_dir() / "pseudo_audit.jsonl";
  save_pseudo_label_audit(audit_path, outcome.audit);
  fs::path pseudo_path = cfg.data_dir() / "pseudo_train.jsonl";
  save_classifier_examples(pseudo_path, outcome.pseudo_examples);
  mf.output(audit_path);
  mf.output(pseudo_path);
}

void stage_train_cls_final(const PipelineConfig& cfg, ManifestBuilder& mf, Warnings* warnings) {
  mf.input(split_path(cfg, "train"));
  mf.input(cfg.data_dir() / "ontology.jsonl");
  mf.input(cfg.model_dir() / "ranker.bin");
  mf.input(cfg.model_dir() / "type_index.bin");
  mf.input(cfg.data_dir() / "pseudo_train.jsonl");
  Corpus train = load_corpus(split_path(cfg, "train"));
  Ontology ont = load_ontology(cfg.data_dir() / "ontology.jsonl");
  RankedResources rr = load_ranked_resources(cfg);

  std::vector<ClassifierExample> merged = clean_classifier_examples(
      train, rr.ranker, rr.index, cfg.ranker.top_k, cfg.classifier.negatives);
  std::vector<ClassifierExample> pseudo =
      load_classifier_examples(cfg.data_dir() / "pseudo_train.jsonl");
  merged.insert(merged.end(), pseudo.begin(), pseudo.end());
  if (merged.empty()) throw ValidationError("no classifier training data at all");

  ClassifierModel model(make_encoder(cfg, cfg.classifier.max_len));
  std::vector<double> curve = train_classifier(model, merged, ont,
                                               classifier_train_config(cfg, "train-cls-final"),
                                               warnings);

  fs::path model_path = cfg.model_dir() / "classifier_final.bin";
  save_classifier_model(model_path, model);
  fs::path curve_path = cfg.model_dir() / "classifier_final_loss.json";
  atomic_write_file(curve_path, curve_json(curve).dump(2) + "\n");
  mf.output(model_path);
  mf.output(fs::path(model_path.string() + ".json"));
  mf.output(curve_path);
}

void stage_predict(const PipelineConfig& cfg, ManifestBuilder& mf, Warnings* warnings) {
  fs::path corpus_path = split_path(cfg, cfg.eval.split);
  mf.input(corpus_path);
  mf.input(cfg.data_dir() / "ontology.jsonl");
  mf.input(cfg.model_dir() / "trigger.bin");
  mf.input(cfg.model_dir() / "ranker.bin");
  mf.input(cfg.model_dir() / "type_index.bin");
  mf.input(cfg.model_dir() / "classifier_final.bin");

  Corpus corpus = load_corpus(corpus_path);
  Ontology ont = load_ontology(cfg.data_dir() / "ontology.jsonl");
  TriggerModel trigger = load_trigger_model(cfg.model_dir() / "trigger.bin");
  RankedResources rr = load_ranked_resources(cfg);
  ClassifierModel classifier = load_classifier_model(cfg.model_dir() / "classifier_final.bin");

  std::vector<SentenceOutput> preds =
      predict_end_to_end(trigger, rr.ranker, rr.index, classifier, ont, corpus,
                         cfg.trigger.threshold, cfg.ranker.top_k, warnings);
  std::vector<GoldSpanRecord> stages =
      per_stage_records(rr.ranker, rr.index, classifier, ont, corpus, cfg.ranker.top_k, warnings);

  fs::create_directories(cfg.pred_dir());
  fs::path pred_path = cfg.pred_dir() / "predictions.jsonl";
  save_predictions(pred_path, preds);
  fs::path stage_path = cfg.pred_dir() / "per_stage.jsonl";
  save_per_stage_records(stage_path, stages);
  mf.output(pred_path);
  mf.output(stage_path);
}

void stage_evaluate(const PipelineConfig& cfg, ManifestBuilder& mf, Warnings* warnings) {
  fs::path corpus_path = split_path(cfg, cfg.eval.split);
  mf.input(corpus_path);
  mf.input(cfg.data_dir() / "ontology.jsonl");
  mf.input(cfg.data_dir() / "freq_table.json");
  mf.input(cfg.pred_dir() / "predictions.jsonl");
  mf.input(cfg.pred_dir() / "per_stage.jsonl");

  Corpus corpus = load_corpus(corpus_path);
  Ontology ont = load_ontology(cfg.data_dir() / "ontology.jsonl");
  GoldBySentence gold = gold_from_corpus(corpus, warnings);
  PredBySentence preds =
      predictions_for_metrics(load_predictions(cfg.pred_dir() / "predictions.jsonl"));
  std::vector<GoldSpanRecord> stages =
      load_per_stage_records(cfg.pred_dir() / "per_stage.jsonl");

  MetricReport report = evaluate_predictions(preds, gold, cfg.eval.ks, warnings);
  PerStageReport stage_report =
      per_stage_report(stages, {10, 20, 50}, {1, 2, 5}, cfg.ranker.top_k);

  std::map<std::string, double> freq =
      json::parse(read_file(cfg.data_dir() / "freq_table.json"))
          .get<std::map<std::string, double>>();
  QuartileReport quart = frequency_quartile_analysis(preds, gold, freq, ont);

  json doc = report.to_json();
  json rank_hits = json::object(), cls_hits = json::object();
  for (const auto& [k, rate] : stage_report.ranking_hit) rank_hits[std::to_string(k)] = rate;
  for (const auto& [k, rate] : stage_report.classification_hit)
    cls_hits[std::to_string(k)] = rate;
  doc["per_stage"] = {{"ranking_hit", rank_hits},
                      {"classification_hit", cls_hits},
                      {"mentions", stage_report.mentions},
                      {"covered", stage_report.covered},
                      {"classification_defined", stage_report.classification_defined}};
  json groups = json::array();
  for (int g = 0; g < 4; ++g) {
    const QuartileGroup& grp = quart.groups[g];
    groups.push_back({{"group", g},
                      {"types", grp.type_ids.size()},
                      {"min_freq", grp.min_freq},
                      {"max_freq", grp.max_freq},
                      {"tc_f1", grp.tc.f1},
                      {"tc_precision", grp.tc.precision},
                      {"tc_recall", grp.tc.recall},
                      {"gold_mentions", grp.tc.gold}});
  }
  doc["quartiles"] = {{"groups", groups}, {"unseen_types", quart.unseen_types}};

  fs::create_directories(cfg.eval_dir());
  fs::path metrics_path = cfg.eval_dir() / "metrics.json";
  atomic_write_file(metrics_path, doc.dump(2) + "\n");
  mf.output(metrics_path);
}

void stage_error_analysis(const PipelineConfig& cfg, ManifestBuilder& mf, Warnings* warnings) {
  fs::path corpus_path = split_path(cfg, cfg.eval.split);
  mf.input(corpus_path);
  mf.input(cfg.data_dir() / "ontology.jsonl");
  mf.input(cfg.pred_dir() / "predictions.jsonl");

  Corpus corpus = load_corpus(corpus_path);
  Ontology ont = load_ontology(cfg.data_dir() / "ontology.jsonl");
  GoldBySentence gold = gold_from_corpus(corpus, warnings);
  PredBySentence preds =
      predictions_for_metrics(load_predictions(cfg.pred_dir() / "predictions.jsonl"));

  auto categorized = categorize_errors(collect_errors(preds, gold), ont,
                                       cfg.eval.prioritize_hierarchy, warnings);

  fs::create_directories(cfg.eval_dir());
  fs::path csv_path = cfg.eval_dir() / "errors.csv";
  save_errors_csv(csv_path, categorized);

  std::map<std::string, int> counts;
  for (const auto& [err, cat] : categorized) ++counts[to_string(cat)];
  json summary{{"total", categorized.size()}, {"by_category", counts}};
  fs::path summary_path = cfg.eval_dir() / "error_summary.json";
  atomic_write_file(summary_path, summary.dump(2) + "\n");
  mf.output(csv_path);
  mf.output(summary_path);
}

}  // namespace

void run_stage(const PipelineConfig& cfg, Stage stage, Warnings* warnings) {
  DirLock lock(cfg.out());
  require_deps(cfg, stage);
  ManifestBuilder mf(cfg, stage);
  switch (stage) {
    case Stage::build_data: stage_build_data(cfg, mf, warnings); break;
    case Stage::train_ti: stage_train_ti(cfg, mf, warnings); break;
    case Stage::train_rank: stage_train_rank(cfg, mf, warnings); break;
    case Stage::build_index: stage_build_index(cfg, mf, warnings); break;
    case Stage::train_cls_base: stage_train_cls_base(cfg, mf, warnings); break;
    case Stage::self_label: stage_self_label(cfg, mf, warnings); break;
    case Stage::train_cls_final: stage_train_cls_final(cfg, mf, warnings); break;
    case Stage::predict: stage_predict(cfg, mf, warnings); break;
    case Stage::evaluate: stage_evaluate(cfg, mf, warnings); break;
    case Stage::error_analysis: stage_error_analysis(cfg, mf, warnings); break;
  }
  mf.save();
}

void run_all(const PipelineConfig& cfg, Warnings* warnings) {
  for (Stage s : all_stages()) run_stage(cfg, s, warnings);
}

}  // namespace evdet
