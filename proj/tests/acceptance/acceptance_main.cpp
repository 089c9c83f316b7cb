// Acceptance gate: ten checks against independent oracles and hand
// arithmetic, run as one binary. Each criterion prints a single PASS/FAIL
// line; the exit code is nonzero when any fails.
//
// Criterion 7's thresholds (TI F1 >= 0.90, ranking Hit@10 >= 0.90, clean-dev
// classification Hit@1 >= 0.80, wall clock < 900 s) are the recorded bars
// for the planted-signal corpus; see kPlanted* below.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "evdet/classifier.hpp"
#include "evdet/common.hpp"
#include "evdet/corpus.hpp"
#include "evdet/encoder.hpp"
#include "evdet/fixture.hpp"
#include "evdet/metrics.hpp"
#include "evdet/ontology.hpp"
#include "evdet/pipeline.hpp"
#include "evdet/ranker.hpp"
#include "evdet/trigger.hpp"

using namespace evdet;
namespace fs = std::filesystem;

namespace {

constexpr double kPlantedTiF1 = 0.90;
constexpr double kPlantedRankingHit10 = 0.90;
constexpr double kPlantedCleanHit1 = 0.80;
constexpr double kPlantedBudgetSeconds = 900.0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* pattern, ...) {
  char buf[512];
  va_list args;
  va_start(args, pattern);
  std::vsnprintf(buf, sizeof buf, pattern, args);
  va_end(args);
  return buf;
}

int g_passed = 0, g_failed = 0;

void run_criterion(int id, const char* name, const std::function<Outcome()>& fn) {
  Outcome out;
  try {
    out = fn();
  } catch (const std::exception& e) {
    out.pass = false;
    out.detail = std::string("exception: ") + e.what();
  }
  std::printf("criterion %2d: %s  %s%s%s\n", id, out.pass ? "PASS" : "FAIL", name,
              out.detail.empty() ? "" : " -- ", out.detail.c_str());
  std::fflush(stdout);
  (out.pass ? g_passed : g_failed)++;
}

MatrixXd random_unit_rows(DetRng& rng, int m, int h) {
  MatrixXd rows(m, h);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < h; ++j) rows(i, j) = rng.next_gaussian();
    rows.row(i) /= rows.row(i).norm();
  }
  return rows;
}

// ---------------------------------------------------------------- criterion 1

Outcome maxsim_oracle() {
  auto start = std::chrono::steady_clock::now();
  DetRng rng(20240817);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    int h = 4 + static_cast<int>(rng.next_below(13));
    int me = 1 + static_cast<int>(rng.next_below(8));
    int ms = 1 + static_cast<int>(rng.next_below(8));
    EmbeddingBag event{random_unit_rows(rng, me, h)};
    EmbeddingBag sentence{random_unit_rows(rng, ms, h)};

    double brute = 0.0;
    for (int s = 0; s < ms; ++s) {
      double best = -1e300;
      for (int e = 0; e < me; ++e)
        best = std::max(best, sentence.rows.row(s).dot(event.rows.row(e)));
      brute += best;
    }
    worst = std::max(worst, std::abs(max_sim(event, sentence) - brute));
  }
  double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  bool pass = worst <= 1e-6 && seconds < 10.0;
  return {pass, fmt("1000 random bag pairs, max |diff| %.2e, %.2f s", worst, seconds)};
}

// ---------------------------------------------------------------- criterion 2

Ontology small_ontology(int n_types) {
  std::vector<EventType> types;
  for (int i = 0; i < n_types; ++i) {
    EventType t;
    t.type_id = "Q" + std::to_string(i);
    t.name = "type" + std::to_string(i);
    t.definition = "an event of kind " + std::to_string(i);
    types.push_back(std::move(t));
  }
  std::vector<RolesetMapping> maps{{"act.01", {"Q0", "Q1"}}};
  return Ontology(std::move(types), std::move(maps));
}

Outcome hinge_properties() {
  // Stated arithmetic case: the pair scores come from the real MaxSim on
  // unit rows built to dot to exactly 0.9 and 0.2.
  MatrixXd sent(1, 2), pos(1, 2), neg(1, 2);
  sent << 1.0, 0.0;
  pos << 0.9, std::sqrt(1.0 - 0.81);
  neg << 0.2, std::sqrt(1.0 - 0.04);
  double pos_score = max_sim(EmbeddingBag{pos}, EmbeddingBag{sent});
  double neg_score = max_sim(EmbeddingBag{neg}, EmbeddingBag{sent});
  double hand = std::max(0.0, 1.0 - pos_score + neg_score);
  if (std::abs(hand - 0.3) > 1e-9)
    return {false, fmt("hand case gave %.12f, wanted 0.3", hand)};

  // Zero-iff property on the full loss: randomized models, every pairwise
  // margin re-derived through embed/embed_type/max_sim.
  Ontology ont = small_ontology(6);
  DetRng rng(91);
  int zero_seen = 0, active_seen = 0;
  const double margins[] = {-10.0, 0.0, 0.25, 1.0, 10.0};
  for (int trial = 0; trial < 60; ++trial) {
    RankerModel model(Encoder::reference(8, 100 + trial));
    for (Tensor* t : model.trainable_tensors())
      for (Eigen::Index i = 0; i < t->value.size(); ++i)
        t->value.data()[i] += 0.2 * rng.next_gaussian();

    std::vector<RankerExample> batch{{{"they", "acted", "fast"}, {"Q0", "Q1"}},
                                     {{"prices", "fell"}, {"Q2"}}};
    std::vector<std::vector<std::string>> negatives{{"Q2", "Q3"}, {"Q4", "Q5"}};
    double margin = margins[trial % 5];

    for (Tensor* t : model.trainable_tensors()) t->zero_grad();
    MarginStats stats = model.margin_loss(batch, negatives, ont, margin, false);

    double sum = 0.0;
    long pairs = 0;
    bool all_satisfied = true;
    for (size_t b = 0; b < batch.size(); ++b) {
      EmbeddingBag sbag = model.embed(TextKind::sentence, batch[b].tokens);
      double best_pos = -1e300;
      for (const auto& c : batch[b].candidate_type_ids)
        best_pos = std::max(best_pos, max_sim(model.embed_type(ont.type(c)), sbag));
      for (const auto& n : negatives[b]) {
        if (std::find(batch[b].candidate_type_ids.begin(), batch[b].candidate_type_ids.end(),
                      n) != batch[b].candidate_type_ids.end())
          continue;
        double hinge =
            std::max(0.0, margin - best_pos + max_sim(model.embed_type(ont.type(n)), sbag));
        sum += hinge;
        ++pairs;
        if (hinge > 0.0) all_satisfied = false;
      }
    }
    double expected = pairs > 0 ? sum / static_cast<double>(pairs) : 0.0;
    if (pairs != stats.pairs) return {false, fmt("trial %d counted %ld pairs, expected %ld", trial, stats.pairs, pairs)};
    if (std::abs(stats.loss - expected) > 1e-12)
      return {false, fmt("trial %d loss %.15f, re-derived %.15f", trial, stats.loss, expected)};
    if ((stats.loss == 0.0) != all_satisfied)
      return {false, fmt("trial %d: loss %.3g but satisfied=%d", trial, stats.loss, int(all_satisfied))};
    (all_satisfied ? zero_seen : active_seen)++;
  }
  if (zero_seen == 0 || active_seen == 0)
    return {false, fmt("sweep too one-sided (%d zero, %d active)", zero_seen, active_seen)};
  return {true, fmt("hand case 0.3 exact; 60 randomized losses re-derived (%d zero, %d active)",
                    zero_seen, active_seen)};
}

// ---------------------------------------------------------------- criterion 3

Outcome yes_probability_arithmetic() {
  double p = yes_probability(2.0, 1.0);
  if (std::abs(p - 0.73106) > 1e-4) return {false, fmt("(2,1) gave %.6f", p)};
  for (double z : {0.0, 3.7, -1.4, 250.0})
    if (yes_probability(z, z) != 0.5)
      return {false, fmt("equal logits %.1f gave %.17g, not exactly 0.5", z, yes_probability(z, z))};
  return {true, fmt("(2,1) -> %.5f; equal logits exactly 0.5", p)};
}

// ---------------------------------------------------------------- criterion 4

Outcome span_scoring_formula() {
  // Row 0 is the context row and must never be scored; tokens sit in rows
  // 1..4.
  MatrixXd rows(5, 2);
  rows << 9.0, -9.0, 1.0, 2.0, 3.0, 5.0, -2.0, 0.5, 0.25, -1.0;
  VectorXd ws(2), we(2), wp(2);
  ws << 0.5, -1.0;
  we << 2.0, 0.25;
  wp << -0.5, 1.5;

  std::vector<SpanScore> scored = TriggerModel::score_rows(rows, ws, we, wp, 3);
  std::map<std::pair<int, int>, double> by_span;
  for (const SpanScore& s : scored) by_span[{s.span.start, s.span.end}] = s.logit;

  int checked = 0;
  double worst = 0.0;
  for (int i = 0; i < 4; ++i)
    for (int j = i; j < 4 && j - i + 1 <= 3; ++j) {
      double hand = ws.dot(rows.row(i + 1)) + we.dot(rows.row(j + 1));
      for (int k = i; k <= j; ++k) hand += wp.dot(rows.row(k + 1));
      auto it = by_span.find({i, j});
      if (it == by_span.end()) return {false, fmt("span [%d,%d] missing", i, j)};
      worst = std::max(worst, std::abs(it->second - hand));
      ++checked;
    }
  if (static_cast<int>(scored.size()) != checked)
    return {false, fmt("%zu spans scored, %d expected", scored.size(), checked)};
  if (worst > 1e-9) return {false, fmt("max |logit diff| %.2e", worst)};

  TriggerModel fresh(Encoder::reference(8, 3), 4);
  for (const SpanScore& s : fresh.score_spans({"alpha", "beta", "gamma"}))
    if (s.probability != 0.5)
      return {false, fmt("zero weights gave probability %.17g", s.probability)};
  return {true, fmt("%d spans match hand sums (max diff %.1e); zero weights -> 0.5", checked, worst)};
}

// ---------------------------------------------------------------- criterion 5

struct GradCheck {
  int checked = 0;
  int skipped = 0;
  double worst = 0.0;
};

// Central differences against the accumulated analytic gradient. Coordinates
// whose derivative is numerically indistinguishable from zero are skipped.
void check_tensor(Tensor& t, const std::function<double()>& loss_at, GradCheck& gc,
                  int samples = 4) {
  Eigen::Index n = t.value.size();
  for (int s = 0; s < samples && s < n; ++s) {
    Eigen::Index idx = (s * 2654435761u) % n;
    double saved = t.value.data()[idx];
    const double eps = 1e-6;
    t.value.data()[idx] = saved + eps;
    double up = loss_at();
    t.value.data()[idx] = saved - eps;
    double down = loss_at();
    t.value.data()[idx] = saved;
    double fd = (up - down) / (2 * eps);
    double an = t.grad.data()[idx];
    if (std::max(std::abs(fd), std::abs(an)) < 1e-7) {
      gc.skipped++;
      continue;
    }
    gc.worst = std::max(gc.worst, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8}));
    gc.checked++;
  }
}

void jitter(std::vector<Tensor*> tensors, DetRng& rng, double scale) {
  for (Tensor* t : tensors)
    for (Eigen::Index i = 0; i < t->value.size(); ++i)
      t->value.data()[i] += scale * rng.next_gaussian();
}

Outcome gradient_checks() {
  GradCheck gc;
  DetRng rng(55);

  {  // span scorer
    Encoder enc = Encoder::reference(10, 5);
    enc.set_max_len(16);
    TriggerModel model(std::move(enc), 3);
    jitter(model.trainable_tensors(), rng, 0.1);
    std::vector<TriggerExample> batch{{{"crowds", "rose", "up"}, {Span{1, 1}}},
                                      {{"quiet", "streets"}, {}}};
    for (Tensor* t : model.trainable_tensors()) t->zero_grad();
    model.compute_loss_and_grad(batch);
    auto loss_at = [&] { return model.compute_loss(batch); };
    for (Tensor* t : model.trainable_tensors()) check_tensor(*t, loss_at, gc);
  }

  {  // type ranker
    Ontology ont = small_ontology(6);
    Encoder enc = Encoder::reference(8, 6);
    enc.set_max_len(32);
    RankerModel model(std::move(enc));
    jitter(model.trainable_tensors(), rng, 0.1);
    std::vector<RankerExample> batch{{{"they", "acted", "fast"}, {"Q0", "Q1"}},
                                     {{"prices", "fell"}, {"Q2"}}};
    std::vector<std::vector<std::string>> negatives{{"Q2", "Q3"}, {"Q4", "Q5"}};
    for (Tensor* t : model.trainable_tensors()) t->zero_grad();
    model.margin_loss(batch, negatives, ont, 1.0, true);
    auto loss_at = [&] { return model.margin_loss(batch, negatives, ont, 1.0, false).loss; };
    for (Tensor* t : model.trainable_tensors()) check_tensor(*t, loss_at, gc);
  }

  {  // yes/no classifier
    Ontology ont = small_ontology(4);
    Encoder enc = Encoder::reference(10, 7);
    enc.set_max_len(64);
    ClassifierModel model(std::move(enc));
    jitter(model.trainable_tensors(), rng, 0.1);
    std::vector<std::string> tokens{"crowds", "rose", "up", "against", "rule"};
    QAPrompt prompt = render_prompt(ont.type("Q0"), tokens, Span{1, 1}, model.encoder());
    for (double target : {1.0, 0.0}) {
      for (Tensor* t : model.trainable_tensors()) t->zero_grad();
      model.pair_loss_and_grad(prompt, target);
      auto loss_at = [&] {
        double p = model.score(prompt).p_yes;
        return target > 0.5 ? -std::log(p) : -std::log(1.0 - p);
      };
      for (Tensor* t : model.trainable_tensors()) check_tensor(*t, loss_at, gc);
    }
  }

  bool pass = gc.checked >= 30 && gc.worst < 1e-4;
  return {pass, fmt("%d coordinates across three losses, worst rel err %.2e (%d flat skipped)",
                    gc.checked, gc.worst, gc.skipped)};
}

// ---------------------------------------------------------------- criterion 6

GoldMention gm(const std::string& id, int start, int end, const std::string& type) {
  return {id, Span{start, end}, type, ""};
}

PredictedMention pm(int start, int end, std::vector<std::string> ranked) {
  PredictedMention p;
  p.span = Span{start, end};
  p.chosen_type = ranked.front();
  p.ranked_types = std::move(ranked);
  return p;
}

Outcome metric_fixture() {
  GoldBySentence gold;
  gold["s1"] = {gm("m1", 0, 0, "A"), gm("m2", 2, 3, "B"), gm("m3", 5, 5, "A"),
                gm("m4", 7, 8, "C")};
  gold["s2"] = {gm("m5", 1, 1, "B"), gm("m6", 3, 4, "A"), gm("m7", 6, 6, "C")};
  gold["s3"] = {gm("m8", 0, 1, "D"), gm("m9", 4, 4, "D"), gm("m10", 6, 7, "A")};

  PredBySentence preds;
  preds["s1"] = {pm(0, 0, {"A", "B", "C", "D"}), pm(2, 3, {"A", "B", "C", "D"}),
                 pm(5, 6, {"A", "B", "C", "D"})};
  preds["s2"] = {pm(1, 1, {"B", "A", "C", "D"}), pm(3, 4, {"C", "D", "A", "B"}),
                 pm(6, 6, {"C", "A", "B", "D"})};
  preds["s3"] = {pm(0, 1, {"D", "A", "B", "C"}), pm(9, 9, {"A", "B", "C", "D"})};

  PrfScore ti = score_ti(preds, gold);
  PrfScore tc = score_tc(preds, gold);
  // Hand count: 8 predictions, 6 span-exact, 4 of those also type-exact.
  if (!(ti.tp == 6 && ti.predicted == 8 && ti.gold == 10))
    return {false, fmt("ti counts %ld/%ld/%ld", ti.tp, ti.predicted, ti.gold)};
  if (ti.precision != 6.0 / 8.0 || ti.recall != 6.0 / 10.0 ||
      ti.f1 != 2.0 * (6.0 / 8.0) * (6.0 / 10.0) / (6.0 / 8.0 + 6.0 / 10.0))
    return {false, "ti ratios off hand values"};
  if (!(tc.tp == 4 && tc.predicted == 8 && tc.gold == 10))
    return {false, fmt("tc counts %ld/%ld/%ld", tc.tp, tc.predicted, tc.gold)};
  if (tc.precision != 0.5 || tc.recall != 0.4)
    return {false, "tc ratios off hand values"};

  // Gold ranks among matched spans: m1@1, m2@2, m5@1, m6@3, m7@1, m8@1.
  auto hits = score_hit_at_k(preds, gold, {1, 2, 5, 10});
  if (hits.at(1) != 0.4 || hits.at(2) != 0.5 || hits.at(5) != 0.6 || hits.at(10) != 0.6)
    return {false, fmt("hit curve %.2f/%.2f/%.2f/%.2f", hits.at(1), hits.at(2), hits.at(5),
                       hits.at(10))};

  const std::vector<std::string> universe = {"A", "B", "C", "D", "E"};
  DetRng rng(606);
  for (int trial = 0; trial < 100; ++trial) {
    GoldBySentence rg;
    PredBySentence rp;
    int sentences = 2 + static_cast<int>(rng.next_below(4));
    int next_id = 0;
    for (int s = 0; s < sentences; ++s) {
      std::string sid = "s" + std::to_string(s);
      int n_gold = static_cast<int>(rng.next_below(5));
      for (int g = 0; g < n_gold; ++g) {
        int start = static_cast<int>(rng.next_below(10));
        int end = std::min(start + static_cast<int>(rng.next_below(3)), 11);
        rg[sid].push_back(gm("m" + std::to_string(next_id++), start, end,
                             universe[rng.next_below(universe.size())]));
      }
      int n_pred = static_cast<int>(rng.next_below(5));
      for (int p = 0; p < n_pred; ++p) {
        int start = static_cast<int>(rng.next_below(10));
        int end = std::min(start + static_cast<int>(rng.next_below(3)), 11);
        std::vector<std::string> ranked = universe;
        rng.shuffle(ranked);
        rp[sid].push_back(pm(start, end, ranked));
      }
      if (rg.count(sid) == 0) rg[sid] = {};
      if (rp.count(sid) == 0) rp[sid] = {};
    }
    PrfScore rti = score_ti(rp, rg);
    PrfScore rtc = score_tc(rp, rg);
    auto rh = score_hit_at_k(rp, rg, {1, 2, 5, 1000000});
    if (rtc.f1 > rti.f1 + 1e-12)
      return {false, fmt("trial %d: tc f1 %.6f above ti f1 %.6f", trial, rtc.f1, rti.f1)};
    if (rh.at(1) > rh.at(2) + 1e-12 || rh.at(2) > rh.at(5) + 1e-12 ||
        rh.at(5) > rh.at(1000000) + 1e-12)
      return {false, fmt("trial %d: hit curve not monotone", trial)};
    if (std::abs(rh.at(1000000) - rti.recall) > 1e-12)
      return {false, fmt("trial %d: full-list hit %.6f != ti recall %.6f", trial,
                         rh.at(1000000), rti.recall)};
  }
  return {true, "hand-counted fixture exact; invariants held on 100 randomized sets"};
}

// ------------------------------------------------------- criteria 7, 8, 10

struct PlantedRuns {
  fs::path root;
  PipelineConfig cfg_a, cfg_b;
  bool ran_a = false, ran_b = false;
  double seconds_a = 0.0;
};

PipelineConfig planted_config(const fs::path& root, const std::string& out_name) {
  PipelineConfig cfg;
  cfg.seed = 7;
  cfg.ontology_path = (root / "ontology.jsonl").string();
  cfg.corpus_path = (root / "corpus.jsonl").string();
  cfg.out_dir = (root / out_name).string();
  cfg.data.train_ratio = 0.8;
  cfg.data.dev_ratio = 0.1;
  cfg.data.test_ratio = 0.1;
  cfg.data.min_mentions = 0;
  cfg.encoder.dim = 64;
  cfg.trigger.epochs = 30;
  cfg.trigger.batch_size = 32;
  cfg.trigger.max_len = 16;
  cfg.trigger.lr = 0.05;
  cfg.trigger.weight_decay = 0.0;
  cfg.trigger.warmup_steps = 10;
  cfg.trigger.max_span_len = 3;
  cfg.ranker.epochs = 10;
  cfg.ranker.batch_size = 32;
  cfg.ranker.max_len = 32;
  cfg.ranker.lr = 0.02;
  cfg.ranker.weight_decay = 0.0;
  cfg.ranker.warmup_steps = 10;
  cfg.ranker.negatives = 5;
  cfg.ranker.top_k = 10;
  cfg.classifier.epochs = 50;
  cfg.classifier.batch_size = 32;
  cfg.classifier.max_len = 64;
  cfg.classifier.lr = 0.1;
  cfg.classifier.weight_decay = 0.0;
  cfg.classifier.warmup_steps = 10;
  cfg.classifier.negatives = 5;
  cfg.self_label.margin_threshold = 0.9;
  cfg.self_label.rounds = 1;
  return cfg;
}

Outcome planted_signal_run(PlantedRuns& runs) {
  runs.root = fs::temp_directory_path() / ("evdet_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(runs.root);
  write_fixture(FixtureSpec{}, runs.root / "ontology.jsonl", runs.root / "corpus.jsonl");
  runs.cfg_a = planted_config(runs.root, "run_a");
  runs.cfg_b = planted_config(runs.root, "run_b");

  auto start = std::chrono::steady_clock::now();
  run_all(runs.cfg_a);
  runs.seconds_a =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  runs.ran_a = true;

  json metrics = json::parse(read_file(runs.cfg_a.eval_dir() / "metrics.json"));
  double ti_f1 = metrics.at("ti").at("f1").get<double>();
  double rank_hit10 = metrics.at("per_stage").at("ranking_hit").at("10").get<double>();

  // Clean-subset classification Hit@1 on gold spans: dev mentions with a
  // single candidate type, scored by the classifier's candidate ordering.
  Corpus dev = load_corpus(runs.cfg_a.data_dir() / "dev.jsonl");
  std::map<std::string, const EventMention*> clean;
  for (const Sentence& s : dev.sentences)
    for (const EventMention& m : s.mentions)
      if (m.candidate_type_ids.size() == 1) clean[m.mention_id] = &m;
  int clean_total = static_cast<int>(clean.size());
  int clean_hits = 0;
  for (const GoldSpanRecord& rec :
       load_per_stage_records(runs.cfg_a.pred_dir() / "per_stage.jsonl")) {
    auto it = clean.find(rec.mention_id);
    if (it == clean.end()) continue;
    if (!rec.classifier_order.empty() && rec.classifier_order[0] == rec.gold_type) ++clean_hits;
  }
  double clean_hit1 = clean_total > 0 ? static_cast<double>(clean_hits) / clean_total : 0.0;

  bool pass = ti_f1 >= kPlantedTiF1 && rank_hit10 >= kPlantedRankingHit10 &&
              clean_hit1 >= kPlantedCleanHit1 && runs.seconds_a < kPlantedBudgetSeconds;
  return {pass, fmt("ti f1 %.4f (>=%.2f), ranking hit@10 %.4f (>=%.2f), clean-dev hit@1 %.4f "
                    "(>=%.2f, n=%d), %.1f s (<%.0f)",
                    ti_f1, kPlantedTiF1, rank_hit10, kPlantedRankingHit10, clean_hit1,
                    kPlantedCleanHit1, clean_total, runs.seconds_a, kPlantedBudgetSeconds)};
}

Outcome self_label_shape(const PlantedRuns& runs) {
  if (!runs.ran_a) return {false, "planted-signal run unavailable"};
  const PipelineConfig& cfg = runs.cfg_a;

  Corpus train = load_corpus(cfg.data_dir() / "train.jsonl");
  Ontology ont = load_ontology(cfg.data_dir() / "ontology.jsonl");
  RankerModel ranker = load_ranker_model(cfg.model_dir() / "ranker.bin");
  TypeIndex index = load_type_index(cfg.model_dir() / "type_index.bin");
  check_index_fresh(index, ranker);
  ClassifierModel base = load_classifier_model(cfg.model_dir() / "classifier_base.bin");
  ClassifierModel final_model =
      load_classifier_model(cfg.model_dir() / "classifier_final.bin");

  std::map<std::string, std::string> gold;
  for (const Sentence& s : train.sentences)
    for (const EventMention& m : s.mentions)
      if (m.gold_type_id) gold[m.mention_id] = *m.gold_type_id;

  std::vector<NoisyMention> noisy = noisy_mentions(train, ranker, index, cfg.ranker.top_k);
  if (noisy.empty()) return {false, "no noisy training mentions"};

  const double thresholds[] = {0.0, 0.3, 0.6, 0.9};
  int counts[4];
  double accuracy[4];
  for (int i = 0; i < 4; ++i) {
    SelfLabelConfig slc;
    slc.margin_threshold = thresholds[i];
    slc.rounds = 1;
    slc.negatives_per_positive = cfg.classifier.negatives;
    SelfLabelOutcome out = self_label_mentions(base, noisy, ont, slc);
    counts[i] = out.selected;
    int correct = 0, scored = 0;
    for (const PseudoLabelRecord& rec : out.audit) {
      if (!rec.selected) continue;
      ++scored;
      if (gold.count(rec.mention_id) && gold.at(rec.mention_id) == rec.pseudo_label) ++correct;
    }
    accuracy[i] = scored > 0 ? static_cast<double>(correct) / scored : -1.0;
  }

  for (int i = 1; i < 4; ++i)
    if (counts[i] > counts[i - 1])
      return {false, fmt("selection count rose from %d to %d between thresholds %.1f and %.1f",
                         counts[i - 1], counts[i], thresholds[i - 1], thresholds[i])};
  if (counts[3] == 0)
    return {false, fmt("threshold 0.9 selected nothing (counts %d/%d/%d/%d of %zu noisy); "
                       "accuracy undefined",
                       counts[0], counts[1], counts[2], counts[3], noisy.size())};
  if (!(accuracy[3] > accuracy[0]))
    return {false, fmt("pseudo-label accuracy %.4f@0.9 not above %.4f@0", accuracy[3],
                       accuracy[0])};

  // Covered noisy dev subset: gold inside the ranker's top-k candidates.
  Corpus dev = load_corpus(cfg.data_dir() / "dev.jsonl");
  int covered = 0, base_hits = 0, final_hits = 0;
  for (const Sentence& s : dev.sentences) {
    std::vector<RankedCandidate> candidates;
    bool ranked = false;
    for (const EventMention& m : s.mentions) {
      if (m.candidate_type_ids.size() < 2 || !m.gold_type_id) continue;
      if (!ranked) {
        for (const RankedType& r :
             top_k(rank_types(ranker, index, s.tokens), cfg.ranker.top_k))
          candidates.push_back({r.type_id, r.score});
        ranked = true;
      }
      bool in_candidates = false;
      for (const auto& c : candidates) in_candidates |= c.type_id == *m.gold_type_id;
      if (!in_candidates) continue;
      ++covered;
      if (classify_mention(base, ont, s.tokens, m.span, candidates).chosen_type ==
          *m.gold_type_id)
        ++base_hits;
      if (classify_mention(final_model, ont, s.tokens, m.span, candidates).chosen_type ==
          *m.gold_type_id)
        ++final_hits;
    }
  }
  if (covered == 0) return {false, "no covered noisy dev mentions"};
  double base_rate = static_cast<double>(base_hits) / covered;
  double final_rate = static_cast<double>(final_hits) / covered;
  bool pass = final_rate > base_rate;
  return {pass, fmt("selected %d/%d/%d/%d; accuracy %.4f@0 -> %.4f@0.9; covered dev hit@1 "
                    "%.4f base -> %.4f retrained (n=%d)",
                    counts[0], counts[1], counts[2], counts[3], accuracy[0], accuracy[3],
                    base_rate, final_rate, covered)};
}

Outcome determinism(PlantedRuns& runs) {
  if (!runs.ran_a) return {false, "planted-signal run unavailable"};
  run_all(runs.cfg_b);
  runs.ran_b = true;

  std::vector<std::string> files = {
      "data/ontology.jsonl",        "data/train.jsonl",
      "data/dev.jsonl",             "data/test.jsonl",
      "data/freq_table.json",       "data/build_report.json",
      "data/pseudo_audit.jsonl",    "data/pseudo_train.jsonl",
      "models/trigger.bin",         "models/trigger.bin.json",
      "models/trigger_loss.json",   "models/ranker.bin",
      "models/ranker.bin.json",     "models/ranker_loss.json",
      "models/type_index.bin",      "models/type_index.bin.json",
      "models/classifier_base.bin", "models/classifier_base.bin.json",
      "models/classifier_base_loss.json",
      "models/classifier_final.bin",
      "models/classifier_final.bin.json",
      "models/classifier_final_loss.json",
      "preds/predictions.jsonl",    "preds/per_stage.jsonl",
      "eval/metrics.json",          "eval/errors.csv",
      "eval/error_summary.json"};
  for (Stage s : all_stages()) files.push_back("manifests/" + std::string(to_string(s)) + ".json");

  int compared = 0;
  for (const std::string& rel : files) {
    fs::path a = runs.cfg_a.out() / rel;
    fs::path b = runs.cfg_b.out() / rel;
    if (!fs::exists(a) || !fs::exists(b)) return {false, rel + " missing in one run"};
    if (read_file(a) != read_file(b)) return {false, rel + " differs between runs"};
    ++compared;
  }
  return {true, fmt("%d artifacts byte-identical across independent runs", compared)};
}

// ---------------------------------------------------------------- criterion 9

Outcome taxonomy_exhaustive() {
  DetRng rng(4242);
  std::vector<EventType> types;
  std::map<std::string, std::string> parent_of;
  for (int i = 0; i < 40; ++i) {
    EventType t;
    t.type_id = fmt("T%02d", i);
    t.name = "t" + std::to_string(i);
    t.definition = "definition " + std::to_string(i);
    if (i > 0 && rng.next_double() < 0.5) {
      t.parent_id = fmt("T%02d", static_cast<int>(rng.next_below(i)));
      parent_of[t.type_id] = *t.parent_id;
    }
    types.push_back(std::move(t));
  }

  std::vector<RolesetMapping> mappings;
  std::vector<std::string> roleset_ids;
  for (int lemma = 0; lemma < 12; ++lemma) {
    int senses = 1 + static_cast<int>(rng.next_below(3));
    for (int s = 1; s <= senses; ++s) {
      RolesetMapping m;
      m.roleset_id = fmt("lemma%d.%02d", lemma, s);
      std::set<std::string> cands;
      int want = 1 + static_cast<int>(rng.next_below(4));
      while (static_cast<int>(cands.size()) < want)
        cands.insert(fmt("T%02d", static_cast<int>(rng.next_below(40))));
      m.candidate_type_ids = {cands.begin(), cands.end()};
      roleset_ids.push_back(m.roleset_id);
      mappings.push_back(std::move(m));
    }
  }
  Ontology ont(types, mappings);

  auto contains = [](const std::vector<std::string>& v, const std::string& x) {
    return std::find(v.begin(), v.end(), x) != v.end();
  };
  auto brute = [&](const ErrorCase& err, bool hierarchy_first) {
    const RolesetMapping* gm = ont.find_mapping(err.gold_roleset);
    bool in_set = gm && contains(gm->candidate_type_ids, err.predicted_type);
    bool extended = false;
    if (!in_set) {
      std::string lemma = roleset_predicate(err.gold_roleset);
      for (const auto& [rid, m] : ont.mappings())
        if (roleset_predicate(rid) == lemma && contains(m.candidate_type_ids, err.predicted_type))
          extended = true;
    }
    bool child = parent_of.count(err.gold_type) && parent_of.at(err.gold_type) == err.predicted_type;
    bool parent =
        parent_of.count(err.predicted_type) && parent_of.at(err.predicted_type) == err.gold_type;
    bool sibling = !child && !parent && parent_of.count(err.predicted_type) &&
                   parent_of.count(err.gold_type) &&
                   parent_of.at(err.predicted_type) == parent_of.at(err.gold_type);
    if (in_set) return ErrorCategory::candidate_set;
    if (!hierarchy_first && extended) return ErrorCategory::extended_roleset;
    if (child) return ErrorCategory::child;
    if (parent) return ErrorCategory::parent;
    if (sibling) return ErrorCategory::sibling;
    if (hierarchy_first && extended) return ErrorCategory::extended_roleset;
    return ErrorCategory::other;
  };

  std::map<std::string, int> seen;
  for (int trial = 0; trial < 1000; ++trial) {
    ErrorCase err;
    err.mention_id = "m" + std::to_string(trial);
    err.gold_roleset = roleset_ids[rng.next_below(roleset_ids.size())];
    err.gold_type = fmt("T%02d", static_cast<int>(rng.next_below(40)));
    do {
      err.predicted_type = fmt("T%02d", static_cast<int>(rng.next_below(40)));
    } while (err.predicted_type == err.gold_type);

    for (bool hierarchy_first : {false, true}) {
      ErrorCategory got = categorize_error(err, ont, hierarchy_first);
      ErrorCategory want = brute(err, hierarchy_first);
      if (got != want)
        return {false, fmt("trial %d (%s vs %s via %s, hierarchy_first=%d): got %s, derived %s",
                           trial, err.predicted_type.c_str(), err.gold_type.c_str(),
                           err.gold_roleset.c_str(), int(hierarchy_first), to_string(got),
                           to_string(want))};
      if (!hierarchy_first) seen[to_string(got)]++;
    }
  }
  std::string dist;
  for (const auto& [cat, n] : seen) dist += fmt("%s %d, ", cat.c_str(), n);
  if (!dist.empty()) dist.resize(dist.size() - 2);
  return {true, "1000 randomized pairs agree with rule re-derivation (" + dist + ")"};
}

}  // namespace

int main() {
  std::printf("acceptance checks, planted-signal bars: ti f1 >= %.2f, ranking hit@10 >= %.2f, "
              "clean-dev hit@1 >= %.2f\n",
              kPlantedTiF1, kPlantedRankingHit10, kPlantedCleanHit1);

  PlantedRuns runs;
  run_criterion(1, "maxsim equals the brute-force double loop", maxsim_oracle);
  run_criterion(2, "margin-loss hinge arithmetic and zero-iff property", hinge_properties);
  run_criterion(3, "yes/no softmax arithmetic", yes_probability_arithmetic);
  run_criterion(4, "span scoring matches hand sums", span_scoring_formula);
  run_criterion(5, "finite differences match analytic gradients", gradient_checks);
  run_criterion(6, "metrics reproduce hand counts and invariants", metric_fixture);
  run_criterion(7, "planted-signal pipeline clears recorded bars",
                [&] { return planted_signal_run(runs); });
  run_criterion(8, "self-labeling threshold sweep and retraining gain",
                [&] { return self_label_shape(runs); });
  run_criterion(9, "error taxonomy agrees with brute-force rules", taxonomy_exhaustive);
  run_criterion(10, "independent reruns are byte-identical", [&] { return determinism(runs); });

  if (!runs.root.empty()) {
    std::error_code ec;
    fs::remove_all(runs.root, ec);
  }

  std::printf("acceptance: %d/%d criteria passed\n", g_passed, g_passed + g_failed);
  return g_failed == 0 ? 0 : 1;
}
