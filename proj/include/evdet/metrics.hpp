#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "evdet/corpus.hpp"
#include "evdet/ontology.hpp"

namespace evdet {

struct GoldMention {
  std::string mention_id;
  Span span;
  std::string type_id;
  std::string roleset_id;
};

struct PredictedMention {
  Span span;
  std::string chosen_type;
  std::vector<std::string> ranked_types;  // descending preference over the ontology
};

using GoldBySentence = std::map<std::string, std::vector<GoldMention>>;
using PredBySentence = std::map<std::string, std::vector<PredictedMention>>;

// Gold view of an evaluation corpus; mentions without a gold type are
// skipped with a warning.
GoldBySentence gold_from_corpus(const Corpus& corpus, Warnings* warnings = nullptr);

struct PrfScore {
  long tp = 0;
  long predicted = 0;
  long gold = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Precision is 0 on an empty prediction set, recall 0 on empty gold, F1 0
// when both components are 0.
PrfScore make_prf(long tp, long predicted, long gold);

// Span identification: a prediction is correct iff an identical gold span
// exists in its sentence; matching is one-to-one, greedy by order.
// Duplicate predicted spans in one sentence are scored once, with a warning.
PrfScore score_ti(const PredBySentence& preds, const GoldBySentence& gold,
                  Warnings* warnings = nullptr);

// Span and type must both be correct.
PrfScore score_tc(const PredBySentence& preds, const GoldBySentence& gold,
                  Warnings* warnings = nullptr);

// Fraction of gold mentions whose span was exactly predicted and whose type
// appears in the top K of that prediction's ranking; unmatched spans are
// misses. K beyond the ranking length means the full list.
std::map<int, double> score_hit_at_k(const PredBySentence& preds, const GoldBySentence& gold,
                                     const std::vector<int>& ks, Warnings* warnings = nullptr);

// One gold mention pushed through ranking (and optionally classification)
// with its span taken as given.
struct GoldSpanRecord {
  std::string mention_id;
  std::string gold_type;
  std::vector<std::string> ranking;          // ranker order over the ontology
  std::vector<std::string> classifier_order;  // classifier order over the ranker's top candidates
};

struct PerStageReport {
  std::map<int, double> ranking_hit;
  std::map<int, double> classification_hit;  // over the covered subset only
  long mentions = 0;
  long covered = 0;  // gold type inside the ranker's top coverage_k
  bool classification_defined = false;
};

PerStageReport per_stage_report(const std::vector<GoldSpanRecord>& records,
                                const std::vector<int>& ranking_ks = {10, 20, 50},
                                const std::vector<int>& classification_ks = {1, 2, 5},
                                int coverage_k = 10);

// Training frequency per type: a mention with N candidate types adds 1/N to
// each; an unambiguous gold label adds 1.
std::map<std::string, double> build_frequency_table(const Corpus& train);

struct QuartileGroup {
  std::vector<std::string> type_ids;
  double min_freq = 0.0;
  double max_freq = 0.0;
  PrfScore tc;
};

struct QuartileReport {
  std::array<QuartileGroup, 4> groups;  // lowest frequency first
  long unseen_types = 0;                // types absent from training (lowest group)
};

// Types are split into four groups of equal size (+-1) by ascending
// weighted frequency; frequency ties sort by type id, and remainder types
// land in the lower groups. TC F1 is computed per group by gold type.
QuartileReport frequency_quartile_analysis(const PredBySentence& preds,
                                           const GoldBySentence& gold,
                                           const std::map<std::string, double>& train_freq,
                                           const Ontology& ont);

enum class ErrorCategory { candidate_set, extended_roleset, child, parent, sibling, other };
const char* to_string(ErrorCategory c);

struct ErrorCase {
  std::string mention_id;
  std::string predicted_type;
  std::string gold_type;
  std::string gold_roleset;
};

// Priority: candidate_set, then extended_roleset, then the one-edge
// hierarchy relations, then other. `prioritize_hierarchy` lifts the
// hierarchy categories above extended_roleset. Unknown gold rolesets fall
// to other with a warning.
ErrorCategory categorize_error(const ErrorCase& err, const Ontology& ont,
                               bool prioritize_hierarchy = false, Warnings* warnings = nullptr);

std::vector<std::pair<ErrorCase, ErrorCategory>> categorize_errors(
    const std::vector<ErrorCase>& errors, const Ontology& ont, bool prioritize_hierarchy = false,
    Warnings* warnings = nullptr);

// Wrong-type predictions on exactly matched spans.
std::vector<ErrorCase> collect_errors(const PredBySentence& preds, const GoldBySentence& gold);

void save_errors_csv(const std::filesystem::path& path,
                     const std::vector<std::pair<ErrorCase, ErrorCategory>>& rows);

struct MetricReport {
  PrfScore ti;
  PrfScore tc;
  std::map<int, double> hit_at;
  long sentences = 0;
  long gold_mentions = 0;
  long predicted_mentions = 0;
  json to_json() const;
};

MetricReport evaluate_predictions(const PredBySentence& preds, const GoldBySentence& gold,
                                  const std::vector<int>& ks, Warnings* warnings = nullptr);

}  // namespace evdet
