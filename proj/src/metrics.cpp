#include "evdet/metrics.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace evdet {

GoldBySentence gold_from_corpus(const Corpus& corpus, Warnings* warnings) {
  GoldBySentence out;
  for (const Sentence& s : corpus.sentences) {
    std::vector<GoldMention> mentions;
    for (const EventMention& m : s.mentions) {
      if (!m.gold_type_id) {
        warn(warnings, "mention " + m.mention_id + " has no gold type; skipped in evaluation");
        continue;
      }
      mentions.push_back({m.mention_id, m.span, *m.gold_type_id, m.roleset_id});
    }
    out[s.sent_id] = std::move(mentions);
  }
  return out;
}

PrfScore make_prf(long tp, long predicted, long gold) {
  PrfScore s;
  s.tp = tp;
  s.predicted = predicted;
  s.gold = gold;
  s.precision = predicted == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(predicted);
  s.recall = gold == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(gold);
  s.f1 = (s.precision + s.recall) == 0.0
             ? 0.0
             : 2.0 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

namespace {

// Predictions of one sentence with duplicate spans dropped (first kept).
std::vector<const PredictedMention*> dedup_spans(const std::vector<PredictedMention>& preds,
                                                 const std::string& sent_id, Warnings* warnings) {
  std::vector<const PredictedMention*> out;
  std::set<Span> seen;
  for (const PredictedMention& p : preds) {
    if (!seen.insert(p.span).second) {
      warn(warnings, "duplicate predicted span in sentence " + sent_id + "; scored once");
      continue;
    }
    out.push_back(&p);
  }
  return out;
}

template <typename Match>
PrfScore score_matched(const PredBySentence& preds, const GoldBySentence& gold,
                       Warnings* warnings, Match match) {
  long tp = 0, predicted = 0, gold_count = 0;
  for (const auto& [sid, mentions] : gold) gold_count += static_cast<long>(mentions.size());

  for (const auto& [sid, sent_preds] : preds) {
    auto deduped = dedup_spans(sent_preds, sid, warnings);
    predicted += static_cast<long>(deduped.size());
    auto git = gold.find(sid);
    if (git == gold.end()) continue;
    std::vector<bool> used(git->second.size(), false);
    for (const PredictedMention* p : deduped) {
      for (size_t i = 0; i < git->second.size(); ++i) {
        if (used[i]) continue;
        if (match(*p, git->second[i])) {
          used[i] = true;
          ++tp;
          break;
        }
      }
    }
  }
  return make_prf(tp, predicted, gold_count);
}

}  // namespace

PrfScore score_ti(const PredBySentence& preds, const GoldBySentence& gold, Warnings* warnings) {
  return score_matched(preds, gold, warnings,
                       [](const PredictedMention& p, const GoldMention& g) {
                         return p.span == g.span;
                       });
}

PrfScore score_tc(const PredBySentence& preds, const GoldBySentence& gold, Warnings* warnings) {
  return score_matched(preds, gold, warnings,
                       [](const PredictedMention& p, const GoldMention& g) {
                         return p.span == g.span && p.chosen_type == g.type_id;
                       });
}

std::map<int, double> score_hit_at_k(const PredBySentence& preds, const GoldBySentence& gold,
                                     const std::vector<int>& ks, Warnings* warnings) {
  long total = 0;
  std::map<int, long> hits;
  for (int k : ks) {
    if (k < 1) throw ArgumentError("Hit@K needs K >= 1");
    hits[k] = 0;
  }

  for (const auto& [sid, mentions] : gold) {
    auto pit = preds.find(sid);
    std::vector<const PredictedMention*> deduped;
    if (pit != preds.end()) deduped = dedup_spans(pit->second, sid, warnings);
    for (const GoldMention& g : mentions) {
      ++total;
      const PredictedMention* matched = nullptr;
      for (const PredictedMention* p : deduped)
        if (p->span == g.span) {
          matched = p;
          break;
        }
      if (!matched) continue;
      for (int k : ks) {
        size_t limit = std::min(matched->ranked_types.size(), static_cast<size_t>(k));
        for (size_t i = 0; i < limit; ++i)
          if (matched->ranked_types[i] == g.type_id) {
            ++hits[k];
            break;
          }
      }
    }
  }

  std::map<int, double> out;
  for (int k : ks)
    out[k] = total == 0 ? 0.0 : static_cast<double>(hits[k]) / static_cast<double>(total);
  return out;
}

PerStageReport per_stage_report(const std::vector<GoldSpanRecord>& records,
                                const std::vector<int>& ranking_ks,
                                const std::vector<int>& classification_ks, int coverage_k) {
  PerStageReport report;
  report.mentions = static_cast<long>(records.size());
  std::map<int, long> rank_hits, cls_hits;
  for (int k : ranking_ks) rank_hits[k] = 0;
  for (int k : classification_ks) cls_hits[k] = 0;

  auto hit_within = [](const std::vector<std::string>& order, const std::string& want, int k) {
    size_t limit = std::min(order.size(), static_cast<size_t>(k));
    for (size_t i = 0; i < limit; ++i)
      if (order[i] == want) return true;
    return false;
  };

  for (const GoldSpanRecord& r : records) {
    for (int k : ranking_ks)
      if (hit_within(r.ranking, r.gold_type, k)) ++rank_hits[k];
    if (!hit_within(r.ranking, r.gold_type, coverage_k)) continue;
    ++report.covered;
    for (int k : classification_ks)
      if (hit_within(r.classifier_order, r.gold_type, k)) ++cls_hits[k];
  }

  for (int k : ranking_ks)
    report.ranking_hit[k] = report.mentions == 0
                                ? 0.0
                                : static_cast<double>(rank_hits[k]) / report.mentions;
  report.classification_defined = report.covered > 0;
  for (int k : classification_ks)
    report.classification_hit[k] =
        report.covered == 0 ? 0.0 : static_cast<double>(cls_hits[k]) / report.covered;
  return report;
}

std::map<std::string, double> build_frequency_table(const Corpus& train) {
  std::map<std::string, double> freq;
  for (const Sentence& s : train.sentences) {
    for (const EventMention& m : s.mentions) {
      if (!m.candidate_type_ids.empty()) {
        double w = 1.0 / static_cast<double>(m.candidate_type_ids.size());
        for (const std::string& id : m.candidate_type_ids) freq[id] += w;
      } else if (m.gold_type_id) {
        freq[*m.gold_type_id] += 1.0;
      }
    }
  }
  return freq;
}

QuartileReport frequency_quartile_analysis(const PredBySentence& preds,
                                           const GoldBySentence& gold,
                                           const std::map<std::string, double>& train_freq,
                                           const Ontology& ont) {
  QuartileReport report;
  std::vector<std::pair<double, std::string>> ordered;
  for (const auto& [id, type] : ont.types()) {
    auto it = train_freq.find(id);
    double f = it == train_freq.end() ? 0.0 : it->second;
    if (it == train_freq.end()) ++report.unseen_types;
    ordered.emplace_back(f, id);
  }
  std::sort(ordered.begin(), ordered.end());

  // Four contiguous rank groups; the remainder goes to the lower groups so
  // ties at a boundary resolve downward.
  size_t n = ordered.size();
  size_t base = n / 4, rem = n % 4;
  std::map<std::string, int> group_of;
  size_t pos = 0;
  for (int g = 0; g < 4; ++g) {
    size_t size = base + (static_cast<size_t>(g) < rem ? 1 : 0);
    QuartileGroup& grp = report.groups[g];
    for (size_t i = 0; i < size; ++i, ++pos) {
      grp.type_ids.push_back(ordered[pos].second);
      group_of[ordered[pos].second] = g;
      if (i == 0) grp.min_freq = ordered[pos].first;
      grp.max_freq = ordered[pos].first;
    }
  }

  std::array<long, 4> tp{}, predicted{}, gold_count{};
  for (const auto& [sid, mentions] : gold)
    for (const GoldMention& g : mentions) {
      auto it = group_of.find(g.type_id);
      if (it != group_of.end()) ++gold_count[it->second];
    }

  for (const auto& [sid, sent_preds] : preds) {
    auto deduped = dedup_spans(sent_preds, sid, nullptr);
    auto git = gold.find(sid);
    std::vector<bool> used(git == gold.end() ? 0 : git->second.size(), false);
    for (const PredictedMention* p : deduped) {
      auto pg = group_of.find(p->chosen_type);
      if (pg != group_of.end()) ++predicted[pg->second];
      if (git == gold.end()) continue;
      for (size_t i = 0; i < git->second.size(); ++i) {
        if (used[i]) continue;
        const GoldMention& g = git->second[i];
        if (p->span == g.span && p->chosen_type == g.type_id) {
          used[i] = true;
          auto gg = group_of.find(g.type_id);
          if (gg != group_of.end()) ++tp[gg->second];
          break;
        }
      }
    }
  }

  for (int g = 0; g < 4; ++g)
    report.groups[g].tc = make_prf(tp[g], predicted[g], gold_count[g]);
  return report;
}

const char* to_string(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::candidate_set: return "candidate_set";
    case ErrorCategory::extended_roleset: return "extended_roleset";
    case ErrorCategory::child: return "child";
    case ErrorCategory::parent: return "parent";
    case ErrorCategory::sibling: return "sibling";
    case ErrorCategory::other: return "other";
  }
  return "other";
}

namespace {

ErrorCategory hierarchy_category(const Ontology& ont, const std::string& predicted,
                                 const std::string& gold) {
  switch (ont.hierarchy_relation(predicted, gold)) {
    case HierarchyRelation::child: return ErrorCategory::child;
    case HierarchyRelation::parent: return ErrorCategory::parent;
    case HierarchyRelation::sibling: return ErrorCategory::sibling;
    default: return ErrorCategory::other;
  }
}

}  // namespace

ErrorCategory categorize_error(const ErrorCase& err, const Ontology& ont,
                               bool prioritize_hierarchy, Warnings* warnings) {
  if (err.predicted_type == err.gold_type)
    throw ArgumentError("error case with predicted == gold: " + err.gold_type);

  const RolesetMapping* mapping = ont.find_mapping(err.gold_roleset);
  if (!mapping) {
    warn(warnings, "unknown gold roleset " + err.gold_roleset + "; error categorized as other");
    return ErrorCategory::other;
  }

  bool in_candidates = std::find(mapping->candidate_type_ids.begin(),
                                 mapping->candidate_type_ids.end(),
                                 err.predicted_type) != mapping->candidate_type_ids.end();
  if (in_candidates) return ErrorCategory::candidate_set;

  std::string gold_pred = roleset_predicate(err.gold_roleset);
  bool extended = false;
  for (const auto& [rid, m] : ont.mappings()) {
    if (roleset_predicate(rid) != gold_pred) continue;
    if (std::find(m.candidate_type_ids.begin(), m.candidate_type_ids.end(),
                  err.predicted_type) != m.candidate_type_ids.end()) {
      extended = true;
      break;
    }
  }

  ErrorCategory hier = hierarchy_category(ont, err.predicted_type, err.gold_type);
  if (prioritize_hierarchy && hier != ErrorCategory::other) return hier;
  if (extended) return ErrorCategory::extended_roleset;
  return hier;
}

std::vector<std::pair<ErrorCase, ErrorCategory>> categorize_errors(
    const std::vector<ErrorCase>& errors, const Ontology& ont, bool prioritize_hierarchy,
    Warnings* warnings) {
  std::vector<std::pair<ErrorCase, ErrorCategory>> out;
  out.reserve(errors.size());
  for (const ErrorCase& e : errors)
    out.emplace_back(e, categorize_error(e, ont, prioritize_hierarchy, warnings));
  return out;
}

std::vector<ErrorCase> collect_errors(const PredBySentence& preds, const GoldBySentence& gold) {
  std::vector<ErrorCase> out;
  for (const auto& [sid, mentions] : gold) {
    auto pit = preds.find(sid);
    if (pit == preds.end()) continue;
    auto deduped = dedup_spans(pit->second, sid, nullptr);
    for (const GoldMention& g : mentions) {
      for (const PredictedMention* p : deduped) {
        if (p->span == g.span) {
          if (p->chosen_type != g.type_id)
            out.push_back({g.mention_id, p->chosen_type, g.type_id, g.roleset_id});
          break;
        }
      }
    }
  }
  return out;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string quoted = "\"";
  for (char c : s) {
    if (c == '"') quoted += '"';
    quoted += c;
  }
  quoted += '"';
  return quoted;
}

}  // namespace

void save_errors_csv(const std::filesystem::path& path,
                     const std::vector<std::pair<ErrorCase, ErrorCategory>>& rows) {
  std::ostringstream os;
  os << "mention_id,predicted,gold,category\n";
  for (const auto& [err, cat] : rows)
    os << csv_field(err.mention_id) << ',' << csv_field(err.predicted_type) << ','
       << csv_field(err.gold_type) << ',' << to_string(cat) << '\n';
  atomic_write_file(path, os.str());
}

json MetricReport::to_json() const {
  auto prf = [](const PrfScore& s) {
    return json{{"precision", s.precision}, {"recall", s.recall},   {"f1", s.f1},
                {"tp", s.tp},               {"predicted", s.predicted}, {"gold", s.gold}};
  };
  json hits = json::object();
  for (const auto& [k, rate] : hit_at) hits[std::to_string(k)] = rate;
  return json{{"ti", prf(ti)},
              {"tc", prf(tc)},
              {"hit_at", hits},
              {"support",
               {{"sentences", sentences},
                {"gold_mentions", gold_mentions},
                {"predicted_mentions", predicted_mentions}}}};
}

MetricReport evaluate_predictions(const PredBySentence& preds, const GoldBySentence& gold,
                                  const std::vector<int>& ks, Warnings* warnings) {
  MetricReport report;
  report.ti = score_ti(preds, gold, warnings);
  report.tc = score_tc(preds, gold, nullptr);
  report.hit_at = score_hit_at_k(preds, gold, ks, nullptr);
  report.sentences = static_cast<long>(gold.size());
  report.gold_mentions = report.ti.gold;
  report.predicted_mentions = report.ti.predicted;
  return report;
}

}  // namespace evdet
