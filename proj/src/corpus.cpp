#include "evdet/corpus.hpp"

#include <algorithm>
#include <set>

namespace evdet {

Sentence sentence_from_json(const json& rec, const std::string& where) {
  Sentence s;
  try {
    s.sent_id = rec.at("sent_id").get<std::string>();
    s.doc_id = rec.at("doc_id").get<std::string>();
    s.genre = rec.value("genre", "");
    s.tokens = rec.at("tokens").get<std::vector<std::string>>();
    if (rec.contains("mentions")) {
      for (const auto& mrec : rec.at("mentions")) {
        EventMention m;
        m.mention_id = mrec.at("mention_id").get<std::string>();
        m.span.start = mrec.at("start").get<int>();
        m.span.end = mrec.at("end").get<int>();
        m.roleset_id = mrec.value("roleset_id", "");
        if (mrec.contains("pos_tag") && !mrec.at("pos_tag").is_null()) {
          m.pos_tag = mrec.at("pos_tag").get<std::string>();
        }
        if (mrec.contains("gold_type_id") && !mrec.at("gold_type_id").is_null()) {
          m.gold_type_id = mrec.at("gold_type_id").get<std::string>();
        }
        if (mrec.contains("candidate_type_ids")) {
          m.candidate_type_ids = mrec.at("candidate_type_ids").get<std::vector<std::string>>();
        }
        s.mentions.push_back(std::move(m));
      }
    }
  } catch (const json::exception& e) {
    throw ParseError(where + ": malformed sentence record: " + e.what());
  }
  if (s.tokens.empty()) throw ValidationError(where + ": sentence " + s.sent_id + " has no tokens");
  const int n = static_cast<int>(s.tokens.size());
  for (const auto& m : s.mentions) {
    if (m.span.start < 0 || m.span.end < m.span.start || m.span.end >= n) {
      throw ValidationError(where + ": mention " + m.mention_id + " span [" +
                            std::to_string(m.span.start) + "," + std::to_string(m.span.end) +
                            "] out of range for " + std::to_string(n) + " tokens");
    }
  }
  return s;
}

json sentence_to_json(const Sentence& s) {
  json mentions = json::array();
  for (const auto& m : s.mentions) {
    json mrec{{"mention_id", m.mention_id}, {"start", m.span.start}, {"end", m.span.end},
              {"roleset_id", m.roleset_id}};
    if (m.pos_tag) mrec["pos_tag"] = *m.pos_tag;
    if (m.gold_type_id) mrec["gold_type_id"] = *m.gold_type_id;
    if (!m.candidate_type_ids.empty()) mrec["candidate_type_ids"] = m.candidate_type_ids;
    mentions.push_back(std::move(mrec));
  }
  json rec{{"sent_id", s.sent_id}, {"doc_id", s.doc_id}, {"tokens", s.tokens},
           {"mentions", std::move(mentions)}};
  if (!s.genre.empty()) rec["genre"] = s.genre;
  return rec;
}

Corpus load_corpus(const std::filesystem::path& path) {
  Corpus corpus;
  auto records = read_jsonl(path);
  std::set<std::string> seen_ids;
  size_t lineno = 0;
  for (const auto& rec : records) {
    ++lineno;
    Sentence s = sentence_from_json(rec, path.string() + ":" + std::to_string(lineno));
    if (!seen_ids.insert(s.sent_id).second) {
      throw ValidationError("duplicate sent_id: " + s.sent_id);
    }
    corpus.sentences.push_back(std::move(s));
  }
  return corpus;
}

void save_corpus(const std::filesystem::path& path, const Corpus& corpus) {
  std::vector<json> records;
  records.reserve(corpus.sentences.size());
  for (const auto& s : corpus.sentences) records.push_back(sentence_to_json(s));
  write_jsonl(path, records);
}

std::map<std::string, int> count_roleset_mentions(const Corpus& corpus) {
  std::map<std::string, int> counts;
  for (const auto& s : corpus.sentences) {
    for (const auto& m : s.mentions) counts[m.roleset_id] += 1;
  }
  return counts;
}

int attach_candidates(Corpus& corpus, const Ontology& ont) {
  int dropped = 0;
  for (auto& s : corpus.sentences) {
    std::vector<EventMention> kept;
    kept.reserve(s.mentions.size());
    for (auto& m : s.mentions) {
      const RolesetMapping* mapping = ont.find_mapping(m.roleset_id);
      if (mapping == nullptr) {
        ++dropped;
        continue;
      }
      m.candidate_type_ids = mapping->candidate_type_ids;
      kept.push_back(std::move(m));
    }
    s.mentions = std::move(kept);
  }
  return dropped;
}

bool is_special_token(const std::string& token) {
  if (token.find('*') != std::string::npos) return true;
  static const std::set<std::string> brackets = {"-LRB-", "-RRB-", "(", ")", "[", "]"};
  return brackets.count(token) > 0;
}

namespace {

// Strips special tokens from one sentence and remaps mention spans. A
// mention whose span loses a token cannot be remapped faithfully and is
// dropped.
void strip_special_tokens(Sentence& s, CleanReport& report) {
  std::vector<int> new_index(s.tokens.size(), -1);
  std::vector<std::string> kept;
  for (size_t i = 0; i < s.tokens.size(); ++i) {
    if (is_special_token(s.tokens[i])) {
      ++report.special_tokens_removed;
      continue;
    }
    new_index[i] = static_cast<int>(kept.size());
    kept.push_back(s.tokens[i]);
  }
  if (kept.size() == s.tokens.size()) return;

  std::vector<EventMention> mentions;
  for (auto& m : s.mentions) {
    bool intact = true;
    for (int k = m.span.start; k <= m.span.end; ++k) {
      if (new_index[k] < 0) {
        intact = false;
        break;
      }
    }
    if (!intact) {
      ++report.mentions_removed_special;
      continue;
    }
    m.span.start = new_index[m.span.start];
    m.span.end = new_index[m.span.end];
    mentions.push_back(std::move(m));
  }
  s.tokens = std::move(kept);
  s.mentions = std::move(mentions);
}

void drop_overlapping_mentions(Sentence& s, CleanReport& report) {
  const size_t n = s.mentions.size();
  if (n < 2) return;
  std::vector<bool> bad(n, false);
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      if (s.mentions[i].span.overlaps(s.mentions[j].span)) {
        bad[i] = bad[j] = true;
      }
    }
  }
  std::vector<EventMention> kept;
  for (size_t i = 0; i < n; ++i) {
    if (bad[i]) {
      ++report.mentions_removed_overlap;
    } else {
      kept.push_back(std::move(s.mentions[i]));
    }
  }
  s.mentions = std::move(kept);
}

}  // namespace

CleanReport clean_corpus(Corpus& corpus, const CleanOptions& options) {
  CleanReport report;

  for (auto& s : corpus.sentences) strip_special_tokens(s, report);

  // Short-sentence rule, applied after special-token removal.
  {
    std::vector<Sentence> kept;
    kept.reserve(corpus.sentences.size());
    for (auto& s : corpus.sentences) {
      if (s.tokens.size() < 3) {
        ++report.sentences_removed_short;
      } else {
        kept.push_back(std::move(s));
      }
    }
    corpus.sentences = std::move(kept);
  }

  // Corpus-global de-duplication on the post-strip token sequence.
  {
    std::set<std::string> seen;
    std::vector<Sentence> kept;
    kept.reserve(corpus.sentences.size());
    for (auto& s : corpus.sentences) {
      std::string key = join_tokens(s.tokens, 0, s.tokens.size());
      if (!seen.insert(std::move(key)).second) {
        ++report.sentences_removed_duplicate;
      } else {
        kept.push_back(std::move(s));
      }
    }
    corpus.sentences = std::move(kept);
  }

  for (auto& s : corpus.sentences) {
    drop_overlapping_mentions(s, report);
    if (options.drop_modal_for_amr && s.genre == options.amr_genre) {
      std::vector<EventMention> kept;
      for (auto& m : s.mentions) {
        if (m.pos_tag && (*m.pos_tag == "MD" || *m.pos_tag == "TO")) {
          ++report.mentions_removed_pos;
        } else {
          kept.push_back(std::move(m));
        }
      }
      s.mentions = std::move(kept);
    }
  }

  return report;
}

CorpusSplit split_corpus(const Corpus& corpus, double train_ratio, double dev_ratio,
                         double test_ratio, uint64_t seed, bool allow_empty) {
  const double sum = train_ratio + dev_ratio + test_ratio;
  if (std::abs(sum - 1.0) > 1e-9) throw ArgumentError("split ratios must sum to 1");

  // Documents grouped by genre; everything ordered for determinism.
  std::map<std::string, std::vector<std::string>> docs_by_genre;
  std::map<std::string, std::string> doc_genre;
  for (const auto& s : corpus.sentences) {
    if (s.doc_id.empty()) throw ValidationError("sentence " + s.sent_id + " has no doc_id");
    auto it = doc_genre.find(s.doc_id);
    if (it == doc_genre.end()) {
      doc_genre.emplace(s.doc_id, s.genre);
      docs_by_genre[s.genre].push_back(s.doc_id);
    } else if (it->second != s.genre) {
      throw ValidationError("document " + s.doc_id + " spans multiple genres");
    }
  }

  size_t total_docs = doc_genre.size();
  if (total_docs < 3 && !allow_empty) {
    throw ArgumentError("need at least 3 documents to form non-degenerate splits (got " +
                        std::to_string(total_docs) + ")");
  }

  const double ratios[3] = {train_ratio, dev_ratio, test_ratio};
  std::map<std::string, int> doc_split;  // doc_id -> 0/1/2
  for (auto& [genre, docs] : docs_by_genre) {
    std::sort(docs.begin(), docs.end());
    DetRng rng(fnv1a64(genre, seed ^ 0x5eed5eed5eed5eedULL));
    rng.shuffle(docs);

    const int n = static_cast<int>(docs.size());
    int counts[3];
    double fracs[3];
    int assigned = 0;
    for (int k = 0; k < 3; ++k) {
      double want = ratios[k] * n;
      counts[k] = static_cast<int>(want);
      fracs[k] = want - counts[k];
      assigned += counts[k];
    }
    // Largest remainder; ties resolved by split order (train, dev, test).
    while (assigned < n) {
      int best = 0;
      for (int k = 1; k < 3; ++k) {
        if (fracs[k] > fracs[best] + 1e-12) best = k;
      }
      counts[best] += 1;
      fracs[best] = -1.0;
      ++assigned;
    }

    int idx = 0;
    for (int k = 0; k < 3; ++k) {
      for (int c = 0; c < counts[k]; ++c) doc_split[docs[idx++]] = k;
    }
  }

  CorpusSplit split;
  Corpus* parts[3] = {&split.train, &split.dev, &split.test};
  for (const auto& s : corpus.sentences) {
    parts[doc_split.at(s.doc_id)]->sentences.push_back(s);
  }

  if (!allow_empty) {
    if (split.train.sentences.empty() || split.dev.sentences.empty() ||
        split.test.sentences.empty()) {
      throw ArgumentError("a split came out empty; pass allow_empty to permit this");
    }
  }
  return split;
}

}  // namespace evdet
