#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "evdet/common.hpp"
#include "evdet/ontology.hpp"

namespace evdet {

// Inclusive token interval [start, end].
struct Span {
  int start = 0;
  int end = 0;

  bool operator==(const Span& o) const { return start == o.start && end == o.end; }
  bool operator<(const Span& o) const {
    return start != o.start ? start < o.start : end < o.end;
  }
  int length() const { return end - start + 1; }
  bool overlaps(const Span& o) const { return start <= o.end && o.start <= end; }
};

struct EventMention {
  std::string mention_id;
  Span span;
  std::string roleset_id;
  std::vector<std::string> candidate_type_ids;  // populated by attach_candidates
  std::optional<std::string> gold_type_id;      // dev/test only
  std::optional<std::string> pos_tag;

  bool clean() const { return candidate_type_ids.size() == 1; }
};

struct Sentence {
  std::string sent_id;
  std::string doc_id;
  std::string genre;  // empty when unknown
  std::vector<std::string> tokens;
  std::vector<EventMention> mentions;
};

// A flat list of sentences; mentions live on their sentence.
struct Corpus {
  std::vector<Sentence> sentences;
};

struct CorpusSplit {
  Corpus train, dev, test;
};

Corpus load_corpus(const std::filesystem::path& path);
void save_corpus(const std::filesystem::path& path, const Corpus& corpus);
json sentence_to_json(const Sentence& s);
Sentence sentence_from_json(const json& rec, const std::string& where);

// Mention counts per roleset, for the ontology frequency filter.
std::map<std::string, int> count_roleset_mentions(const Corpus& corpus);

// Fills candidate_type_ids from the ontology's roleset mapping. Mentions
// whose roleset is absent from the (filtered) ontology are dropped; the
// returned count says how many.
int attach_candidates(Corpus& corpus, const Ontology& ont);

struct CleanOptions {
  // Remove mentions tagged MD or TO in sentences whose genre carries
  // AMR-style provenance.
  bool drop_modal_for_amr = true;
  std::string amr_genre = "amr";
};

struct CleanReport {
  int sentences_removed_short = 0;
  int sentences_removed_duplicate = 0;
  int mentions_removed_special = 0;
  int mentions_removed_overlap = 0;
  int mentions_removed_pos = 0;
  int special_tokens_removed = 0;
};

bool is_special_token(const std::string& token);

// Cleaning rules, applied in order: strip special tokens (remapping spans),
// drop sentences shorter than 3 tokens, de-duplicate by exact token sequence
// (corpus-global, first wins), drop both mentions of every overlapping pair,
// drop MD/TO mentions for AMR-provenance sentences. Idempotent.
CleanReport clean_corpus(Corpus& corpus, const CleanOptions& options = {});

// Document-level stratified split. Within each genre the document-count
// ratio deviates from the target by at most one document (largest-remainder
// apportionment over shuffled documents). Deterministic given seed.
CorpusSplit split_corpus(const Corpus& corpus, double train_ratio, double dev_ratio,
                         double test_ratio, uint64_t seed, bool allow_empty = false);

}  // namespace evdet
