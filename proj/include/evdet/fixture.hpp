#pragma once

#include <filesystem>

#include "evdet/corpus.hpp"
#include "evdet/ontology.hpp"

namespace evdet {

// Planted-signal corpus: every type owns a small disjoint vocabulary that
// appears in its triggers, its definition, and nowhere else.
//
// Clean mentions (single-candidate roleset) trigger on the type's first
// word. Noisy mentions come in two flavors. Compound mentions trigger on a
// two-piece word whose second piece is the clean trigger, so a model
// trained on clean data carries over; a fraction of them also mix
// decoy-type words into the context, producing the low-margin cases a
// selection threshold is supposed to reject. Polysemous mentions trigger
// on a word shared by a pair of types and listed in both definitions;
// their sentences carry a per-type cue word that no definition contains,
// plus definition words on the easy half only. Hard polysemous mentions
// are therefore coin flips for any model that has not learned the cue
// words from labeled data, which is exactly the gap pseudo-labeled
// retraining is supposed to close.
struct FixtureSpec {
  int type_count = 20;
  int vocab_per_type = 4;  // >= 4; word 0 names the type, 1-2 are noisy triggers, 3+ context-only
  int sentences_per_type = 50;
  double noise_rate = 0.3;      // fraction of mentions with 2-3 candidate types
  double bigram_rate = 0.15;    // fraction of triggers spanning two tokens
  double confusion_rate = 0.5;  // fraction of noisy sentences with decoy context words
  int filler_pool = 30;
  int empty_sentences = 20;  // trigger-free sentences mixed in
  int doc_size = 10;
  uint64_t seed = 7;
};

struct FixtureResult {
  Ontology ontology;
  Corpus corpus;  // every mention carries its true type
};

FixtureResult generate_fixture(const FixtureSpec& spec);

void write_fixture(const FixtureSpec& spec, const std::filesystem::path& ontology_path,
                   const std::filesystem::path& corpus_path);

}  // namespace evdet
