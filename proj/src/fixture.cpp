#include "evdet/fixture.hpp"

#include <algorithm>
#include <set>

namespace evdet {

namespace {

std::string pad_number(int value, int width) {
  std::string s = std::to_string(value);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

std::string make_word(DetRng& rng) {
  static const char consonants[] = "bdfgklmnprstvz";
  static const char vowels[] = "aeiou";
  std::string w;
  for (int s = 0; s < 3; ++s) {
    w += consonants[rng.next_below(sizeof consonants - 1)];
    w += vowels[rng.next_below(sizeof vowels - 1)];
  }
  return w;
}

std::string fresh_word(DetRng& rng, std::set<std::string>& taken) {
  for (;;) {
    std::string w = make_word(rng);
    if (taken.insert(w).second) return w;
  }
}

}  // namespace

FixtureResult generate_fixture(const FixtureSpec& spec) {
  if (spec.type_count < 4) throw ArgumentError("fixture needs at least 4 types");
  if (spec.vocab_per_type < 4) throw ArgumentError("fixture needs at least 4 words per type");
  if (spec.sentences_per_type < 1) throw ArgumentError("sentences_per_type must be >= 1");
  if (spec.filler_pool < 6) throw ArgumentError("filler_pool must be >= 6");
  if (spec.doc_size < 1) throw ArgumentError("doc_size must be >= 1");
  if (spec.noise_rate < 0.0 || spec.noise_rate > 1.0)
    throw ArgumentError("noise_rate must lie in [0,1]");

  DetRng rng(spec.seed);
  std::set<std::string> taken = {"is", "defined", "as", "does", "indicate", "a",
                                 "an", "event", "yes", "no", "of", "involving",
                                 "and", "such"};

  // Disjoint vocabulary: per-type content words, per-type bigram tails,
  // shared fillers. Word 1 is a compound whose second piece is the clean
  // trigger, the way surface variants share a lemma. Types are paired off,
  // and each pair shares a polysemous trigger word that sits in both
  // definitions, so mentions triggering on it can only be told apart by
  // their context. Each type also owns a context cue word that appears in
  // no definition at all: models can pick it up only from labeled mentions,
  // which is what gives pseudo-labels something genuine to teach.
  std::vector<std::vector<std::string>> vocab(spec.type_count);
  std::vector<std::string> aux(spec.type_count), cue(spec.type_count), poly(spec.type_count);
  for (int t = 0; t < spec.type_count; ++t) {
    for (int v = 0; v < spec.vocab_per_type; ++v)
      vocab[t].push_back(fresh_word(rng, taken));
    vocab[t][1] = vocab[t][1] + "_" + vocab[t][0];
    aux[t] = fresh_word(rng, taken);
    cue[t] = fresh_word(rng, taken);
    poly[t] = (t % 2 == 1) ? poly[t - 1] : fresh_word(rng, taken);
  }
  // An odd last type has no twin and gets no polysemous sentences.
  auto paired = [&](int t) { return t % 2 == 0 ? t + 1 < spec.type_count : true; };
  std::vector<std::string> fillers;
  for (int f = 0; f < spec.filler_pool; ++f) fillers.push_back(fresh_word(rng, taken));

  std::vector<EventType> types;
  std::vector<std::string> type_ids;
  for (int t = 0; t < spec.type_count; ++t) {
    EventType ty;
    ty.type_id = "Q9" + pad_number(t, 3);
    ty.name = vocab[t][0];
    std::string def = "an event of " + vocab[t][0] + " involving";
    for (int v = 1; v < spec.vocab_per_type; ++v) def += " " + vocab[t][v];
    ty.definition = def;
    if (t % 4 != 0) ty.parent_id = "Q9" + pad_number(t - t % 4, 3);
    type_ids.push_back(ty.type_id);
    types.push_back(std::move(ty));
  }

  // Decoys at fixed offsets; the same decoys feed the confusion contexts.
  auto decoys = [&](int t, int count) {
    std::vector<std::string> out;
    for (int off = 1; static_cast<int>(out.size()) < count; ++off) {
      int d = (t + off * 3 + 1) % spec.type_count;
      if (d == t) continue;
      if (std::find(out.begin(), out.end(), type_ids[d]) == out.end())
        out.push_back(type_ids[d]);
    }
    return out;
  };

  std::vector<RolesetMapping> mappings;
  std::vector<std::vector<std::string>> noisy2(spec.type_count), noisy3(spec.type_count);
  for (int t = 0; t < spec.type_count; ++t) {
    mappings.push_back({vocab[t][0] + ".01", {type_ids[t]}});
    noisy2[t] = {type_ids[t]};
    for (const auto& d : decoys(t, 1)) noisy2[t].push_back(d);
    mappings.push_back({vocab[t][0] + ".02", noisy2[t]});
    noisy3[t] = {type_ids[t]};
    for (const auto& d : decoys(t, 2)) noisy3[t].push_back(d);
    mappings.push_back({vocab[t][0] + ".03", noisy3[t]});
    if (paired(t) && t % 2 == 0)
      mappings.push_back({poly[t] + ".02", {type_ids[t], type_ids[t + 1]}});
  }

  Ontology ontology;
  {
    std::vector<json> records;
    for (const auto& ty : types) {
      json rec{{"kind", "type"},
               {"type_id", ty.type_id},
               {"name", ty.name},
               {"definition", ty.definition}};
      if (ty.parent_id) rec["parent_id"] = *ty.parent_id;
      records.push_back(std::move(rec));
    }
    for (const auto& m : mappings)
      records.push_back(
          {{"kind", "mapping"}, {"roleset_id", m.roleset_id}, {"candidate_type_ids", m.candidate_type_ids}});
    ontology = ontology_from_records(records);
  }

  // Sentences. Trigger position and filler draw are retried until the token
  // sequence is corpus-unique, so later cleaning never drops a duplicate.
  std::set<std::string> seen_texts;
  struct Draft {
    std::vector<std::string> tokens;
    std::vector<EventMention> mentions;
  };
  std::vector<Draft> drafts;

  auto draw_fillers = [&](int count) {
    std::vector<std::string> out;
    for (int i = 0; i < count; ++i) out.push_back(fillers[rng.next_below(fillers.size())]);
    return out;
  };

  int mention_counter = 0;
  for (int t = 0; t < spec.type_count; ++t) {
    for (int s = 0; s < spec.sentences_per_type; ++s) {
      bool noisy = rng.next_double() < spec.noise_rate;
      bool bigram = rng.next_double() < spec.bigram_rate;
      bool confused = noisy && rng.next_double() < spec.confusion_rate;
      bool three_way = noisy && rng.next_double() < 0.5;
      // Half the noisy mentions trigger on the pair's shared word. Their
      // sentences always carry the type's cue word; only the "easy" half
      // also carries definition words, so a classifier that has never seen
      // labeled cue words can be confident on easy ones and is reduced to
      // guessing between the twins on hard ones.
      bool poly_mention = noisy && paired(t) && rng.next_below(2) == 1;
      bool easy_cue = poly_mention && rng.next_double() < 0.5;

      std::string trigger_word;
      std::string roleset;
      if (poly_mention) {
        trigger_word = poly[t];
        roleset = poly[t] + ".02";
        bigram = false;
        confused = false;
      } else if (noisy) {
        int pick = 1 + static_cast<int>(rng.next_below(
                           std::min<size_t>(2, static_cast<size_t>(spec.vocab_per_type - 1))));
        if (paired(t)) pick = 1;
        trigger_word = vocab[t][pick];
        roleset = vocab[t][0] + (three_way ? ".03" : ".02");
      } else {
        trigger_word = vocab[t][0];
        roleset = vocab[t][0] + ".01";
      }
      int decoy_index = 0;
      if (noisy && !poly_mention) {
        const std::string& decoy_id = (three_way ? noisy3[t] : noisy2[t])[1];
        decoy_index = static_cast<int>(std::find(type_ids.begin(), type_ids.end(), decoy_id) -
                                       type_ids.begin());
      }

      Draft d;
      for (int attempt = 0;; ++attempt) {
        if (attempt > 200) throw ConsistencyError("fixture cannot find a unique sentence");
        int front = 2 + static_cast<int>(rng.next_below(3));
        int back = 2 + static_cast<int>(rng.next_below(3));
        std::vector<std::string> tokens = draw_fillers(front);
        int start = front;
        tokens.push_back(trigger_word);
        int end = start;
        if (bigram) {
          tokens.push_back(aux[t]);
          end = start + 1;
        }
        // Confusion plants decoy-definition words in the context. Only
        // context-only vocabulary (index 3+) qualifies: words 0-2 serve as
        // triggers elsewhere, and planting those would poison span training.
        std::vector<std::string> tail = draw_fillers(back);
        if (confused) {
          tail[0] = vocab[decoy_index][3];
          tail[1] = vocab[decoy_index][spec.vocab_per_type - 1];
        }
        if (poly_mention) {
          tail[0] = cue[t];
          if (easy_cue) {
            tail[1] = vocab[t][3];
            if (back >= 3) tail[2] = vocab[t][spec.vocab_per_type - 1];
          }
        }
        tokens.insert(tokens.end(), tail.begin(), tail.end());

        std::string text = join_tokens(tokens, 0, tokens.size());
        if (!seen_texts.insert(text).second) continue;

        EventMention m;
        m.mention_id = "m" + pad_number(mention_counter, 5);
        m.span = Span{start, end};
        m.roleset_id = roleset;
        m.gold_type_id = type_ids[t];
        d.tokens = std::move(tokens);
        d.mentions.push_back(std::move(m));
        break;
      }
      ++mention_counter;
      drafts.push_back(std::move(d));
    }
  }

  for (int e = 0; e < spec.empty_sentences; ++e) {
    Draft d;
    for (int attempt = 0;; ++attempt) {
      if (attempt > 200) throw ConsistencyError("fixture cannot find a unique sentence");
      std::vector<std::string> tokens = draw_fillers(6 + static_cast<int>(rng.next_below(4)));
      std::string text = join_tokens(tokens, 0, tokens.size());
      if (!seen_texts.insert(text).second) continue;
      d.tokens = std::move(tokens);
      break;
    }
    drafts.push_back(std::move(d));
  }

  // Shuffle sentences into fixed-size docs alternating between two genres,
  // so the document split stratifies and every split mixes types.
  std::vector<size_t> order(drafts.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);

  Corpus corpus;
  const char* genres[2] = {"news", "forum"};
  for (size_t i = 0; i < order.size(); ++i) {
    int doc = static_cast<int>(i) / spec.doc_size;
    Sentence sent;
    sent.sent_id = "s" + pad_number(static_cast<int>(i), 5);
    sent.doc_id = "doc" + pad_number(doc, 4);
    sent.genre = genres[doc % 2];
    sent.tokens = std::move(drafts[order[i]].tokens);
    sent.mentions = std::move(drafts[order[i]].mentions);
    corpus.sentences.push_back(std::move(sent));
  }

  return {std::move(ontology), std::move(corpus)};
}

void write_fixture(const FixtureSpec& spec, const std::filesystem::path& ontology_path,
                   const std::filesystem::path& corpus_path) {
  FixtureResult fx = generate_fixture(spec);
  save_ontology(ontology_path, fx.ontology);
  save_corpus(corpus_path, fx.corpus);
}

}  // namespace evdet
