#include <doctest.h>

#include <set>

#include "evdet/corpus.hpp"
#include "test_util.hpp"

using namespace evdet;

namespace {

Sentence make_sentence(const std::string& id, std::vector<std::string> tokens,
                       std::vector<EventMention> mentions = {}, const std::string& doc = "d1",
                       const std::string& genre = "news") {
  Sentence s;
  s.sent_id = id;
  s.doc_id = doc;
  s.genre = genre;
  s.tokens = std::move(tokens);
  s.mentions = std::move(mentions);
  return s;
}

EventMention make_mention(const std::string& id, int start, int end,
                          const std::string& roleset = "go.01") {
  EventMention m;
  m.mention_id = id;
  m.span = {start, end};
  m.roleset_id = roleset;
  return m;
}

}  // namespace

TEST_CASE("span basics") {
  Span a{2, 4};
  CHECK(a.length() == 3);
  CHECK(a.overlaps({4, 6}));
  CHECK(a.overlaps({0, 2}));
  CHECK_FALSE(a.overlaps({5, 7}));
  CHECK(Span{1, 2} < Span{1, 3});
  CHECK(Span{1, 5} < Span{2, 2});
}

TEST_CASE("corpus save/load round-trip") {
  testutil::TempDir dir;
  Corpus corpus;
  EventMention m = make_mention("m1", 1, 1);
  m.pos_tag = "VB";
  m.gold_type_id = "Q1";
  corpus.sentences.push_back(make_sentence("s1", {"they", "paid", "up"}, {m}));
  auto path = dir / "c.jsonl";
  save_corpus(path, corpus);
  Corpus loaded = load_corpus(path);
  REQUIRE(loaded.sentences.size() == 1);
  const Sentence& s = loaded.sentences[0];
  CHECK(s.tokens == std::vector<std::string>{"they", "paid", "up"});
  REQUIRE(s.mentions.size() == 1);
  CHECK(s.mentions[0].span == Span{1, 1});
  CHECK(s.mentions[0].pos_tag == std::optional<std::string>("VB"));
  CHECK(s.mentions[0].gold_type_id == std::optional<std::string>("Q1"));
}

TEST_CASE("out-of-range spans are rejected at load") {
  CHECK_THROWS_AS(
      sentence_from_json(json{{"sent_id", "s"},
                              {"doc_id", "d"},
                              {"tokens", {"a", "b"}},
                              {"mentions",
                               {{{"mention_id", "m"}, {"start", 1}, {"end", 2},
                                 {"roleset_id", "x.01"}}}}},
                         "t"),
      ValidationError);
}

TEST_CASE("special tokens are recognized") {
  CHECK(is_special_token("*PRO*"));
  CHECK(is_special_token("*"));
  CHECK(is_special_token("-LRB-"));
  CHECK(is_special_token("("));
  CHECK(is_special_token("star*less"));  // any '*' counts
  CHECK_FALSE(is_special_token("word"));
}

TEST_CASE("cleaning strips special tokens and remaps spans") {
  Corpus corpus;
  // tokens: * they paid -LRB- fees -RRB-  -> they paid fees
  corpus.sentences.push_back(make_sentence(
      "s1", {"*", "they", "paid", "-LRB-", "fees", "-RRB-"},
      {make_mention("m1", 2, 2), make_mention("m2", 3, 3)}));
  CleanReport rep = clean_corpus(corpus);
  REQUIRE(corpus.sentences.size() == 1);
  const Sentence& s = corpus.sentences[0];
  CHECK(s.tokens == std::vector<std::string>{"they", "paid", "fees"});
  REQUIRE(s.mentions.size() == 1);  // m2 sat on a removed token
  CHECK(s.mentions[0].mention_id == "m1");
  CHECK(s.mentions[0].span == Span{1, 1});
  CHECK(rep.special_tokens_removed == 3);
  CHECK(rep.mentions_removed_special == 1);
}

TEST_CASE("cleaning drops short and duplicate sentences") {
  Corpus corpus;
  corpus.sentences.push_back(make_sentence("s1", {"hi", "there"}));
  corpus.sentences.push_back(make_sentence("s2", {"they", "paid", "fees"}));
  corpus.sentences.push_back(make_sentence("s3", {"they", "paid", "fees"}, {}, "d2"));
  corpus.sentences.push_back(make_sentence("s4", {"other", "text", "here"}));
  CleanReport rep = clean_corpus(corpus);
  CHECK(rep.sentences_removed_short == 1);
  CHECK(rep.sentences_removed_duplicate == 1);
  REQUIRE(corpus.sentences.size() == 2);
  CHECK(corpus.sentences[0].sent_id == "s2");  // first occurrence wins
  CHECK(corpus.sentences[1].sent_id == "s4");
}

TEST_CASE("overlapping mention pairs are both dropped") {
  Corpus corpus;
  corpus.sentences.push_back(make_sentence(
      "s1", {"a", "b", "c", "d", "e"},
      {make_mention("m1", 0, 1), make_mention("m2", 1, 2), make_mention("m3", 4, 4)}));
  CleanReport rep = clean_corpus(corpus);
  REQUIRE(corpus.sentences[0].mentions.size() == 1);
  CHECK(corpus.sentences[0].mentions[0].mention_id == "m3");
  CHECK(rep.mentions_removed_overlap == 2);
}

TEST_CASE("modal/infinitive mentions drop only for AMR provenance") {
  EventMention modal = make_mention("m1", 0, 0);
  modal.pos_tag = "MD";
  EventMention verb = make_mention("m2", 1, 1);
  verb.pos_tag = "VB";

  Corpus corpus;
  corpus.sentences.push_back(
      make_sentence("s1", {"would", "go", "now"}, {modal, verb}, "d1", "amr"));
  corpus.sentences.push_back(
      make_sentence("s2", {"would", "stay", "here"}, {modal}, "d2", "news"));
  CleanReport rep = clean_corpus(corpus);
  CHECK(corpus.sentences[0].mentions.size() == 1);
  CHECK(corpus.sentences[0].mentions[0].mention_id == "m2");
  CHECK(corpus.sentences[1].mentions.size() == 1);  // non-AMR keeps MD
  CHECK(rep.mentions_removed_pos == 1);

  CleanOptions keep;
  keep.drop_modal_for_amr = false;
  Corpus corpus2;
  corpus2.sentences.push_back(
      make_sentence("s1", {"would", "go", "now"}, {modal, verb}, "d1", "amr"));
  clean_corpus(corpus2, keep);
  CHECK(corpus2.sentences[0].mentions.size() == 2);
}

TEST_CASE("cleaning is idempotent") {
  Corpus corpus;
  corpus.sentences.push_back(make_sentence(
      "s1", {"*", "they", "paid", "fees"}, {make_mention("m1", 2, 2)}));
  corpus.sentences.push_back(make_sentence("s2", {"one", "two"}));
  corpus.sentences.push_back(make_sentence("s3", {"they", "paid", "fees"}, {}, "d2"));
  clean_corpus(corpus);
  Corpus before = corpus;
  CleanReport second = clean_corpus(corpus);
  CHECK(second.sentences_removed_short == 0);
  CHECK(second.sentences_removed_duplicate == 0);
  CHECK(second.mentions_removed_special == 0);
  CHECK(second.mentions_removed_overlap == 0);
  CHECK(second.mentions_removed_pos == 0);
  CHECK(second.special_tokens_removed == 0);
  REQUIRE(before.sentences.size() == corpus.sentences.size());
  for (size_t i = 0; i < before.sentences.size(); ++i)
    CHECK(before.sentences[i].tokens == corpus.sentences[i].tokens);
}

TEST_CASE("attach_candidates fills sets and drops unmapped mentions") {
  Ontology ont = ontology_from_records({
      json{{"kind", "type"}, {"type_id", "Q1"}, {"name", "n"}, {"definition", "d"}},
      json{{"kind", "type"}, {"type_id", "Q2"}, {"name", "n"}, {"definition", "d"}},
      json{{"kind", "mapping"}, {"roleset_id", "pay.01"},
           {"candidate_type_ids", {"Q1", "Q2"}}},
  });
  Corpus corpus;
  corpus.sentences.push_back(make_sentence(
      "s1", {"they", "paid", "fast"},
      {make_mention("m1", 1, 1, "pay.01"), make_mention("m2", 2, 2, "zoom.01")}));
  int dropped = attach_candidates(corpus, ont);
  CHECK(dropped == 1);
  REQUIRE(corpus.sentences[0].mentions.size() == 1);
  CHECK(corpus.sentences[0].mentions[0].candidate_type_ids ==
        std::vector<std::string>{"Q1", "Q2"});
}

TEST_CASE("count_roleset_mentions tallies the whole corpus") {
  Corpus corpus;
  corpus.sentences.push_back(make_sentence(
      "s1", {"a", "b", "c"}, {make_mention("m1", 0, 0, "x.01"), make_mention("m2", 1, 1, "x.01")}));
  corpus.sentences.push_back(
      make_sentence("s2", {"d", "e", "f"}, {make_mention("m3", 0, 0, "y.01")}, "d2"));
  auto counts = count_roleset_mentions(corpus);
  CHECK(counts.at("x.01") == 2);
  CHECK(counts.at("y.01") == 1);
}

namespace {

Corpus genre_corpus(int news_docs, int forum_docs) {
  Corpus corpus;
  int sid = 0;
  for (int d = 0; d < news_docs; ++d)
    corpus.sentences.push_back(make_sentence("s" + std::to_string(sid++),
                                             {"news", "doc", std::to_string(d)}, {},
                                             "n" + std::to_string(d), "news"));
  for (int d = 0; d < forum_docs; ++d)
    corpus.sentences.push_back(make_sentence("s" + std::to_string(sid++),
                                             {"forum", "doc", std::to_string(d)}, {},
                                             "f" + std::to_string(d), "forum"));
  return corpus;
}

int doc_count(const Corpus& c, const std::string& genre) {
  std::set<std::string> docs;
  for (const auto& s : c.sentences)
    if (s.genre == genre) docs.insert(s.doc_id);
  return static_cast<int>(docs.size());
}

}  // namespace

TEST_CASE("split apportions each genre within one document of the target") {
  Corpus corpus = genre_corpus(40, 60);
  CorpusSplit split = split_corpus(corpus, 0.90, 0.05, 0.05, 123);
  // 40 news docs: 36/2/2. 60 forum docs: 54/3/3.
  CHECK(doc_count(split.train, "news") == 36);
  CHECK(doc_count(split.dev, "news") == 2);
  CHECK(doc_count(split.test, "news") == 2);
  CHECK(doc_count(split.train, "forum") == 54);
  CHECK(doc_count(split.dev, "forum") == 3);
  CHECK(doc_count(split.test, "forum") == 3);
  CHECK(split.train.sentences.size() + split.dev.sentences.size() +
            split.test.sentences.size() ==
        corpus.sentences.size());
}

TEST_CASE("split is deterministic and document-atomic") {
  Corpus corpus = genre_corpus(10, 10);
  // each doc gets a second sentence
  size_t n = corpus.sentences.size();
  for (size_t i = 0; i < n; ++i) {
    Sentence extra = corpus.sentences[i];
    extra.sent_id += "_b";
    extra.tokens.push_back("more");
    corpus.sentences.push_back(extra);
  }
  CorpusSplit a = split_corpus(corpus, 0.8, 0.1, 0.1, 9);
  CorpusSplit b = split_corpus(corpus, 0.8, 0.1, 0.1, 9);
  auto ids = [](const Corpus& c) {
    std::vector<std::string> out;
    for (const auto& s : c.sentences) out.push_back(s.sent_id);
    return out;
  };
  CHECK(ids(a.train) == ids(b.train));
  CHECK(ids(a.dev) == ids(b.dev));
  CHECK(ids(a.test) == ids(b.test));

  // no document straddles two splits
  for (const Corpus* part : {&a.train, &a.dev, &a.test}) {
    for (const auto& s : part->sentences) {
      for (const Corpus* other : {&a.train, &a.dev, &a.test}) {
        if (other == part) continue;
        for (const auto& o : other->sentences) CHECK(o.doc_id != s.doc_id);
      }
    }
  }
}

TEST_CASE("split validates ratios and degenerate inputs") {
  Corpus corpus = genre_corpus(2, 0);
  CHECK_THROWS_AS(split_corpus(corpus, 0.5, 0.4, 0.2, 1), ArgumentError);
  CHECK_THROWS_AS(split_corpus(corpus, 0.8, 0.1, 0.1, 1), ArgumentError);
  CorpusSplit s = split_corpus(corpus, 0.8, 0.1, 0.1, 1, /*allow_empty=*/true);
  CHECK(s.train.sentences.size() + s.dev.sentences.size() + s.test.sentences.size() == 2);
}
