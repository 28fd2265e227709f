#include <doctest.h>

#include <random>
#include <set>

#include "support.hpp"
#include "tagforge/annotator.hpp"
#include "tagforge/chunker.hpp"
#include "tagforge/json_io.hpp"
#include "tagforge/tokens.hpp"

using namespace tagforge;

namespace {

std::vector<std::string> texts(const std::vector<Chunk>& chunks) {
  std::vector<std::string> out;
  for (const auto& c : chunks) out.push_back(c.text);
  return out;
}

std::vector<std::string> sentences(const std::string& text) {
  std::vector<std::string> out;
  for (auto r : split_sentences(text)) out.push_back(text.substr(r.start, r.end - r.start));
  return out;
}

ChunkingConfig cfg(ChunkStrategy s, std::size_t max, std::size_t overlap = 0) {
  ChunkingConfig c;
  c.strategy = s;
  c.max_chunk_size = max;
  c.overlap = overlap;
  return c;
}

Chunk mk(const std::string& doc, std::size_t index, std::size_t start, const std::string& text) {
  return Chunk{doc, index, start, start + text.size(), text, content_hash(text), false};
}

}  // namespace

TEST_CASE("token estimator formulas") {
  TokenEstimator chars;
  CHECK(chars.estimate("") == 0);
  CHECK(chars.estimate("abcd") == 1);
  CHECK(chars.estimate("abcde") == 2);
  CHECK(chars.estimate("\xC3\xA9\xC3\xA9\xC3\xA9\xC3\xA9") == 1);  // four code points
  TokenEstimator words(EstimatorMode::kWordsTimes4Over3);
  CHECK(words.estimate("") == 0);
  CHECK(words.estimate("one two three") == 4);
  CHECK(words.estimate("  one\ttwo\n") == 3);
  CHECK(parse_estimator_mode("chars_div_4") == EstimatorMode::kCharsDiv4);
  CHECK(parse_estimator_mode(to_string(EstimatorMode::kWordsTimes4Over3)) == EstimatorMode::kWordsTimes4Over3);
}

TEST_CASE("property: estimators are monotone under concatenation") {
  std::mt19937_64 rng(3);
  for (auto mode : {EstimatorMode::kCharsDiv4, EstimatorMode::kWordsTimes4Over3}) {
    TokenEstimator est(mode);
    for (int i = 0; i < 300; ++i) {
      auto a = test::random_text(rng, 10);
      auto b = test::random_text(rng, 10);
      CHECK(est.estimate(a + b) >= est.estimate(a));
      CHECK(est.estimate(a + b) >= est.estimate(b));
    }
  }
}

TEST_CASE("external token counts") {
  test::TempDir dir;
  write_file(dir / "counts.json", R"({"doc-1": 1234})");
  auto est = TokenEstimator::from_count_file(dir / "counts.json");
  CHECK(est.mode() == EstimatorMode::kExternalCountFile);
  CHECK(est.exact_count("doc-1") == 1234);
  CHECK_FALSE(est.exact_count("other").has_value());
  CHECK(est.estimate("abcdefgh") == 2);  // falls back to chars_div_4
}

TEST_CASE("sentence splitting rules") {
  CHECK(sentences("One. Two! Three?") == std::vector<std::string>{"One.", "Two!", "Three?"});
  CHECK(sentences("Dr. Okafor runs the clinic. It is busy.") ==
        std::vector<std::string>{"Dr. Okafor runs the clinic.", "It is busy."});
  CHECK(sentences("It costs 3.5 euros. Cheap.") == std::vector<std::string>{"It costs 3.5 euros.", "Cheap."});
  CHECK(sentences("\"Stop.\" She left.") == std::vector<std::string>{"\"Stop.\"", "She left."});
  CHECK(sentences("(Really.) Yes.") == std::vector<std::string>{"(Really.)", "Yes."});
  CHECK(sentences("no terminal punctuation\n\nnext paragraph") ==
        std::vector<std::string>{"no terminal punctuation", "next paragraph"});
  CHECK(sentences("e.g. this continues. Done.") == std::vector<std::string>{"e.g. this continues.", "Done."});
  CHECK(sentences("   ").empty());
}

TEST_CASE("paragraph splitting") {
  std::string t = "First para\nstill first.\n\n  Second para.  \n\n\n";
  auto ranges = split_paragraphs(t);
  REQUIRE(ranges.size() == 2);
  CHECK(t.substr(ranges[0].start, ranges[0].end - ranges[0].start) == "First para\nstill first.");
  CHECK(t.substr(ranges[1].start, ranges[1].end - ranges[1].start) == "Second para.");
}

TEST_CASE("greedy sentence packing") {
  Document doc{"d", "A. B. Long third sentence.", {}};
  // Estimates: "A. B." = 2 tokens, "Long third sentence." = 5, both together = 7.
  CHECK(texts(chunk(doc, cfg(ChunkStrategy::kSentence, 5))) ==
        std::vector<std::string>{"A. B.", "Long third sentence."});
  CHECK(texts(chunk(doc, cfg(ChunkStrategy::kSentence, 8))) == std::vector<std::string>{"A. B. Long third sentence."});
}

TEST_CASE("a single paragraph becomes one chunk") {
  Document doc{"d", "one paragraph only", {}};
  auto cs = chunk(doc, cfg(ChunkStrategy::kParagraph, 1000));
  REQUIRE(cs.size() == 1);
  CHECK(cs[0].text == doc.text);
  CHECK(cs[0].start == 0);
  CHECK(cs[0].end == doc.text.size());
}

TEST_CASE("oversized sentences are kept whole and flagged") {
  Document doc{"d", "Short. This sentence is definitely longer than the budget allows. End.", {}};
  auto cs = chunk(doc, cfg(ChunkStrategy::kSentence, 3));
  REQUIRE(cs.size() == 3);
  CHECK(cs[1].text == "This sentence is definitely longer than the budget allows.");
  CHECK(cs[1].oversized);
  CHECK_FALSE(cs[0].oversized);
}

TEST_CASE("token windows respect the budget and cover the text") {
  std::mt19937_64 rng(5);
  TokenEstimator est;
  for (int i = 0; i < 50; ++i) {
    std::string text = "w" + test::random_text(rng, 400);
    Document doc{"d", text, {}};
    if (normalize(text).empty()) continue;
    auto cd = chunk_document(doc, cfg(ChunkStrategy::kTokenWindow, 25));
    CHECK(cd.reconstruct() == text);
    for (const auto& c : cd.chunks) {
      if (!c.oversized) CHECK(est.estimate(c.text) <= 25);
    }
  }
}

TEST_CASE("overlapping token windows share text") {
  Document doc{"d", "one two three four five six seven eight nine ten eleven twelve", {}};
  auto cd = chunk_document(doc, cfg(ChunkStrategy::kTokenWindow, 4, 2), TokenEstimator(EstimatorMode::kWordsTimes4Over3));
  CHECK(cd.overlapping);
  REQUIRE(cd.chunks.size() >= 2);
  CHECK(cd.chunks[1].start < cd.chunks[0].end);
  for (const auto& c : cd.chunks) CHECK(doc.text.substr(c.start, c.end - c.start) == c.text);
}

TEST_CASE("property: every strategy covers the document and offsets round-trip") {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 200; ++i) {
    std::string text = "Start. " + test::random_text(rng, 60);
    Document doc{"doc" + std::to_string(i), text, {}};
    for (auto s : {ChunkStrategy::kSentence, ChunkStrategy::kParagraph, ChunkStrategy::kTokenWindow}) {
      auto cd = chunk_document(doc, cfg(s, 1 + i % 20));
      CHECK(cd.reconstruct() == text);
      CHECK(cd.separators.size() == cd.chunks.size() + 1);
      for (std::size_t k = 0; k < cd.chunks.size(); ++k) {
        const auto& c = cd.chunks[k];
        CHECK(c.index == k);
        CHECK(c.doc_id == doc.id);
        CHECK(text.substr(c.start, c.end - c.start) == c.text);
        CHECK(is_char_boundary(text, c.start));
        CHECK(is_char_boundary(text, c.end));
        CHECK(c.hash == content_hash(c.text));
      }
    }
  }
}

TEST_CASE("chunking is deterministic") {
  for (const auto& d : load_corpus(test::fixture("corpus.jsonl"))) {
    CHECK(chunk(d, cfg(ChunkStrategy::kSentence, 22)) == chunk(d, cfg(ChunkStrategy::kSentence, 22)));
  }
}

TEST_CASE("chunking rejects empty documents and bad configs") {
  CHECK_ERROR_CODE(chunk(Document{"d", "", {}}, ChunkingConfig{}), ErrorCode::kEmptyDocument);
  CHECK_ERROR_CODE(chunk(Document{"d", " \n\t ", {}}, ChunkingConfig{}), ErrorCode::kEmptyDocument);
  CHECK_ERROR_CODE(cfg(ChunkStrategy::kSentence, 0).validate(), ErrorCode::kInvalidArgument);
  CHECK_ERROR_CODE(cfg(ChunkStrategy::kTokenWindow, 4, 4).validate(), ErrorCode::kInvalidArgument);
  CHECK_ERROR_CODE(parse_chunk_strategy("semantic"), ErrorCode::kInvalidArgument);
}

TEST_CASE("dedup keeps first occurrences") {
  std::vector<Chunk> in{mk("a", 0, 0, "x"), mk("a", 1, 2, "x"), mk("b", 0, 0, "y")};
  auto r = dedup(in);
  CHECK(r.unique == std::vector<Chunk>{in[0], in[2]});
  REQUIRE(r.occurrences.size() == 2);
  CHECK(r.occurrences[content_hash("x")] == std::vector<Occurrence>{{"a", 0, 0, 1}, {"a", 1, 2, 3}});
  CHECK(r.occurrences[content_hash("y")] == std::vector<Occurrence>{{"b", 0, 0, 1}});
}

TEST_CASE("dedup of distinct chunks and idempotence") {
  std::vector<Chunk> in{mk("a", 0, 0, "x"), mk("a", 1, 2, "y"), mk("a", 2, 4, "z")};
  auto r = dedup(in);
  CHECK(r.unique == in);
  for (const auto& [h, list] : r.occurrences) CHECK(list.size() == 1);
  auto again = dedup(r.unique);
  CHECK(again.unique == r.unique);
  for (const auto& [h, list] : again.occurrences) CHECK(list.size() == 1);
}

TEST_CASE("dedup count matches a brute-force set oracle on the fixture corpus") {
  auto docs = load_corpus(test::fixture("corpus.jsonl"));
  for (std::size_t max : {5u, 8u, 22u, 60u, 250u}) {
    std::vector<Chunk> all;
    for (const auto& d : docs) {
      auto cs = chunk(d, cfg(ChunkStrategy::kSentence, max));
      all.insert(all.end(), cs.begin(), cs.end());
    }
    std::set<std::string> oracle;
    for (const auto& c : all) oracle.insert(normalize(c.text));
    CHECK(dedup(all).unique.size() == oracle.size());
  }
}

TEST_CASE("reassemble without tags is the identity") {
  for (const auto& d : load_corpus(test::fixture("corpus.jsonl"))) {
    auto cs = chunk(d, cfg(ChunkStrategy::kSentence, 8));
    auto r = dedup(cs);
    std::map<Digest256, TaggedChunk> tagged;
    for (const auto& c : r.unique) tagged[c.hash] = TaggedChunk{c, {}, {}, {}, false};
    CHECK(reassemble(d, r.occurrences, tagged) == d.text);
  }
}

TEST_CASE("a duplicated chunk carries its tag at every occurrence") {
  Document doc{"d", "Dresden is old.\n\nDresden is old.", {}};
  auto cs = chunk(doc, cfg(ChunkStrategy::kSentence, 4));
  REQUIRE(cs.size() == 2);
  auto r = dedup(cs);
  REQUIRE(r.unique.size() == 1);
  std::map<Digest256, TaggedChunk> tagged;
  tagged[r.unique[0].hash] = TaggedChunk{r.unique[0], {"Location"}, {}, {}, false};
  RenderOptions opts;
  opts.level = MarkupLevel::kChunk;
  CHECK(reassemble(doc, r.occurrences, tagged, opts) ==
        "<Location>Dresden is old.</Location>\n\n<Location>Dresden is old.</Location>");
}

TEST_CASE("reassemble needs every occurrence tagged") {
  Document doc{"d", "One. Two.", {}};
  auto r = dedup(chunk(doc, cfg(ChunkStrategy::kSentence, 1)));
  std::map<Digest256, TaggedChunk> tagged;
  CHECK_ERROR_CODE(reassemble(doc, r.occurrences, tagged), ErrorCode::kMissingTaggedChunk);
}

TEST_CASE("strip_tags undoes reassemble on the fixture corpus") {
  auto docs = load_corpus(test::fixture("corpus.jsonl"));
  std::vector<Chunk> all;
  for (const auto& d : docs) {
    auto cs = chunk(d, cfg(ChunkStrategy::kSentence, 22));
    all.insert(all.end(), cs.begin(), cs.end());
  }
  auto r = dedup(all);
  std::map<Digest256, TaggedChunk> tagged;
  for (const auto& c : r.unique) {
    std::vector<TagSpan> spans;
    std::size_t end = 4;
    while (end < c.text.size() && !is_char_boundary(c.text, end)) ++end;
    if (end < c.text.size()) spans.push_back({"Entity", 0, end});
    tagged[c.hash] = TaggedChunk{c, {"Topic"}, spans, {}, false};
  }
  for (const auto& d : docs) {
    auto out = reassemble(d, r.occurrences, tagged);
    CHECK(out != d.text);
    CHECK(strip_tags(out, {"Entity", "Topic"}) == d.text);
  }
}
