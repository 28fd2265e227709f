#include <doctest.h>

#include <random>

#include "support.hpp"
#include "tagforge/annotator.hpp"
#include "tagforge/json_io.hpp"

using namespace tagforge;

namespace {

const std::set<std::string> kCats{"Person", "City", "Landmark", "Zone"};

// Offsets of `needle` in `text`, found by plain search.
TagSpan span_of(const std::string& text, const std::string& needle, const std::string& cat, std::size_t from = 0) {
  auto pos = text.find(needle, from);
  REQUIRE(pos != std::string::npos);
  return {cat, pos, pos + needle.size()};
}

std::vector<TagSpan> random_spans(std::mt19937_64& rng, const std::string& text, std::size_t max_n) {
  auto b = test::boundaries(text);
  std::vector<TagSpan> out;
  if (b.size() < 2) return out;
  static const char* names[] = {"Person", "City", "Landmark", "Zone"};
  std::uniform_int_distribution<std::size_t> n(0, max_n);
  std::uniform_int_distribution<std::size_t> idx(0, b.size() - 1);
  std::uniform_int_distribution<std::size_t> cat(0, 3);
  for (std::size_t i = 0, k = n(rng); i < k; ++i) {
    auto x = b[idx(rng)], y = b[idx(rng)];
    if (x == y) continue;
    out.push_back({names[cat(rng)], std::min(x, y), std::max(x, y)});
  }
  return out;
}

std::size_t markup_overhead(const std::vector<TagSpan>& spans) {
  std::size_t n = 0;
  for (const auto& s : spans) n += 2 * s.category.size() + 5;
  return n;
}

}  // namespace

TEST_CASE("chunk-level markup wraps the whole chunk") {
  CHECK(render_chunk_markup("Priya bought bread on the Altmarkt.", {"City"}) ==
        "<City>Priya bought bread on the Altmarkt.</City>");
  CHECK(render_chunk_markup("t", {"B", "A"}) == "<A><B>t</B></A>");
  MarkupPolicy p;
  p.chunk_label_order = {"B"};
  CHECK(render_chunk_markup("t", {"A", "B", "C"}, p) == "<B><A><C>t</C></A></B>");
  CHECK(render_chunk_markup("t", {}) == "t");
  CHECK_ERROR_CODE(render_chunk_markup("t", {"bad name"}), ErrorCode::kInvalidCategoryName);
}

TEST_CASE("entity-level markup wraps each span in place") {
  const std::string t = "Marta Kowalski visited the Zwinger in Dresden.";
  std::vector<TagSpan> spans{span_of(t, "Zwinger", "Landmark"), span_of(t, "Marta Kowalski", "Person"),
                             span_of(t, "Dresden", "City")};
  CHECK(render_span_markup(t, spans) ==
        "<Person>Marta Kowalski</Person> visited the <Landmark>Zwinger</Landmark> in <City>Dresden</City>.");
  CHECK(render_span_markup(t, {}) == t);
}

TEST_CASE("document content is never escaped") {
  const std::string t = "1 < 2 & Oskar > 0";
  auto marked = render_span_markup(t, {span_of(t, "Oskar", "Person")});
  CHECK(marked == "1 < 2 & <Person>Oskar</Person> > 0");
  CHECK(strip_tags(marked, kCats) == t);
}

TEST_CASE("strip removes only known tag tokens") {
  CHECK(strip_tags("<Person>Hedda</Person> met <b>Malin</b>", {"Person"}) == "Hedda met <b>Malin</b>");
  CHECK(strip_tags("a <Person >b</Person>", {"Person"}) == "a <Person >b");
  CHECK(strip_tags("<Person", {"Person"}) == "<Person");
  CHECK(strip_tags("", kCats).empty());
}

TEST_CASE("nested spans nest outermost-longest") {
  const std::string t = "Hollis Choral Hall";
  std::vector<TagSpan> spans{{"Person", 0, 6}, {"Landmark", 0, t.size()}};
  CHECK(render_span_markup(t, spans) == "<Landmark><Person>Hollis</Person> Choral Hall</Landmark>");
}

TEST_CASE("exact ties follow the nesting order") {
  std::vector<TagSpan> spans{{"Zone", 0, 3}, {"City", 0, 3}};
  MarkupPolicy longer;
  CHECK(render_span_markup("abc", spans, longer) == "<Zone><City>abc</City></Zone>");
  MarkupPolicy alpha;
  alpha.nesting_order = NestingOrder::kCategoryAlphabetical;
  CHECK(render_span_markup("abc", spans, alpha) == "<City><Zone>abc</Zone></City>");
}

TEST_CASE("partial overlaps follow the collision policy") {
  const std::string t = "abcdefgh";
  std::vector<TagSpan> spans{{"City", 0, 5}, {"Zone", 3, 8}};
  MarkupPolicy drop;
  CHECK(resolve_spans(t, spans, drop) == std::vector<TagSpan>{{"City", 0, 5}});
  CHECK(render_span_markup(t, spans, drop) == "<City>abcde</City>fgh");

  MarkupPolicy trunc;
  trunc.collision_policy = CollisionPolicy::kTruncateInner;
  CHECK(resolve_spans(t, spans, trunc) == std::vector<TagSpan>{{"City", 0, 5}, {"Zone", 3, 5}});
  CHECK(render_span_markup(t, spans, trunc) == "<City>abc<Zone>de</Zone></City>fgh");

  MarkupPolicy reject;
  reject.collision_policy = CollisionPolicy::kReject;
  CHECK_ERROR_CODE(resolve_spans(t, spans, reject), ErrorCode::kOverlapUnresolvable);
  CHECK(resolve_spans(t, {{"City", 0, 5}, {"Zone", 5, 8}}, reject).size() == 2);
}

TEST_CASE("invalid spans are rejected") {
  CHECK_ERROR_CODE(render_span_markup("abc", {{"City", 2, 2}}), ErrorCode::kInvalidSpan);
  CHECK_ERROR_CODE(render_span_markup("abc", {{"City", 1, 4}}), ErrorCode::kInvalidSpan);
  CHECK_ERROR_CODE(render_span_markup("\xC3\xA9x", {{"City", 1, 3}}), ErrorCode::kInvalidSpan);
  CHECK_ERROR_CODE(render_span_markup("abc", {{"no good", 0, 1}}), ErrorCode::kInvalidCategoryName);
}

TEST_CASE("render_tagged_chunk levels") {
  TaggedChunk tc;
  tc.chunk = Chunk{"d", 0, 0, 13, "Hedda sailed.", content_hash("Hedda sailed."), false};
  tc.chunk_labels = {"Zone"};
  tc.spans = {{"Person", 0, 5}};
  CHECK(render_tagged_chunk(tc.chunk.text, tc, MarkupLevel::kEntity) == "<Person>Hedda</Person> sailed.");
  CHECK(render_tagged_chunk(tc.chunk.text, tc, MarkupLevel::kChunk) == "<Person><Zone>Hedda sailed.</Zone></Person>");
  CHECK(render_tagged_chunk(tc.chunk.text, tc, MarkupLevel::kBoth) ==
        "<Zone><Person>Hedda</Person> sailed.</Zone>");
  // A byte-different duplicate gets labels only.
  CHECK(render_tagged_chunk("Hedda  sailed.", tc, MarkupLevel::kEntity) == "Hedda  sailed.");
  CHECK(render_tagged_chunk("Hedda  sailed.", tc, MarkupLevel::kBoth) ==
        "<Person><Zone>Hedda  sailed.</Zone></Person>");
}

TEST_CASE("verify_fidelity reports the first divergence") {
  const std::string t = "Marta won.";
  auto ok = verify_fidelity(t, "<Person>Marta</Person> won.", kCats);
  CHECK(ok.ok);
  CHECK(ok.balanced);
  CHECK_FALSE(ok.first_divergence);

  auto altered = verify_fidelity(t, "<Person>Marte</Person> won.", kCats);
  CHECK_FALSE(altered.ok);
  REQUIRE(altered.first_divergence);
  CHECK(*altered.first_divergence == 4);

  auto truncated = verify_fidelity(t, "<Person>Marta</Person>", kCats);
  CHECK_FALSE(truncated.ok);
  CHECK(*truncated.first_divergence == 5);

  auto unbalanced = verify_fidelity(t, "<Person>Marta won.", kCats);
  CHECK_FALSE(unbalanced.ok);
  CHECK_FALSE(unbalanced.balanced);
  CHECK_FALSE(unbalanced.first_divergence);

  // A tag outside the set is left in place, so the stripped text diverges.
  auto invented = verify_fidelity(t, "<Hero>Marta</Hero> won.", kCats);
  CHECK_FALSE(invented.ok);
  CHECK(*invented.first_divergence == 0);
}

TEST_CASE("tags_balanced and contains_tag_token") {
  CHECK(tags_balanced("<City><Zone>x</Zone></City>", kCats));
  CHECK_FALSE(tags_balanced("<City><Zone>x</City></Zone>", kCats));
  CHECK_FALSE(tags_balanced("</City>", kCats));
  CHECK(tags_balanced("<Other>", kCats));
  CHECK(contains_tag_token("see </City> here", kCats));
  CHECK_FALSE(contains_tag_token("see <Other> here", kCats));
}

TEST_CASE("every corrupt IE fixture fails the fidelity check") {
  auto cases = test::read_jsonl(test::fixture("ie_corrupt.jsonl"));
  REQUIRE(cases.size() >= 50);
  std::set<std::string> cats{"Person", "City", "Landmark", "Organization"};
  for (const auto& c : cases) {
    INFO(c.at("id").get<std::string>());
    auto r = verify_fidelity(c.at("chunk").get<std::string>(), c.at("response").get<std::string>(), cats);
    CHECK_FALSE(r.ok);
  }
}

TEST_CASE("lift_spans inverts span rendering") {
  const std::string t = "Oskar and Malin in Vienna";
  std::vector<TagSpan> spans{span_of(t, "Vienna", "City"), span_of(t, "Oskar", "Person"), {"Zone", 0, t.size()}};
  auto marked = render_span_markup(t, spans);
  auto lifted = lift_spans(marked, kCats);
  auto expected = resolve_spans(t, spans);
  sort_spans(expected);
  CHECK(lifted == expected);
}

TEST_CASE("property: span markup round-trips, stays balanced and adds exact overhead") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 2000; ++i) {
    auto t = test::random_text(rng, 16);
    auto spans = random_spans(rng, t, 6);
    auto resolved = resolve_spans(t, spans);
    auto marked = render_span_markup(t, spans);
    CHECK(strip_tags(marked, kCats) == t);
    CHECK(strip_tags(strip_tags(marked, kCats), kCats) == t);
    CHECK(tags_balanced(marked, kCats));
    CHECK(verify_fidelity(t, marked, kCats).ok);
    CHECK(spans_well_formed(t, resolved));
    CHECK(marked.size() == t.size() + markup_overhead(resolved));
    auto canonical = resolved;
    sort_spans(canonical);
    CHECK(lift_spans(marked, kCats) == canonical);
  }
}

TEST_CASE("property: chunk markup and all collision policies round-trip") {
  std::mt19937_64 rng(8);
  MarkupPolicy trunc;
  trunc.collision_policy = CollisionPolicy::kTruncateInner;
  trunc.nesting_order = NestingOrder::kCategoryAlphabetical;
  for (int i = 0; i < 1000; ++i) {
    auto t = test::random_text(rng, 12);
    std::set<std::string> labels;
    for (const auto& s : random_spans(rng, t, 3)) labels.insert(s.category);
    auto chunk_marked = render_chunk_markup(t, labels);
    CHECK(strip_tags(chunk_marked, kCats) == t);
    std::size_t overhead = 0;
    for (const auto& l : labels) overhead += 2 * l.size() + 5;
    CHECK(chunk_marked.size() == t.size() + overhead);

    auto spans = random_spans(rng, t, 6);
    auto marked = render_span_markup(t, spans, trunc);
    CHECK(strip_tags(marked, kCats) == t);
    CHECK(spans_well_formed(t, resolve_spans(t, spans, trunc)));
  }
}

TEST_CASE("policy names parse and print") {
  CHECK(parse_nesting_order(to_string(NestingOrder::kCategoryAlphabetical)) == NestingOrder::kCategoryAlphabetical);
  CHECK(parse_collision_policy(to_string(CollisionPolicy::kReject)) == CollisionPolicy::kReject);
  CHECK(parse_markup_level(to_string(MarkupLevel::kBoth)) == MarkupLevel::kBoth);
  CHECK_ERROR_CODE(parse_markup_level("nope"), ErrorCode::kInvalidArgument);
}
