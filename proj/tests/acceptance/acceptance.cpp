// Acceptance checks. Prints one PASS/FAIL line per criterion and exits non-zero
// when any criterion fails.

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "support.hpp"
#include "tagforge/annotator.hpp"
#include "tagforge/engine.hpp"
#include "tagforge/harness.hpp"
#include "tagforge/taggers.hpp"

using namespace tagforge;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Collects failure details for one criterion.
struct Check {
  std::vector<std::string> failures;
  void expect(bool ok, const std::string& what) {
    if (!ok && failures.size() < 5) failures.push_back(what);
    if (!ok) ++failed;
  }
  std::size_t failed = 0;
};

int g_failed = 0;

void report(const std::string& name, const Check& c, const std::string& detail) {
  if (c.failed == 0) {
    std::cout << "PASS " << name << " (" << detail << ")\n";
    return;
  }
  ++g_failed;
  std::cout << "FAIL " << name << " (" << detail << "; " << c.failed << " failures";
  for (const auto& f : c.failures) std::cout << "; " << f;
  std::cout << ")\n";
}

void run_criterion(const std::string& name, const std::function<std::string(Check&)>& body) {
  Check c;
  std::string detail;
  try {
    detail = body(c);
  } catch (const std::exception& e) {
    c.expect(false, std::string("exception: ") + e.what());
  }
  report(name, c, detail);
}

const CategorySet& cats() {
  static const CategorySet set = load_categories(test::fixture("categories.json"));
  return set;
}

const Lexicon& lexicon() {
  static const Lexicon lex = Lexicon::load(test::fixture("lexicon.json"));
  return lex;
}

std::string hundredths(Hundredths v) { return format_hundredths(v); }

// Portable draws: raw engine output only, no library distributions.
struct Rng {
  std::mt19937_64 engine;
  explicit Rng(std::uint64_t seed) : engine(seed) {}
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(engine() % n); }
};

// Filler sentences built from fixed word lists. Some mention lexicon entries so
// tagged contexts carry markup.
std::vector<std::string> synthetic_snippets(std::size_t count, std::uint64_t seed) {
  static const char* subjects[] = {"The ferryman", "A schoolteacher", "The old baker", "Her cousin", "The night clerk",
                                   "A quiet neighbour", "The harbour pilot", "His aunt", "The gardener", "A courier"};
  static const char* verbs[] = {"repaired", "counted", "painted", "carried", "sorted", "inspected", "described",
                                "photographed", "borrowed", "measured"};
  static const char* objects[] = {"the wooden crates", "a pile of letters", "the blue shutters", "three lanterns",
                                  "the station clock", "a broken chair", "the market stalls", "two old maps",
                                  "the brass bell", "a basket of pears"};
  static const char* places[] = {"near Dresden", "outside Hamburg", "beside the Elbe", "in Vienna", "by the canal",
                                 "behind the mill", "at the station", "on the hill road", "in Berlin",
                                 "under the bridge", "close to the Zwinger", "for Lena Fischer"};
  static const char* times[] = {"before dawn", "after lunch", "on a rainy evening", "during the fair",
                                "in late autumn", "every Tuesday", "at noon", "while it snowed"};
  Rng rng(seed);
  std::set<std::string> seen;
  std::vector<std::string> out;
  while (out.size() < count) {
    std::string s = std::string(subjects[rng.below(std::size(subjects))]) + " " + verbs[rng.below(std::size(verbs))] +
                    " " + objects[rng.below(std::size(objects))] + " " + places[rng.below(std::size(places))] + " " +
                    times[rng.below(std::size(times))] + " (" + std::to_string(out.size()) + ").";
    if (seen.insert(s).second) out.push_back(std::move(s));
  }
  return out;
}

const SnippetPool& large_pool() {
  static const SnippetPool pool(synthetic_snippets(3000, 11));
  return pool;
}

// 58 needle-question pairs with distinct characters and questions.
std::vector<NeedleSpec> synthetic_needles() {
  static const char* first[] = {"Ar", "Bel", "Cor", "Dar", "El", "Fen", "Gal", "Hal"};
  static const char* second[] = {"avin", "ethra", "oric", "undel", "ismar", "owen", "ira", "astin"};
  static const char* things[] = {"violin", "kite", "compass", "telescope", "typewriter", "sailboat", "lantern",
                                 "chessboard"};
  static const char* colours[] = {"green", "silver", "red", "yellow", "black", "white", "amber", "violet"};
  std::vector<NeedleSpec> out;
  for (std::size_t i = 0; i < 58; ++i) {
    NeedleSpec n;
    n.id = "s" + std::to_string(i);
    const std::string name = std::string(first[i % 8]) + second[(i / 8) % 8];
    const std::string thing = std::string(colours[(i / 8) % 8]) + " " + things[i % 8];
    n.needle_text = "Actually, " + name + " keeps a " + thing + " in the attic.";
    n.question = "Which character owns a " + thing + "?";
    n.gold_answers = {name};
    n.keywords = {thing};
    out.push_back(std::move(n));
  }
  return out;
}

std::size_t occurrences(std::string_view hay, std::string_view needle) {
  std::size_t n = 0;
  for (auto p = hay.find(needle); p != std::string_view::npos; p = hay.find(needle, p + 1)) ++n;
  return n;
}

// ---------------------------------------------------------------------------

std::string metric_reproduction(Check& c) {
  struct Row {
    const char* name;
    std::vector<Hundredths> cells;  // CL 250, 500, 16K, 32K
    Hundredths published_drop;
  };
  const std::vector<Row> rows{
      {"3.5 baseline", {8119, 8619, 4596, 3267}, 5977},   {"3.5 td", {9134, 9058, 5025, 3645}, 6010},
      {"3.5 spacy", {8877, 8836, 4765, 3463}, 6099},      {"3.5 privileged", {8753, 8535, 4840, 3850}, 5600},
      {"3.7 baseline", {9466, 9348, 5576, 4556}, 5187},   {"3.7 td", {9712, 9570, 5922, 4993}, 4859},
      {"3.7 spacy", {9511, 9452, 6039, 4788}, 4966},      {"3.7 privileged", {9521, 9477, 6078, 5239}, 4498},
  };
  const std::vector<std::size_t> lengths{250, 500, 16000, 32000};
  const auto t0 = Clock::now();

  std::vector<EvalRecord> records;
  records.reserve(rows.size() * lengths.size() * 10000);
  for (const auto& row : rows) {
    for (std::size_t l = 0; l < lengths.size(); ++l) {
      for (int i = 0; i < 10000; ++i) {
        EvalRecord r;
        r.instance_id = std::to_string(i);
        r.model_id = row.name;
        r.context_length = lengths[l];
        r.score = i < row.cells[l] ? 1 : 0;
        records.push_back(std::move(r));
      }
    }
  }
  auto table = accuracy_table(records, [](const EvalRecord& r) {
    return r.model_id + "|" + std::to_string(*r.context_length);
  });
  std::map<std::string, Hundredths> drops;
  for (const auto& row : rows) {
    std::map<std::size_t, Hundredths> per_cl;
    for (std::size_t l = 0; l < lengths.size(); ++l) {
      const auto& g = table.at(std::string(row.name) + "|" + std::to_string(lengths[l]));
      c.expect(g.percent == row.cells[l], std::string(row.name) + " accuracy " + hundredths(g.percent));
      per_cl[lengths[l]] = g.percent;
    }
    auto drop = extremum_drop_rate(per_cl);
    drops[row.name] = drop;
    c.expect(std::llabs(drop - row.published_drop) <= 2,
             std::string(row.name) + " drop " + hundredths(drop) + " vs " + hundredths(row.published_drop));
  }
  auto delta = table.at("3.5 td|250").percent - table.at("3.5 baseline|250").percent;
  c.expect(delta == 1015, "TD delta at 250 is " + hundredths(delta));
  const double secs = seconds_since(t0);
  c.expect(secs < 1.0, "took " + std::to_string(secs) + " s");

  std::ostringstream d;
  d << "8 drop rates within 0.02, TD delta +" << hundredths(delta) << ", " << secs << " s";
  return d.str();
}

std::string round_trip_fidelity(Check& c) {
  static const char* names[] = {"Person", "City", "Landmark", "Organization"};
  const std::set<std::string> categories(std::begin(names), std::end(names));
  const NestingOrder orders[] = {NestingOrder::kLongerSpanOuter, NestingOrder::kCategoryAlphabetical};
  const CollisionPolicy policies[] = {CollisionPolicy::kDropInner, CollisionPolicy::kTruncateInner,
                                      CollisionPolicy::kReject};
  std::mt19937_64 rng(2024);
  Rng pick(2025);
  const auto t0 = Clock::now();
  std::size_t rejected = 0;
  for (int i = 0; i < 10000; ++i) {
    auto text = test::random_text(rng, 24);
    auto b = test::boundaries(text);
    std::vector<TagSpan> spans;
    if (b.size() >= 2) {
      for (std::size_t k = 0, n = pick.below(8); k < n; ++k) {
        auto x = b[pick.below(b.size())], y = b[pick.below(b.size())];
        if (x != y) spans.push_back({names[pick.below(4)], std::min(x, y), std::max(x, y)});
      }
    }
    MarkupPolicy policy;
    policy.nesting_order = orders[pick.below(2)];
    policy.collision_policy = policies[pick.below(3)];
    if (pick.below(2)) policy.chunk_label_order = {"City", "Person"};
    std::string marked;
    try {
      marked = render_span_markup(text, spans, policy);
    } catch (const Error& e) {
      // The reject policy refuses partial overlaps; anything else is a failure.
      const bool expected = policy.collision_policy == CollisionPolicy::kReject &&
                            e.code() == ErrorCode::kOverlapUnresolvable;
      c.expect(expected, "case " + std::to_string(i) + " threw " + e.what());
      rejected += expected;
      continue;
    }
    c.expect(strip_tags(marked, categories) == text, "case " + std::to_string(i) + " did not round-trip");
    c.expect(tags_balanced(marked, categories), "case " + std::to_string(i) + " is not well nested");
  }
  return "10000 cases, " + std::to_string(rejected) + " refused by the reject policy, " +
         std::to_string(seconds_since(t0)) + " s";
}

std::string serialize(const std::vector<Document>& docs) {
  std::string out;
  for (const auto& d : docs) out += Json{{"id", d.id}, {"text", d.text}}.dump() + "\n";
  return out;
}

PipelineConfig fixture_pipeline(MarkupLevel level) {
  PipelineConfig cfg;
  cfg.chunking.max_chunk_size = 22;
  cfg.render.level = level;
  return cfg;
}

std::string pipeline_determinism(Check& c) {
  const auto corpus = load_corpus(test::fixture("corpus.jsonl"));
  const auto names = cats().names();
  std::string combined;
  for (auto level : {MarkupLevel::kChunk, MarkupLevel::kEntity, MarkupLevel::kBoth}) {
    std::string runs[2];
    for (auto& out : runs) {
      GazetteerTagger tagger(GazetteerTagger::make_config(cats(), lexicon()));
      TaggingEngine engine(tagger);
      auto result = run_pipeline(corpus, fixture_pipeline(level), engine);
      out = serialize(result.rendered);
      for (std::size_t i = 0; i < corpus.size(); ++i) {
        c.expect(strip_tags(result.rendered[i].text, names) == corpus[i].text,
                 "doc " + corpus[i].id + " does not strip back");
      }
    }
    c.expect(runs[0] == runs[1], std::string(to_string(level)) + " output differs between runs");
    combined += runs[0];
  }
  // The committed golden output pins the bytes across platforms.
  const auto golden = std::filesystem::path(TAGFORGE_GOLDEN) / "pipeline_rendered.jsonl";
  if (std::getenv("TAGFORGE_UPDATE_GOLDEN")) write_file(golden, combined);
  c.expect(std::filesystem::exists(golden) && read_file(golden) == combined, "output differs from the golden file");
  return std::to_string(corpus.size()) + " docs x 3 levels, identical runs and golden match";
}

std::string dedup_and_cache(Check& c) {
  const auto corpus = load_corpus(test::fixture("corpus.jsonl"));
  const auto cfg = fixture_pipeline(MarkupLevel::kBoth);
  std::vector<Chunk> chunks;
  std::set<std::string> oracle;
  for (const auto& d : corpus) {
    for (auto& ch : chunk(d, cfg.chunking, cfg.estimator)) {
      oracle.insert(normalize(ch.text));
      chunks.push_back(std::move(ch));
    }
  }
  test::TempDir dir;
  std::size_t first_calls = 0;
  {
    GazetteerTagger tagger(GazetteerTagger::make_config(cats(), lexicon()));
    TagCache cache(dir.path());
    TaggingEngine engine(tagger, &cache);
    engine.tag(chunks);
    first_calls = tagger.stats().invocations;
    c.expect(engine.counters().unique_chunks == oracle.size(),
             "dedup found " + std::to_string(engine.counters().unique_chunks) + ", oracle " +
                 std::to_string(oracle.size()));
    c.expect(first_calls == oracle.size(), "first pass made " + std::to_string(first_calls) + " calls");
  }
  GazetteerTagger tagger(GazetteerTagger::make_config(cats(), lexicon()));
  TagCache cache(dir.path());
  TaggingEngine engine(tagger, &cache);
  engine.tag(chunks);
  c.expect(tagger.stats().invocations == 0, "second pass invoked the tagger");
  c.expect(engine.counters().tagger_calls == 0, "second pass counted tagger calls");
  c.expect(engine.counters().cache_hits == oracle.size(), "second pass missed the cache");
  return std::to_string(chunks.size()) + " chunks, " + std::to_string(oracle.size()) + " unique, first pass " +
         std::to_string(first_calls) + " calls, second pass " + std::to_string(tagger.stats().invocations);
}

std::string haystack_grid(Check& c) {
  const auto t0 = Clock::now();
  auto needles = load_needles(test::fixture("needles.jsonl"));
  const auto synthetic = synthetic_needles();
  needles.insert(needles.end(), synthetic.begin(), synthetic.begin() + 2);
  const TokenEstimator est;
  const auto names = cats().names();
  GazetteerTagger tagger(GazetteerTagger::make_config(cats(), lexicon()));
  TaggingEngine engine(tagger);
  TaggingHook hook;
  hook.engine = &engine;
  hook.tagger_name = "gazetteer";
  hook.render.level = MarkupLevel::kBoth;

  std::size_t built = 0;
  for (const auto& needle : needles) {
    for (std::size_t cl : {250, 500, 16000, 32000}) {
      std::size_t last_offset = 0;
      for (std::size_t pos = 0; pos < 26; ++pos) {
        HaystackSpec spec;
        spec.needle = needle;
        spec.context_length = cl;
        spec.position_index = pos;
        spec.positions = 26;
        auto h = build_haystack(spec, large_pool(), est);
        ++built;
        const std::string where = needle.id + " CL " + std::to_string(cl) + " P " + std::to_string(pos);
        c.expect(occurrences(h.doc.text, needle.needle_text) == 1, where + ": needle count");
        const double dev = 100.0 * std::abs(static_cast<double>(h.tokens) - static_cast<double>(cl)) / cl;
        c.expect(dev <= kHaystackTolerancePercent, where + ": " + std::to_string(h.tokens) + " tokens");
        c.expect(h.tokens == est.estimate(h.doc.text), where + ": token count not reported");
        c.expect(pos == 0 || h.needle_offset >= last_offset, where + ": offset not monotone");
        last_offset = h.needle_offset;
        auto tagged = tag_context(h.doc, hook);
        c.expect(contains_tag_token(tagged, names), where + ": tagged context has no tags");
        c.expect(strip_tags(tagged, names) == h.doc.text, where + ": tagged context does not strip back");
      }
    }
  }
  const double secs = seconds_since(t0);
  c.expect(secs < 30.0, "took " + std::to_string(secs) + " s");
  return std::to_string(built) + " haystacks (" + std::to_string(needles.size()) + " needles x 4 CL x 26 P), " +
         std::to_string(secs) + " s";
}

std::string closed_loop(Check& c) {
  const auto needles = synthetic_needles();
  GazetteerTagger tagger(GazetteerTagger::make_config(cats(), lexicon()));
  TaggingEngine engine(tagger);
  TaggingHook hook;
  hook.engine = &engine;
  hook.tagger_name = "gazetteer";
  NolimaSuiteConfig cfg;
  cfg.categories = cats();
  auto suite = build_nolima_suite(needles, large_pool(), cfg, &hook);
  c.expect(suite.size() == 58 * 4 * 3, "suite has " + std::to_string(suite.size()) + " instances");
  auto by_cell = [](const EvalRecord& r) {
    return std::string(to_string(r.mode)) + "|" + std::to_string(r.context_length.value_or(0));
  };

  auto oracle = nolima_oracle(needles, cats());
  RunOptions opts;
  opts.model_id = "oracle";
  auto good = run_eval(suite, *oracle, opts);
  auto good_table = accuracy_table(good.records, by_cell);
  c.expect(good_table.size() == 12, "oracle produced " + std::to_string(good_table.size()) + " cells");
  for (const auto& [cell, acc] : good_table) {
    c.expect(acc.percent == 10000 && acc.scored == 58, "oracle " + cell + " " + hundredths(acc.percent));
  }
  c.expect(good.mode_context_mismatches == 0, "oracle run has mode/context mismatches");

  MockLlm empty([](const CompletionRequest&) { return std::string(); });
  auto bad = run_eval(suite, empty, opts);
  for (const auto& [cell, acc] : accuracy_table(bad.records, by_cell)) {
    c.expect(acc.percent == 0, "always-wrong " + cell + " " + hundredths(acc.percent));
  }
  std::size_t flagged = 0;
  for (const auto& r : bad.records) flagged += r.flagged;
  c.expect(flagged == suite.size(), std::to_string(flagged) + " flagged of " + std::to_string(suite.size()));

  test::TempDir dir;
  RunOptions full = opts;
  full.out_jsonl = dir / "full.jsonl";
  run_eval(suite, *oracle, full);
  RunOptions part = full;
  part.out_jsonl = dir / "part.jsonl";
  std::size_t interruptions = 0;
  for (std::size_t step : {101, 257, 3}) {
    part.stop_after = step;
    run_eval(suite, *oracle, part);
    // Leave a torn line behind, as a killed process would.
    write_file(part.out_jsonl, read_file(part.out_jsonl) + "{\"instance_id\":");
    ++interruptions;
  }
  part.stop_after.reset();
  auto resumed = run_eval(suite, *oracle, part);
  c.expect(resumed.resumed == 101 + 257 + 3, "resumed " + std::to_string(resumed.resumed) + " records");
  c.expect(load_records(part.out_jsonl) == load_records(full.out_jsonl), "resumed records differ");
  c.expect(read_file(part.out_jsonl) == read_file(full.out_jsonl), "resumed file bytes differ");

  return std::to_string(suite.size()) + " instances: oracle 100.00, empty mock 0.00 with " + std::to_string(flagged) +
         " flagged, " + std::to_string(interruptions) + " interruptions resumed identically";
}

std::string fidelity_gating(Check& c) {
  const auto cases = test::read_jsonl(test::fixture("ie_corrupt.jsonl"));
  std::size_t downgraded = 0;
  std::set<std::string> kinds;
  for (const auto& k : cases) {
    const auto id = k.at("id").get<std::string>();
    const auto text = k.at("chunk").get<std::string>();
    const auto response = k.at("response").get<std::string>();
    if (k.contains("kind")) kinds.insert(k.at("kind").get<std::string>());
    MockLlm llm([&](const CompletionRequest&) { return response; });
    auto out = tag_llm_ie(Chunk{"d", 0, 0, text.size(), text, content_hash(text), false}, cats(), {}, llm);
    const bool ok = out.fidelity_failed && out.spans.empty();
    downgraded += ok;
    c.expect(ok, id + " not downgraded");
    c.expect(out.chunk.text == text, id + " altered the chunk text");
  }
  c.expect(!cases.empty(), "no corrupt cases");
  std::string d = std::to_string(downgraded) + "/" + std::to_string(cases.size()) + " downgraded";
  if (!kinds.empty()) {
    d += ", kinds:";
    for (const auto& k : kinds) d += " " + k;
  }
  return d;
}

}  // namespace

int main() {
  run_criterion("metric-reproduction", metric_reproduction);
  run_criterion("round-trip-fidelity", round_trip_fidelity);
  run_criterion("pipeline-determinism", pipeline_determinism);
  run_criterion("dedup-cache-efficiency", dedup_and_cache);
  run_criterion("haystack-construction", haystack_grid);
  run_criterion("closed-loop-mock-evaluation", closed_loop);
  run_criterion("fidelity-gating", fidelity_gating);
  return g_failed == 0 ? 0 : 1;
}
