#include "tagforge/cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>

#include "tagforge/annotator.hpp"
#include "tagforge/bridge.hpp"
#include "tagforge/cache.hpp"
#include "tagforge/chunker.hpp"
#include "tagforge/engine.hpp"
#include "tagforge/error.hpp"
#include "tagforge/gateway.hpp"
#include "tagforge/harness.hpp"
#include "tagforge/json_io.hpp"
#include "tagforge/report.hpp"
#include "tagforge/taggers.hpp"
#include "tagforge/tokens.hpp"

namespace tagforge {
namespace {

const std::vector<std::string> kStrategies{"sentence", "paragraph", "token_window"};
const std::vector<std::string> kEstimators{"chars_div_4", "whitespace_words_x4/3", "external_count_file"};
const std::vector<std::string> kTaggers{"gazetteer", "external", "llm_classification", "llm_ie", "hybrid"};
const std::vector<std::string> kLevels{"auto", "chunk", "entity", "both"};
const std::vector<std::string> kReplayModes{"passthrough", "record", "replay"};

std::vector<std::string> split_words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

std::string jsonl(const std::vector<Json>& rows) {
  std::string out;
  for (const auto& r : rows) out += r.dump() + "\n";
  return out;
}

std::filesystem::path manifest_path(const std::filesystem::path& out) {
  return std::filesystem::path(out.string() + ".manifest.json");
}

// ---------------------------------------------------------------------------
// Shared option groups

struct ChunkOpts {
  std::string strategy = "sentence";
  std::size_t max_chunk_size = 250;
  std::size_t overlap = 0;
  std::string estimator = "chars_div_4";
  std::string token_counts;

  void add(CLI::App* app) {
    app->add_option("--strategy", strategy, "Chunking strategy")->check(CLI::IsMember(kStrategies));
    app->add_option("--max-chunk-size", max_chunk_size, "Chunk budget in estimated tokens")->check(CLI::PositiveNumber);
    app->add_option("--overlap", overlap, "Token-window overlap");
    app->add_option("--estimator", estimator, "Token estimator")->check(CLI::IsMember(kEstimators));
    app->add_option("--token-counts", token_counts, "JSON {id: count} for external_count_file");
  }

  ChunkingConfig chunking() const {
    ChunkingConfig c;
    c.strategy = parse_chunk_strategy(strategy);
    c.max_chunk_size = max_chunk_size;
    c.overlap = overlap;
    c.validate();
    return c;
  }

  TokenEstimator token_estimator() const {
    auto mode = parse_estimator_mode(estimator);
    if (mode == EstimatorMode::kExternalCountFile) {
      if (token_counts.empty()) throw Error(ErrorCode::kInvalidArgument, "--token-counts is required for external_count_file");
      return TokenEstimator::from_count_file(token_counts);
    }
    return TokenEstimator(mode);
  }
};

struct LlmOpts {
  explicit LlmOpts(std::string p) : prefix(std::move(p)) {}

  std::string prefix;  // "" for the answering model, "tagger-" for the tagging model
  std::string backend;
  std::string model;
  std::string fixtures;
  std::string replay = "passthrough";

  void add(CLI::App* app, const std::vector<std::string>& backends, const std::string& def) {
    backend = def;
    app->add_option("--" + prefix + "llm", backend, "Model backend")->check(CLI::IsMember(backends));
    app->add_option("--" + prefix + "model", model, "Model id");
    app->add_option("--" + prefix + "fixtures", fixtures, "Record/replay fixture directory");
    app->add_option("--" + prefix + "replay", replay, "Fixture mode")->check(CLI::IsMember(kReplayModes));
  }

  // `mock` builds the in-process backend; it is only called when needed.
  std::shared_ptr<LlmClient> client(const std::function<std::shared_ptr<LlmClient>()>& mock) const {
    auto mode = parse_replay_mode(replay);
    if (mode != ReplayMode::kPassthrough && fixtures.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "--" + prefix + "replay " + replay + " needs --" + prefix + "fixtures");
    }
    std::shared_ptr<LlmClient> inner;
    if (mode != ReplayMode::kReplay) {
      if (backend == "http") {
        auto cfg = HttpConfig::from_env();
        if (!model.empty()) cfg.model_id = model;
        inner = std::make_shared<HttpLlmClient>(cfg);
      } else {
        inner = mock();
      }
    }
    if (fixtures.empty()) return inner;
    return std::make_shared<RecordReplayClient>(mode, FixtureStore(fixtures), inner);
  }

  std::string model_id() const {
    if (!model.empty()) return model;
    if (backend == "http") {
      const char* env = std::getenv("TAGFORGE_LLM_MODEL");
      if (env) return env;
    }
    return backend;
  }
};

struct TaggerOpts {
  std::string kind;
  std::string categories;
  std::string lexicon;
  std::string matching = "case_sensitive";
  std::string label_map;
  std::string bridge;
  std::string classification_template;
  std::string ie_template;
  std::string cache;
  std::size_t max_in_flight = 4;
  LlmOpts llm{"tagger-"};

  void add(CLI::App* app, bool required) {
    auto* t = app->add_option("--tagger", kind, "Tagger kind")->check(CLI::IsMember(kTaggers));
    if (required) t->required();
    app->add_option("--categories", categories, "Category-set JSON");
    app->add_option("--lexicon", lexicon, "Gazetteer lexicon JSON {category: [phrases]}");
    app->add_option("--matching", matching, "Gazetteer matching")
        ->check(CLI::IsMember({"case_sensitive", "case_insensitive"}));
    app->add_option("--label-map", label_map, "External tagger label map JSON");
    app->add_option("--bridge", bridge, "External tagger command line");
    app->add_option("--classification-template", classification_template, "Classification prompt template");
    app->add_option("--ie-template", ie_template, "IE prompt template");
    app->add_option("--cache", cache, "Tag cache directory (default: $TAGFORGE_CACHE_DIR)");
    app->add_option("--max-in-flight", max_in_flight, "Concurrent model requests")->check(CLI::PositiveNumber);
    llm.add(app, {"mock-lexicon", "http"}, "mock-lexicon");
  }

  std::string cache_dir() const {
    if (!cache.empty()) return cache;
    const char* env = std::getenv("TAGFORGE_CACHE_DIR");
    return env ? env : "";
  }

  std::optional<CategorySet> explicit_categories() const {
    if (categories.empty()) return std::nullopt;
    return load_categories(categories);
  }
};

struct TaggerSetup {
  std::unique_ptr<Tagger> tagger;
  std::unique_ptr<TagCache> cache;
  std::unique_ptr<TaggingEngine> engine;
  CategorySet categories;
};

TaggerSetup build_tagger(const TaggerOpts& o) {
  TaggerSetup s;
  const auto kind = parse_tagger_kind(o.kind);
  const auto matching = o.matching == "case_insensitive" ? LexiconMatching::kCaseInsensitive : LexiconMatching::kCaseSensitive;
  auto lexicon = [&] {
    if (o.lexicon.empty()) throw Error(ErrorCode::kInvalidArgument, "--lexicon is required for --tagger " + o.kind);
    return Lexicon::load(o.lexicon, matching);
  };
  switch (kind) {
    case TaggerKind::kGazetteer: {
      auto lex = lexicon();
      CategorySet cats;
      if (auto c = o.explicit_categories()) {
        cats = *c;
      } else {
        std::vector<TagCategory> list;
        for (const auto& [name, phrases] : lex.entries()) list.push_back({name, "", {}});
        cats = CategorySet(std::move(list));
      }
      s.tagger = std::make_unique<GazetteerTagger>(GazetteerTagger::make_config(cats, lex));
      break;
    }
    case TaggerKind::kExternal: {
      if (o.bridge.empty()) throw Error(ErrorCode::kInvalidArgument, "--bridge is required for --tagger external");
      auto argv = split_words(o.bridge);
      auto client = std::make_shared<BridgeClient>(std::make_unique<ProcessBridge>(argv));
      CategorySet cats;
      EntityLabelMap map;
      if (!o.label_map.empty()) {
        if (o.categories.empty()) throw Error(ErrorCode::kInvalidArgument, "--label-map needs --categories");
        map = EntityLabelMap::load(o.label_map);
        cats = load_categories(o.categories);
      } else {
        cats = o.explicit_categories().value_or(standard_ner_categories());
        map = EntityLabelMap::identity(client->labels());
      }
      s.tagger = std::make_unique<ExternalTagger>(ExternalTagger::make_config(cats, map, o.bridge), map, client);
      break;
    }
    case TaggerKind::kLlmClassification:
    case TaggerKind::kLlmIe:
    case TaggerKind::kHybrid: {
      auto cats = o.explicit_categories();
      if (!cats) throw Error(ErrorCode::kInvalidArgument, "--categories is required for --tagger " + o.kind);
      LlmTaggerSettings settings;
      if (!o.classification_template.empty()) settings.classification_template = PromptTemplate::load(o.classification_template);
      if (!o.ie_template.empty()) settings.ie_template = PromptTemplate::load(o.ie_template);
      settings.model_id = o.llm.model_id();
      auto client = o.llm.client([&]() -> std::shared_ptr<LlmClient> { return lexicon_mock(lexicon(), *cats, settings); });
      auto limited = std::make_shared<RateLimitedClient>(client, o.max_in_flight);
      s.tagger = std::make_unique<LlmTagger>(LlmTagger::make_config(kind, *cats, settings), limited, o.max_in_flight);
      break;
    }
  }
  s.categories = s.tagger->config().categories;
  if (auto dir = o.cache_dir(); !dir.empty()) s.cache = std::make_unique<TagCache>(dir);
  s.engine = std::make_unique<TaggingEngine>(*s.tagger, s.cache.get());
  return s;
}

// Entity markup for span taggers, chunk markup for classification, both for
// taggers that produce both.
MarkupLevel resolve_level(const std::string& level, const std::string& tagger) {
  if (level != "auto") return parse_markup_level(level);
  if (tagger == "llm_classification") return MarkupLevel::kChunk;
  if (tagger == "hybrid") return MarkupLevel::kBoth;
  return MarkupLevel::kEntity;
}

struct RenderOpts {
  std::string level = "auto";
  std::string nesting = "longer_span_outer";
  std::string collision = "drop_inner";
  std::vector<std::string> label_order;

  void add(CLI::App* app) {
    app->add_option("--level", level, "Markup level")->check(CLI::IsMember(kLevels));
    app->add_option("--nesting", nesting, "Nesting order")
        ->check(CLI::IsMember({"longer_span_outer", "category_alphabetical"}));
    app->add_option("--collision", collision, "Partial-overlap policy")
        ->check(CLI::IsMember({"drop_inner", "truncate_inner", "reject"}));
    app->add_option("--label-order", label_order, "Chunk label order, outermost first")->delimiter(',');
  }

  RenderOptions options(const std::string& tagger) const {
    RenderOptions r;
    r.level = resolve_level(level, tagger);
    r.policy.nesting_order = parse_nesting_order(nesting);
    r.policy.collision_policy = parse_collision_policy(collision);
    r.policy.chunk_label_order = label_order;
    return r;
  }
};

RunManifest start_manifest(const std::string& command, const Json& config) {
  RunManifest m;
  m.command = command;
  m.config = config;
  m.started_at = utc_timestamp();
  return m;
}

void finish_manifest(RunManifest& m, const std::filesystem::path& path) {
  m.finished_at = utc_timestamp();
  atomic_write_file(path, m.to_json().dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Commands

struct ChunkCmd {
  std::string in;
  std::string out;
  ChunkOpts chunk;

  int run(const Json& config, std::ostream& os) const {
    auto manifest = start_manifest("chunk", config);
    auto docs = load_corpus(in);
    const auto cfg = chunk.chunking();
    const auto est = chunk.token_estimator();
    std::vector<Json> rows;
    std::set<Digest256> unique;
    for (const auto& d : docs) {
      for (const auto& c : tagforge::chunk(d, cfg, est)) {
        unique.insert(c.hash);
        rows.push_back(c);
      }
    }
    atomic_write_file(out, jsonl(rows));
    manifest.counters.chunks = rows.size();
    manifest.counters.unique_chunks = unique.size();
    finish_manifest(manifest, manifest_path(out));
    os << rows.size() << " chunks (" << unique.size() << " unique) from " << docs.size() << " documents\n";
    return 0;
  }
};

struct TagCmd {
  std::string in;
  std::string out;
  bool render = false;
  std::string dedup_scope = "global";
  TaggerOpts tagger;
  RenderOpts markup;

  int run(const Json& config, std::ostream& os) const {
    auto manifest = start_manifest("tag", config);
    std::vector<Chunk> chunks;
    for_each_jsonl(in, [&](const Json& j) { chunks.push_back(j.get<Chunk>()); });
    auto setup = build_tagger(tagger);
    std::vector<TaggedChunk> tagged;
    if (parse_dedup_scope(dedup_scope) == DedupScope::kGlobal) {
      tagged = setup.engine->tag(chunks);
    } else {
      // Consecutive runs of one document are tagged separately.
      for (std::size_t i = 0; i < chunks.size();) {
        std::size_t j = i;
        while (j < chunks.size() && chunks[j].doc_id == chunks[i].doc_id) ++j;
        auto part = setup.engine->tag(std::vector<Chunk>(chunks.begin() + i, chunks.begin() + j));
        tagged.insert(tagged.end(), part.begin(), part.end());
        i = j;
      }
    }
    const auto opts = markup.options(tagger.kind);
    std::vector<Json> rows;
    rows.reserve(tagged.size());
    for (const auto& t : tagged) {
      Json row = t;
      if (render) row["tagged_text"] = render_tagged_chunk(t.chunk.text, t, opts.level, opts.policy);
      rows.push_back(std::move(row));
    }
    atomic_write_file(out, jsonl(rows));
    manifest.category_set_hash = category_set_hash(setup.categories);
    manifest.counters = setup.engine->counters();
    if (setup.cache) manifest.cache = setup.cache->stats();
    finish_manifest(manifest, manifest_path(out));
    const auto& c = manifest.counters;
    os << c.chunks << " chunks, " << c.unique_chunks << " unique, " << c.tagger_calls << " tagger calls, "
       << c.cache_hits << " cache hits\n";
    return 0;
  }
};

struct RenderCmd {
  std::string corpus;
  std::string tagged;
  std::string out;
  RenderOpts markup;

  int run(const Json& config, std::ostream& os) const {
    auto manifest = start_manifest("render", config);
    auto docs = load_corpus(corpus);
    std::map<std::string, std::vector<TaggedChunk>> by_doc;
    std::string tagger_kind;
    for_each_jsonl(tagged, [&](const Json& j) {
      auto t = j.get<TaggedChunk>();
      if (tagger_kind.empty()) tagger_kind = t.provenance.tagger_id.substr(0, t.provenance.tagger_id.find('@'));
      by_doc[t.chunk.doc_id].push_back(std::move(t));
    });
    const auto opts = markup.options(tagger_kind);
    std::vector<Json> rows;
    for (const auto& d : docs) {
      auto& list = by_doc[d.id];
      std::sort(list.begin(), list.end(), [](const auto& a, const auto& b) { return a.chunk.start < b.chunk.start; });
      std::string text;
      std::size_t pos = 0;
      for (const auto& t : list) {
        const auto& c = t.chunk;
        if (c.start < pos || c.end > d.text.size() || d.text.compare(c.start, c.end - c.start, c.text) != 0) {
          throw Error(ErrorCode::kInvalidArgument,
                      "tagged chunk " + d.id + "#" + std::to_string(c.index) + " does not match the corpus text");
        }
        text.append(d.text, pos, c.start - pos);
        text += render_tagged_chunk(c.text, t, opts.level, opts.policy);
        pos = c.end;
      }
      text.append(d.text, pos);
      Document rendered = d;
      rendered.text = std::move(text);
      rows.push_back(rendered);
      ++manifest.counters.chunks;
    }
    atomic_write_file(out, jsonl(rows));
    manifest.records = rows.size();
    finish_manifest(manifest, manifest_path(out));
    os << rows.size() << " documents rendered\n";
    return 0;
  }
};

std::vector<PromptMode> parse_modes(const std::vector<std::string>& names) {
  std::vector<PromptMode> modes;
  for (const auto& n : names) modes.push_back(parse_prompt_mode(n));
  return modes;
}

struct BenchCommon {
  std::string out;
  std::vector<std::string> modes{"baseline", "td", "td_tc"};
  TaggerOpts tagger;
  RenderOpts markup;
  LlmOpts llm{""};
  std::size_t max_in_flight = 4;
  double rps = 0.0;
  std::size_t max_output_tokens = 256;
  bool thinking = false;
  std::optional<std::size_t> stop_after;

  void add(CLI::App* app) {
    app->add_option("--out", out, "Results JSONL (resumed when it exists)")->required();
    app->add_option("--mode", modes, "Prompt modes")->delimiter(',')->check(CLI::IsMember({"baseline", "td", "td_tc"}));
    tagger.add(app, false);
    markup.add(app);
    llm.add(app, {"mock-oracle", "mock-empty", "http"}, "mock-oracle");
    app->add_option("--concurrency", max_in_flight, "Concurrent evaluation requests")->check(CLI::PositiveNumber);
    app->add_option("--rps", rps, "Request rate limit (0: unlimited)");
    app->add_option("--max-output-tokens", max_output_tokens, "Answer token limit")->check(CLI::PositiveNumber);
    app->add_flag("--thinking", thinking, "Extended reasoning instead of temperature 0");
    app->add_option("--stop-after", stop_after, "Stop after this many new records");
  }

  bool needs_tagger() const {
    for (const auto& m : modes) {
      if (m == "td_tc") return true;
    }
    return false;
  }

  CategorySet prompt_categories(const std::optional<TaggerSetup>& setup) const {
    if (auto c = tagger.explicit_categories()) return *c;
    if (setup) return setup->categories;
    for (const auto& m : modes) {
      if (m != "baseline") throw Error(ErrorCode::kInvalidArgument, "--categories is required for --mode " + m);
    }
    return {};
  }

  int finish(const std::vector<EvalInstance>& instances, const std::function<std::shared_ptr<LlmClient>()>& oracle,
             RunManifest& manifest, const std::optional<TaggerSetup>& setup, const CategorySet& cats,
             std::ostream& os) const {
    auto client = llm.client([&]() -> std::shared_ptr<LlmClient> {
      if (llm.backend == "mock-empty") return std::make_shared<MockLlm>([](const CompletionRequest&) { return ""; });
      return oracle();
    });
    RateLimitedClient limited(client, max_in_flight, rps);
    RunOptions ro;
    ro.out_jsonl = out;
    ro.max_in_flight = max_in_flight;
    ro.model_id = llm.model_id();
    ro.max_output_tokens = max_output_tokens;
    ro.thinking = thinking;
    ro.stop_after = stop_after;
    auto summary = run_eval(instances, limited, ro);
    manifest.category_set_hash = category_set_hash(cats);
    if (setup) {
      manifest.counters = setup->engine->counters();
      if (setup->cache) manifest.cache = setup->cache->stats();
    }
    manifest.records = summary.records.size();
    for (const auto& r : summary.records) {
      if (r.error) ++manifest.errored_records;
      if (r.flagged) ++manifest.flagged_records;
    }
    manifest.mode_context_mismatches = summary.mode_context_mismatches;
    finish_manifest(manifest, manifest_path(out));
    os << summary.records.size() << " records (" << summary.resumed << " resumed, " << summary.evaluated
       << " evaluated, " << manifest.errored_records << " errored)\n\n"
       << emit_report(summary.records).markdown;
    return 0;
  }

  std::optional<TaggerSetup> setup() const {
    if (tagger.kind.empty()) {
      if (needs_tagger()) throw Error(ErrorCode::kInvalidArgument, "--mode td_tc requires --tagger");
      return std::nullopt;
    }
    return build_tagger(tagger);
  }

  TaggingHook hook(TaggerSetup& s, const ChunkOpts& chunk) const {
    TaggingHook h;
    h.engine = s.engine.get();
    h.chunking = chunk.chunking();
    h.estimator = chunk.token_estimator();
    h.render = markup.options(tagger.kind);
    h.tagger_name = tagger.kind;
    return h;
  }
};

struct NolimaCmd {
  std::string needles;
  std::string corpus;
  std::vector<std::size_t> cls{250, 500, 16000, 32000};
  std::size_t positions = 26;
  bool all_positions = false;
  bool allow_repeat = false;
  ChunkOpts chunk;
  BenchCommon common;

  int run(const Json& config, std::uint64_t seed, std::ostream& os) const {
    auto manifest = start_manifest("bench nolima", config);
    auto needle_list = load_needles(needles);
    SnippetPool pool(load_corpus(corpus));
    auto setup = common.setup();
    NolimaSuiteConfig cfg;
    cfg.context_lengths = cls;
    cfg.positions = positions;
    cfg.modes = parse_modes(common.modes);
    cfg.seed = seed;
    cfg.allow_repeat = allow_repeat;
    cfg.all_positions = all_positions;
    cfg.categories = common.prompt_categories(setup);
    cfg.estimator = chunk.token_estimator();
    std::optional<TaggingHook> hook;
    if (setup) hook = common.hook(*setup, chunk);
    auto instances = build_nolima_suite(needle_list, pool, cfg, hook ? &*hook : nullptr);
    return common.finish(instances, [&] { return nolima_oracle(needle_list, cfg.categories); }, manifest, setup,
                         cfg.categories, os);
  }
};

struct NovelqaCmd {
  std::string books;
  std::string questions;
  std::size_t budget = 180000;
  ChunkOpts chunk;
  BenchCommon common;

  int run(const Json& config, std::ostream& os) const {
    auto manifest = start_manifest("bench novelqa", config);
    auto book_list = load_corpus(books);
    auto mcq = load_mcq(questions);
    auto setup = common.setup();
    NovelqaSuiteConfig cfg;
    cfg.budget = budget;
    cfg.modes = parse_modes(common.modes);
    cfg.categories = common.prompt_categories(setup);
    cfg.chunking = chunk.chunking();
    cfg.estimator = chunk.token_estimator();
    std::optional<TaggingHook> hook;
    if (setup) hook = common.hook(*setup, chunk);
    auto suite = build_novelqa_suite(book_list, mcq, cfg, hook ? &*hook : nullptr);
    os << suite.kept << " questions kept, " << suite.removed << " removed by truncation\n";
    return common.finish(suite.instances, [&] { return mcq_oracle(mcq); }, manifest, setup, cfg.categories, os);
  }
};

struct ReportCmd {
  std::string in;
  std::vector<std::string> formats{"md", "csv"};
  std::string out_dir;

  int run(std::ostream& os) const {
    auto records = load_records(in);
    if (records.empty()) throw Error(ErrorCode::kInvalidArgument, "no records in '" + in + "'");
    auto report = emit_report(records);
    const bool md = std::find(formats.begin(), formats.end(), "md") != formats.end();
    const bool csv = std::find(formats.begin(), formats.end(), "csv") != formats.end();
    if (!out_dir.empty()) {
      Report selected;
      if (md) selected.markdown = report.markdown;
      if (csv) {
        selected.csv_context_length = report.csv_context_length;
        selected.csv_complexity = report.csv_complexity;
      }
      for (const auto& p : write_report(selected, out_dir)) os << "wrote " << p.filename().string() << "\n";
      return 0;
    }
    if (md) os << report.markdown;
    if (csv) {
      if (md) os << "\n";
      os << report.csv_context_length;
      if (!report.csv_context_length.empty() && !report.csv_complexity.empty()) os << "\n";
      os << report.csv_complexity;
    }
    return 0;
  }
};

struct CacheCmd {
  std::string dir;
  std::uint64_t max_bytes = 0;

  std::string resolved() const {
    if (!dir.empty()) return dir;
    const char* env = std::getenv("TAGFORGE_CACHE_DIR");
    if (!env || !*env) throw Error(ErrorCode::kInvalidArgument, "--cache or TAGFORGE_CACHE_DIR is required");
    return env;
  }

  int stats(std::ostream& os) const {
    TagCache cache(resolved());
    auto s = cache.stats();
    os << Json{{"entries", s.entries}, {"bytes", s.bytes}}.dump() << "\n";
    return 0;
  }

  int gc(std::ostream& os) const {
    TagCache cache(resolved());
    auto r = cache.gc(max_bytes);
    auto s = cache.stats();
    os << Json{{"removed", r.removed}, {"freed_bytes", r.freed_bytes}, {"entries", s.entries}, {"bytes", s.bytes}}.dump()
       << "\n";
    return 0;
  }
};

// ---------------------------------------------------------------------------
// Config file and option snapshot

std::vector<CLI::App*> selected_chain(CLI::App& root) {
  std::vector<CLI::App*> chain{&root};
  for (CLI::App* app = &root;;) {
    auto subs = app->get_subcommands();
    if (subs.empty()) break;
    app = subs.front();
    chain.push_back(app);
  }
  return chain;
}

std::string config_value(const Json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number()) return v.dump();
  throw CLI::ValidationError("--config", "values must be strings, numbers, booleans or arrays of those");
}

// Keys are long option names without dashes; '_' and '-' are interchangeable.
void apply_config(const std::vector<CLI::App*>& chain, const Json& cfg) {
  if (!cfg.is_object()) throw CLI::ValidationError("--config", "config file must hold a JSON object");
  for (const auto& [key, value] : cfg.items()) {
    std::string name = key;
    std::replace(name.begin(), name.end(), '_', '-');
    CLI::Option* opt = nullptr;
    for (auto it = chain.rbegin(); it != chain.rend() && !opt; ++it) opt = (*it)->get_option_no_throw("--" + name);
    if (!opt || name == "config") throw CLI::ValidationError("--config", "unknown option '" + key + "'");
    opt->clear();
    if (value.is_array()) {
      for (const auto& v : value) opt->add_result(config_value(v));
    } else {
      opt->add_result(config_value(value));
    }
    opt->run_callback();
  }
}

Json snapshot(const std::vector<CLI::App*>& chain) {
  Json j = Json::object();
  for (auto* app : chain) {
    for (const auto* opt : app->get_options()) {
      std::string name = opt->get_name(false, true);
      if (name.rfind("--", 0) != 0 || name == "--help" || name == "--config" || name == "--version") continue;
      name = name.substr(2);
      if (opt->count() > 0) {
        const auto& res = opt->results();
        j[name] = res.size() == 1 && opt->get_expected_max() <= 1 ? Json(res.front()) : Json(res);
      } else if (opt->get_default_str() == "{}") {
        j[name] = Json::array();
      } else if (!opt->get_default_str().empty()) {
        j[name] = opt->get_default_str();
      }
    }
  }
  return j;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Chunk, tag and benchmark long documents with inline semantic tags", "tagforge"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(TAGFORGE_VERSION));

  std::string config_path;
  std::uint64_t seed = 0;
  app.add_option("--config", config_path, "JSON object of option values; overrides flags");
  app.add_option("--seed", seed, "Seed for every random choice");

  ChunkCmd chunk_cmd;
  auto* chunk = app.add_subcommand("chunk", "Split documents into chunks");
  chunk->add_option("--in", chunk_cmd.in, "Corpus JSONL {id, text}")->required();
  chunk->add_option("--out", chunk_cmd.out, "Chunk JSONL")->required();
  chunk_cmd.chunk.add(chunk);

  TagCmd tag_cmd;
  auto* tag = app.add_subcommand("tag", "Tag chunks");
  tag->add_option("--in", tag_cmd.in, "Chunk JSONL")->required();
  tag->add_option("--out", tag_cmd.out, "Tagged-chunk JSONL")->required();
  tag->add_flag("--render", tag_cmd.render, "Add tagged_text to every record");
  tag->add_option("--dedup-scope", tag_cmd.dedup_scope, "Share tagging work across documents or not")
      ->check(CLI::IsMember({"global", "per_document"}));
  tag_cmd.tagger.add(tag, true);
  tag_cmd.markup.add(tag);

  RenderCmd render_cmd;
  auto* render = app.add_subcommand("render", "Rebuild documents with inline tags");
  render->add_option("--corpus", render_cmd.corpus, "Corpus JSONL")->required();
  render->add_option("--tagged", render_cmd.tagged, "Tagged-chunk JSONL")->required();
  render->add_option("--out", render_cmd.out, "Rendered corpus JSONL")->required();
  render_cmd.markup.add(render);

  auto* bench = app.add_subcommand("bench", "Run a long-context QA benchmark");
  bench->require_subcommand(1);
  NolimaCmd nolima_cmd;
  auto* nolima = bench->add_subcommand("nolima", "Needle-in-a-haystack benchmark");
  nolima->add_option("--needles", nolima_cmd.needles, "Needle JSONL")->required();
  nolima->add_option("--corpus", nolima_cmd.corpus, "Filler corpus JSONL")->required();
  nolima->add_option("--cl", nolima_cmd.cls, "Context lengths in tokens")->delimiter(',');
  nolima->add_option("--positions", nolima_cmd.positions, "Needle positions")->check(CLI::Range(2, 1000));
  nolima->add_flag("--all-positions", nolima_cmd.all_positions, "Every needle at every position");
  nolima->add_flag("--allow-repeat", nolima_cmd.allow_repeat, "Reuse filler when the corpus runs out");
  nolima_cmd.chunk.add(nolima);
  nolima_cmd.common.add(nolima);

  NovelqaCmd novelqa_cmd;
  auto* novelqa = bench->add_subcommand("novelqa", "Multiple-choice questions over books");
  novelqa->add_option("--books", novelqa_cmd.books, "Books JSONL {id, text}")->required();
  novelqa->add_option("--questions", novelqa_cmd.questions, "MCQ JSONL")->required();
  novelqa->add_option("--budget", novelqa_cmd.budget, "Context budget in tokens")->check(CLI::PositiveNumber);
  novelqa_cmd.chunk.add(novelqa);
  novelqa_cmd.common.add(novelqa);

  ReportCmd report_cmd;
  auto* report = app.add_subcommand("report", "Summarise evaluation records");
  report->add_option("--in", report_cmd.in, "Results JSONL")->required();
  report->add_option("--format", report_cmd.formats, "Output formats")->delimiter(',')->check(CLI::IsMember({"md", "csv"}));
  report->add_option("--out-dir", report_cmd.out_dir, "Write report files here instead of stdout");

  CacheCmd cache_cmd;
  auto* cache = app.add_subcommand("cache", "Inspect or prune the tag cache");
  cache->require_subcommand(1);
  auto* stats = cache->add_subcommand("stats", "Entry count and size");
  stats->add_option("--cache", cache_cmd.dir, "Cache directory (default: $TAGFORGE_CACHE_DIR)");
  auto* gc = cache->add_subcommand("gc", "Remove oldest entries down to a size");
  gc->add_option("--cache", cache_cmd.dir, "Cache directory (default: $TAGFORGE_CACHE_DIR)");
  gc->add_option("--max-bytes", cache_cmd.max_bytes, "Size limit")->required();

  std::vector<std::string> argv_store{"tagforge"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());

  Json config;
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
    auto chain = selected_chain(app);
    if (!config_path.empty()) apply_config(chain, Json::parse(read_file(config_path)));
    config = snapshot(chain);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    if (code == 0) return 0;
    err << "\n" << app.help() << "\n";
    return 2;
  } catch (const Json::exception& e) {
    err << "error: --config " << config_path << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (chunk->parsed()) return chunk_cmd.run(config, out);
    if (tag->parsed()) return tag_cmd.run(config, out);
    if (render->parsed()) return render_cmd.run(config, out);
    if (nolima->parsed()) return nolima_cmd.run(config, seed, out);
    if (novelqa->parsed()) return novelqa_cmd.run(config, out);
    if (report->parsed()) return report_cmd.run(out);
    if (stats->parsed()) return cache_cmd.stats(out);
    if (gc->parsed()) return cache_cmd.gc(out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace tagforge
