#include "tagforge/taggers.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <exception>
#include <mutex>
#include <thread>

#include "tagforge/annotator.hpp"
#include "tagforge/bridge.hpp"
#include "tagforge/error.hpp"

namespace tagforge {

TaggerKind parse_tagger_kind(std::string_view name) {
  if (name == "gazetteer") return TaggerKind::kGazetteer;
  if (name == "external") return TaggerKind::kExternal;
  if (name == "llm_classification" || name == "classification") return TaggerKind::kLlmClassification;
  if (name == "llm_ie" || name == "ie") return TaggerKind::kLlmIe;
  if (name == "hybrid") return TaggerKind::kHybrid;
  throw Error(ErrorCode::kInvalidArgument, "unknown tagger '" + std::string(name) + "'");
}

std::string_view to_string(TaggerKind kind) {
  switch (kind) {
    case TaggerKind::kGazetteer: return "gazetteer";
    case TaggerKind::kExternal: return "external";
    case TaggerKind::kLlmClassification: return "llm_classification";
    case TaggerKind::kLlmIe: return "llm_ie";
    case TaggerKind::kHybrid: return "hybrid";
  }
  return "unknown";
}

void TaggerConfig::validate() const {
  if (categories.empty()) throw Error(ErrorCode::kInvalidArgument, "tagger needs at least one category");
  if (version.empty()) throw Error(ErrorCode::kInvalidArgument, "tagger version is empty");
  if (!params.is_object()) throw Error(ErrorCode::kInvalidArgument, "tagger params must be an object");
}

Json TaggerConfig::to_json() const {
  return Json{{"kind", to_string(kind)}, {"version", version}, {"categories", categories.categories()},
              {"params", params}};
}

std::string TaggerConfig::config_hash() const { return sha256(canonical_json(to_json())).hex(); }

std::string TaggerConfig::tagger_id() const { return std::string(to_string(kind)) + "@" + version; }

Provenance TaggerConfig::provenance() const { return Provenance{tagger_id(), config_hash(), {}}; }

// ---------------------------------------------------------------------------
// Gazetteer

namespace {

bool is_trim_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

// Bytes >= 0x80 count as word characters so that a phrase never matches
// inside a longer non-ASCII word.
bool is_word_byte(unsigned char c) { return std::isalnum(c) || c == '_' || c >= 0x80; }

unsigned char fold(unsigned char c) { return (c >= 'A' && c <= 'Z') ? static_cast<unsigned char>(c + 32) : c; }

std::string_view matching_name(LexiconMatching m) {
  return m == LexiconMatching::kCaseSensitive ? "case_sensitive" : "case_insensitive";
}

LexiconMatching parse_matching(std::string_view name) {
  if (name == "case_sensitive") return LexiconMatching::kCaseSensitive;
  if (name == "case_insensitive") return LexiconMatching::kCaseInsensitive;
  throw Error(ErrorCode::kInvalidArgument, "unknown lexicon matching '" + std::string(name) + "'");
}

struct Entry {
  std::string phrase;
  std::string category;
};

}  // namespace

Lexicon::Lexicon(std::map<std::string, std::vector<std::string>> entries, LexiconMatching matching)
    : entries_(std::move(entries)), matching_(matching) {
  for (const auto& [category, phrases] : entries_) {
    if (!is_valid_category_name(category)) {
      throw Error(ErrorCode::kInvalidCategoryName, "lexicon category '" + category + "'");
    }
    for (const auto& p : phrases) {
      if (p.empty()) throw Error(ErrorCode::kInvalidArgument, "empty phrase in lexicon category " + category);
      if (is_trim_space(p.front()) || is_trim_space(p.back())) {
        throw Error(ErrorCode::kInvalidArgument, "untrimmed phrase '" + p + "' in lexicon");
      }
      if (p.find_first_of("<>") != std::string::npos) {
        throw Error(ErrorCode::kInvalidArgument, "phrase '" + p + "' contains tag syntax");
      }
      if (!is_valid_utf8(p)) throw Error(ErrorCode::kInvalidArgument, "phrase is not valid UTF-8");
    }
  }
}

Lexicon Lexicon::load(const std::filesystem::path& path, LexiconMatching matching) {
  Json j;
  try {
    j = Json::parse(read_file(path));
    return Lexicon(j.get<std::map<std::string, std::vector<std::string>>>(), matching);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, path.string() + ": " + e.what());
  }
}

Json Lexicon::to_json() const { return Json{{"entries", entries_}, {"matching", matching_name(matching_)}}; }

std::vector<TagSpan> tag_gazetteer(std::string_view text, const Lexicon& lexicon) {
  const bool ci = lexicon.matching() == LexiconMatching::kCaseInsensitive;
  // Candidates indexed by (folded) first byte, longest first, then category.
  std::array<std::vector<Entry>, 256> by_first;
  for (const auto& [category, phrases] : lexicon.entries()) {
    for (const auto& p : phrases) {
      unsigned char first = static_cast<unsigned char>(p.front());
      by_first[ci ? fold(first) : first].push_back({p, category});
    }
  }
  for (auto& bucket : by_first) {
    std::sort(bucket.begin(), bucket.end(), [](const Entry& a, const Entry& b) {
      if (a.phrase.size() != b.phrase.size()) return a.phrase.size() > b.phrase.size();
      return a.category < b.category;
    });
  }
  auto matches_at = [&](std::size_t i, const std::string& phrase) {
    if (i + phrase.size() > text.size()) return false;
    for (std::size_t k = 0; k < phrase.size(); ++k) {
      unsigned char a = static_cast<unsigned char>(text[i + k]);
      unsigned char b = static_cast<unsigned char>(phrase[k]);
      if (ci ? fold(a) != fold(b) : a != b) return false;
    }
    return true;
  };

  std::vector<TagSpan> spans;
  std::size_t i = 0;
  while (i < text.size()) {
    unsigned char c = static_cast<unsigned char>(text[i]);
    const auto& bucket = by_first[ci ? fold(c) : c];
    bool left_ok = !is_word_byte(c) || i == 0 || !is_word_byte(static_cast<unsigned char>(text[i - 1]));
    const Entry* hit = nullptr;
    if (left_ok) {
      for (const auto& e : bucket) {
        if (!matches_at(i, e.phrase)) continue;
        std::size_t end = i + e.phrase.size();
        bool right_ok = end == text.size() || !is_word_byte(static_cast<unsigned char>(e.phrase.back())) ||
                        !is_word_byte(static_cast<unsigned char>(text[end]));
        if (right_ok) {
          hit = &e;
          break;
        }
      }
    }
    if (hit) {
      spans.push_back({hit->category, i, i + hit->phrase.size()});
      i += hit->phrase.size();
    } else {
      ++i;
      while (i < text.size() && (static_cast<unsigned char>(text[i]) & 0xC0) == 0x80) ++i;
    }
  }
  return spans;
}

// ---------------------------------------------------------------------------
// NER label mapping

const std::vector<std::string>& standard_ner_labels() {
  static const std::vector<std::string> labels{"PERSON",  "NORP",     "FAC",      "ORG",     "GPE",     "LOC",
                                               "PRODUCT", "EVENT",    "WORK_OF_ART", "LAW",  "LANGUAGE", "DATE",
                                               "TIME",    "PERCENT",  "MONEY",    "QUANTITY", "ORDINAL", "CARDINAL"};
  return labels;
}

CategorySet standard_ner_categories() {
  static const std::map<std::string, std::string> defs{
      {"PERSON", "People, including fictional"},
      {"NORP", "Nationalities or religious or political groups"},
      {"FAC", "Buildings, airports, highways, bridges, etc."},
      {"ORG", "Companies, agencies, institutions, etc."},
      {"GPE", "Countries, cities, states"},
      {"LOC", "Non-GPE locations, mountain ranges, bodies of water"},
      {"PRODUCT", "Objects, vehicles, foods, etc. (not services)"},
      {"EVENT", "Named hurricanes, battles, wars, sports events, etc."},
      {"WORK_OF_ART", "Titles of books, songs, etc."},
      {"LAW", "Named documents made into laws"},
      {"LANGUAGE", "Any named language"},
      {"DATE", "Absolute or relative dates or periods"},
      {"TIME", "Times smaller than a day"},
      {"PERCENT", "Percentage, including \"%\""},
      {"MONEY", "Monetary values, including unit"},
      {"QUANTITY", "Measurements, as of weight or distance"},
      {"ORDINAL", "\"first\", \"second\", etc."},
      {"CARDINAL", "Numerals that do not fall under another type"},
  };
  std::vector<TagCategory> cats;
  for (const auto& label : standard_ner_labels()) cats.push_back({label, defs.at(label), {}});
  return CategorySet(std::move(cats));
}

EntityLabelMap::EntityLabelMap(std::map<std::string, std::optional<std::string>> entries)
    : entries_(std::move(entries)) {
  for (const auto& [label, category] : entries_) {
    if (category && !is_valid_category_name(*category)) {
      throw Error(ErrorCode::kInvalidCategoryName, "label map target '" + *category + "' for " + label);
    }
  }
}

EntityLabelMap EntityLabelMap::identity(const std::vector<std::string>& labels) {
  std::map<std::string, std::optional<std::string>> m;
  for (const auto& l : labels) m[l] = l;
  return EntityLabelMap(std::move(m));
}

EntityLabelMap EntityLabelMap::load(const std::filesystem::path& path) {
  try {
    Json j = Json::parse(read_file(path));
    if (!j.is_object()) throw Error(ErrorCode::kInvalidArgument, path.string() + ": label map must be an object");
    std::map<std::string, std::optional<std::string>> m;
    for (const auto& [label, target] : j.items()) {
      if (target.is_null()) {
        m[label] = std::nullopt;
      } else {
        m[label] = target.get<std::string>();
      }
    }
    return EntityLabelMap(std::move(m));
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, path.string() + ": " + e.what());
  }
}

EntityLabelMap::Outcome EntityLabelMap::lookup(const std::string& label, std::string* category) const {
  auto it = entries_.find(label);
  if (it == entries_.end()) return Outcome::kMissing;
  if (!it->second) return Outcome::kDropped;
  if (category) *category = *it->second;
  return Outcome::kMapped;
}

Json EntityLabelMap::to_json() const {
  Json j = Json::object();
  for (const auto& [label, category] : entries_) j[label] = category ? Json(*category) : Json(nullptr);
  return j;
}

std::vector<TaggedChunk> tag_external(const std::vector<Chunk>& chunks, const TaggerConfig& cfg,
                                      const EntityLabelMap& label_map, BridgeClient& bridge,
                                      ExternalTagStats* stats) {
  ExternalTagStats local;
  std::vector<TaggedChunk> out;
  out.reserve(chunks.size());
  const auto provenance = cfg.provenance();
  for (const auto& chunk : chunks) {
    TaggedChunk tc{chunk, {}, {}, provenance, false};
    for (const auto& e : bridge.annotate(chunk.text, cfg.categories)) {
      std::string category;
      switch (label_map.lookup(e.label, &category)) {
        case EntityLabelMap::Outcome::kMissing:
          throw Error(ErrorCode::kMappingMissing, e.label);
        case EntityLabelMap::Outcome::kDropped:
          ++local.dropped_by_rule;
          continue;
        case EntityLabelMap::Outcome::kMapped:
          break;
      }
      bool valid = cfg.categories.contains(category) && e.start < e.end && e.end <= chunk.text.size() &&
                   is_char_boundary(chunk.text, e.start) && is_char_boundary(chunk.text, e.end);
      if (!valid) {
        ++local.dropped_invalid;
        continue;
      }
      tc.spans.push_back({category, e.start, e.end});
    }
    std::size_t before = tc.spans.size();
    sort_spans(tc.spans);
    if (!spans_well_formed(chunk.text, tc.spans)) tc.spans = resolve_spans(chunk.text, tc.spans);
    local.dropped_invalid += before - tc.spans.size();
    out.push_back(std::move(tc));
  }
  if (stats) {
    stats->dropped_invalid += local.dropped_invalid;
    stats->dropped_by_rule += local.dropped_by_rule;
  }
  return out;
}

// ---------------------------------------------------------------------------
// LLM taggers

namespace {

std::string_view trim_ws(std::string_view s) {
  while (!s.empty() && is_trim_space(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && is_trim_space(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool is_none_token(std::string_view raw) {
  auto s = trim_ws(raw);
  while (!s.empty() && (s.front() == '`' || s.front() == '"')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == '`' || s.back() == '"' || s.back() == '.')) s.remove_suffix(1);
  s = trim_ws(s);
  if (s.size() != 4) return false;
  std::string up;
  for (char c : s) up += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return up == "NONE";
}

// The first '[' that opens a complete JSON array of strings.
std::optional<Json> first_string_array(std::string_view raw) {
  for (std::size_t open = raw.find('['); open != std::string_view::npos; open = raw.find('[', open + 1)) {
    for (std::size_t close = raw.find(']', open); close != std::string_view::npos;
         close = raw.find(']', close + 1)) {
      Json j = Json::parse(raw.substr(open, close - open + 1), nullptr, false);
      if (j.is_discarded()) continue;
      if (j.is_array() && std::all_of(j.begin(), j.end(), [](const Json& v) { return v.is_string(); })) return j;
      break;
    }
  }
  return std::nullopt;
}

CompletionRequest make_request(const Prompt& prompt, std::size_t max_tokens, const LlmTaggerSettings& s) {
  CompletionRequest req;
  req.system = prompt.system;
  req.user = prompt.user;
  req.max_output_tokens = max_tokens;
  req.thinking = s.thinking;
  req.temperature = 0.0;
  req.model_id = s.model_id;
  return req;
}

}  // namespace

ClassificationParse parse_classification_output(std::string_view raw, const std::set<std::string>& categories) {
  ClassificationParse out;
  if (auto arr = first_string_array(raw)) {
    for (const auto& v : *arr) {
      auto name = v.get<std::string>();
      if (categories.count(name)) {
        out.labels.insert(name);
      } else {
        ++out.rejected;
      }
    }
    return out;
  }
  if (is_none_token(raw)) return out;
  throw Error(ErrorCode::kUnparseableOutput, "no JSON array of category names in model output");
}

LlmTaggerSettings LlmTaggerSettings::from_params(const Json& p) {
  LlmTaggerSettings s;
  if (auto it = p.find("classification_template"); it != p.end()) {
    s.classification_template = PromptTemplate::parse(it->get<std::string>(), p.value("classification_template_id", "classification"));
  }
  if (auto it = p.find("ie_template"); it != p.end()) {
    s.ie_template = PromptTemplate::parse(it->get<std::string>(), p.value("ie_template_id", "ie"));
  }
  if (auto it = p.find("fewshot"); it != p.end()) {
    for (const auto& ex : *it) {
      s.fewshot.push_back({ex.at("text").get<std::string>(), ex.at("labels").get<std::vector<std::string>>()});
    }
  }
  s.model_id = p.value("model_id", s.model_id);
  s.classification_max_output_tokens =
      p.value("classification_max_output_tokens", s.classification_max_output_tokens);
  s.ie_max_output_tokens = p.value("ie_max_output_tokens", s.ie_max_output_tokens);
  s.thinking = p.value("thinking", s.thinking);
  return s;
}

Json LlmTaggerSettings::to_params() const {
  Json shots = Json::array();
  for (const auto& ex : fewshot) shots.push_back({{"text", ex.text}, {"labels", ex.labels}});
  return Json{{"classification_template", classification_template.serialize()},
              {"classification_template_id", classification_template.id},
              {"ie_template", ie_template.serialize()},
              {"ie_template_id", ie_template.id},
              {"fewshot", shots},
              {"model_id", model_id},
              {"classification_max_output_tokens", classification_max_output_tokens},
              {"ie_max_output_tokens", ie_max_output_tokens},
              {"thinking", thinking}};
}

ClassificationOutcome tag_llm_classification(const Chunk& chunk, const CategorySet& categories,
                                             const LlmTaggerSettings& settings, LlmClient& llm) {
  auto prompt = build_classification_prompt(chunk.text, categories, settings.classification_template, settings.fewshot);
  auto req = make_request(prompt, settings.classification_max_output_tokens, settings);
  const auto names = categories.names();
  ClassificationOutcome out{chunk.hash, {}, 0, false};
  for (int attempt = 0; attempt < 2; ++attempt) {
    auto result = llm.complete(req);
    try {
      auto parsed = parse_classification_output(result.text, names);
      out.labels = std::move(parsed.labels);
      out.rejected = parsed.rejected;
      return out;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kUnparseableOutput) throw;
    }
  }
  out.parse_failed = true;
  return out;
}

TaggedChunk tag_llm_ie(const Chunk& chunk, const CategorySet& categories, const LlmTaggerSettings& settings,
                       LlmClient& llm, const Provenance& provenance) {
  auto prompt = build_ie_prompt(chunk.text, categories, settings.ie_template);
  auto result = llm.complete(make_request(prompt, settings.ie_max_output_tokens, settings));
  const auto names = categories.names();
  TaggedChunk out{chunk, {}, {}, provenance, false};

  std::string_view marked = result.text;
  if (!verify_fidelity(chunk.text, marked, names).ok) {
    marked = trim_ws(marked);
    if (!verify_fidelity(chunk.text, marked, names).ok) {
      out.fidelity_failed = true;
      return out;
    }
  }
  for (auto& s : lift_spans(marked, names)) {
    if (is_char_boundary(chunk.text, s.start) && is_char_boundary(chunk.text, s.end)) out.spans.push_back(std::move(s));
  }
  sort_spans(out.spans);
  return out;
}

TaggedChunk merge_hybrid(const TaggedChunk& ie, const ClassificationOutcome& cls, const Provenance& provenance) {
  if (ie.chunk.hash != cls.chunk_hash) {
    throw Error(ErrorCode::kChunkMismatch, ie.chunk.hash.hex() + " vs " + cls.chunk_hash.hex());
  }
  TaggedChunk out;
  out.chunk = ie.chunk;
  out.fidelity_failed = ie.fidelity_failed;
  if (!ie.fidelity_failed) out.spans = ie.spans;
  out.chunk_labels = cls.labels;
  for (const auto& s : out.spans) out.chunk_labels.insert(s.category);
  out.provenance = provenance;
  out.provenance.sources = {std::string(to_string(TaggerKind::kLlmClassification)),
                            std::string(to_string(TaggerKind::kLlmIe))};
  return out;
}

std::shared_ptr<MockLlm> lexicon_mock(const Lexicon& lexicon, const CategorySet& categories,
                                      const LlmTaggerSettings& settings) {
  struct Frame {
    std::string system;
    std::string prefix;
    std::string suffix;

    std::optional<std::string_view> match(const CompletionRequest& req) const {
      std::string_view user = req.user;
      if (req.system != system || user.size() < prefix.size() + suffix.size()) return std::nullopt;
      if (user.substr(0, prefix.size()) != prefix || user.substr(user.size() - suffix.size()) != suffix) {
        return std::nullopt;
      }
      return user.substr(prefix.size(), user.size() - prefix.size() - suffix.size());
    }
  };
  const std::string marker = "\x01chunk\x01";
  auto frame = [&](const Prompt& p) {
    auto at = p.user.find(marker);
    return Frame{p.system, p.user.substr(0, at), p.user.substr(at + marker.size())};
  };
  Frame cls = frame(build_classification_prompt(marker, categories, settings.classification_template, settings.fewshot));
  Frame ie = frame(build_ie_prompt(marker, categories, settings.ie_template));
  const auto names = categories.names();
  return std::make_shared<MockLlm>([=](const CompletionRequest& req) -> std::string {
    auto spans_for = [&](std::string_view chunk) {
      std::vector<TagSpan> spans;
      for (auto& s : tag_gazetteer(chunk, lexicon)) {
        if (names.count(s.category)) spans.push_back(std::move(s));
      }
      return spans;
    };
    if (auto chunk = cls.match(req)) {
      std::set<std::string> labels;
      for (const auto& s : spans_for(*chunk)) labels.insert(s.category);
      return Json(labels).dump();
    }
    if (auto chunk = ie.match(req)) return render_span_markup(*chunk, spans_for(*chunk));
    return "";
  });
}

// ---------------------------------------------------------------------------
// Tagger interface

Tagger::Tagger(TaggerConfig config) : config_(std::move(config)) { config_.validate(); }

std::vector<TaggedChunk> Tagger::tag(const std::vector<Chunk>& chunks) {
  invocations_ += chunks.size();
  auto out = tag_batch(chunks);
  if (out.size() != chunks.size()) {
    throw Error(ErrorCode::kInvalidArgument, "tagger returned a result count different from its input");
  }
  return out;
}

TaggerStats Tagger::stats() const {
  return TaggerStats{invocations_.load(), parse_failures_.load(), fidelity_failures_.load(), rejected_labels_.load(),
                     dropped_spans_.load()};
}

GazetteerTagger::GazetteerTagger(TaggerConfig config) : Tagger(std::move(config)) {
  const auto& p = config_.params;
  if (!p.contains("lexicon")) throw Error(ErrorCode::kInvalidArgument, "gazetteer config lacks a lexicon");
  lexicon_ = Lexicon(p.at("lexicon").get<std::map<std::string, std::vector<std::string>>>(),
                     parse_matching(p.value("matching", std::string("case_sensitive"))));
  for (const auto& [category, phrases] : lexicon_.entries()) {
    if (!config_.categories.contains(category)) {
      throw Error(ErrorCode::kInvalidArgument, "lexicon category '" + category + "' is not in the category set");
    }
  }
}

TaggerConfig GazetteerTagger::make_config(const CategorySet& categories, const Lexicon& lexicon) {
  TaggerConfig cfg;
  cfg.kind = TaggerKind::kGazetteer;
  cfg.categories = categories;
  cfg.params = Json{{"lexicon", lexicon.entries()}, {"matching", matching_name(lexicon.matching())}};
  return cfg;
}

std::vector<TaggedChunk> GazetteerTagger::tag_batch(const std::vector<Chunk>& chunks) {
  std::vector<TaggedChunk> out;
  out.reserve(chunks.size());
  const auto provenance = config_.provenance();
  for (const auto& c : chunks) out.push_back(TaggedChunk{c, {}, tag_gazetteer(c.text, lexicon_), provenance, false});
  return out;
}

ExternalTagger::ExternalTagger(TaggerConfig config, EntityLabelMap label_map, std::shared_ptr<BridgeClient> bridge)
    : Tagger(std::move(config)), label_map_(std::move(label_map)), bridge_(std::move(bridge)) {
  if (!bridge_) throw Error(ErrorCode::kBridgeUnavailable, "no bridge client");
}

TaggerConfig ExternalTagger::make_config(const CategorySet& categories, const EntityLabelMap& label_map,
                                         const std::string& bridge_id) {
  TaggerConfig cfg;
  cfg.kind = TaggerKind::kExternal;
  cfg.categories = categories;
  cfg.params = Json{{"label_map", label_map.to_json()}, {"bridge", bridge_id}};
  return cfg;
}

std::vector<TaggedChunk> ExternalTagger::tag_batch(const std::vector<Chunk>& chunks) {
  ExternalTagStats stats;
  auto out = tag_external(chunks, config_, label_map_, *bridge_, &stats);
  dropped_spans_ += stats.dropped_invalid;
  return out;
}

LlmTagger::LlmTagger(TaggerConfig config, std::shared_ptr<LlmClient> llm, std::size_t max_in_flight)
    : Tagger(std::move(config)),
      settings_(LlmTaggerSettings::from_params(config_.params)),
      llm_(std::move(llm)),
      max_in_flight_(std::max<std::size_t>(1, max_in_flight)) {
  if (config_.kind != TaggerKind::kLlmClassification && config_.kind != TaggerKind::kLlmIe &&
      config_.kind != TaggerKind::kHybrid) {
    throw Error(ErrorCode::kInvalidArgument, "LlmTagger cannot run a " + std::string(to_string(config_.kind)) + " config");
  }
  if (!llm_) throw Error(ErrorCode::kInvalidArgument, "no LLM client");
}

TaggerConfig LlmTagger::make_config(TaggerKind kind, const CategorySet& categories, const LlmTaggerSettings& settings) {
  TaggerConfig cfg;
  cfg.kind = kind;
  cfg.categories = categories;
  cfg.params = settings.to_params();
  return cfg;
}

TaggedChunk LlmTagger::tag_one(const Chunk& chunk) {
  const auto provenance = config_.provenance();
  auto classify = [&] {
    auto cls = tag_llm_classification(chunk, config_.categories, settings_, *llm_);
    if (cls.parse_failed) ++parse_failures_;
    rejected_labels_ += cls.rejected;
    return cls;
  };
  auto extract = [&] {
    auto ie = tag_llm_ie(chunk, config_.categories, settings_, *llm_, provenance);
    if (ie.fidelity_failed) ++fidelity_failures_;
    return ie;
  };
  switch (config_.kind) {
    case TaggerKind::kLlmClassification: {
      auto cls = classify();
      return TaggedChunk{chunk, std::move(cls.labels), {}, provenance, false};
    }
    case TaggerKind::kLlmIe:
      return extract();
    default: {
      auto ie = extract();
      return merge_hybrid(ie, classify(), provenance);
    }
  }
}

std::vector<TaggedChunk> LlmTagger::tag_batch(const std::vector<Chunk>& chunks) {
  std::vector<TaggedChunk> out(chunks.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    while (true) {
      std::size_t i = next.fetch_add(1);
      if (i >= chunks.size()) return;
      try {
        out[i] = tag_one(chunks[i]);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next.store(chunks.size());
        return;
      }
    }
  };
  std::size_t n_threads = std::min(max_in_flight_, chunks.size());
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace tagforge
