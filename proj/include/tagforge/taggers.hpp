#pragma once

// Taggers: gazetteer NER, external-bridge NER, LLM classification, LLM
// inline extraction, and the hybrid merge of the two LLM routes.

#include <atomic>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "tagforge/core.hpp"
#include "tagforge/gateway.hpp"
#include "tagforge/json_io.hpp"
#include "tagforge/prompts.hpp"

namespace tagforge {

class BridgeClient;

enum class TaggerKind { kGazetteer, kExternal, kLlmClassification, kLlmIe, kHybrid };

TaggerKind parse_tagger_kind(std::string_view name);
std::string_view to_string(TaggerKind kind);

/// Full identity of a tagging run. Everything that can change tagger output
/// (lexicon contents, label map, template text, model id, ...) goes into
/// `params` so that it reaches the config hash.
struct TaggerConfig {
  TaggerKind kind = TaggerKind::kGazetteer;
  CategorySet categories;
  Json params = Json::object();
  std::string version = "1";

  void validate() const;
  Json to_json() const;
  std::string config_hash() const;  // sha256 hex of the canonical JSON
  std::string tagger_id() const;    // "<kind>@<version>"
  Provenance provenance() const;
};

// ---------------------------------------------------------------------------
// Gazetteer

enum class LexiconMatching { kCaseSensitive, kCaseInsensitive };

class Lexicon {
 public:
  Lexicon() = default;
  /// Phrases must be nonempty, trimmed and free of '<' / '>'.
  Lexicon(std::map<std::string, std::vector<std::string>> entries,
          LexiconMatching matching = LexiconMatching::kCaseSensitive);

  static Lexicon load(const std::filesystem::path& path,
                      LexiconMatching matching = LexiconMatching::kCaseSensitive);

  const std::map<std::string, std::vector<std::string>>& entries() const { return entries_; }
  LexiconMatching matching() const { return matching_; }
  Json to_json() const;

 private:
  std::map<std::string, std::vector<std::string>> entries_;
  LexiconMatching matching_ = LexiconMatching::kCaseSensitive;
};

/// Left-to-right longest match at word boundaries; matches never overlap.
/// Same start and length in several categories resolves to the smallest
/// category name. Case-insensitive matching folds ASCII letters only.
std::vector<TagSpan> tag_gazetteer(std::string_view text, const Lexicon& lexicon);

// ---------------------------------------------------------------------------
// NER label mapping

const std::vector<std::string>& standard_ner_labels();
CategorySet standard_ner_categories();

class EntityLabelMap {
 public:
  EntityLabelMap() = default;
  /// nullopt values are explicit drop rules.
  explicit EntityLabelMap(std::map<std::string, std::optional<std::string>> entries);

  static EntityLabelMap identity(const std::vector<std::string>& labels);
  /// JSON object {"LABEL": "Category" | null}.
  static EntityLabelMap load(const std::filesystem::path& path);

  enum class Outcome { kMapped, kDropped, kMissing };
  Outcome lookup(const std::string& label, std::string* category) const;

  const std::map<std::string, std::optional<std::string>>& entries() const { return entries_; }
  Json to_json() const;

 private:
  std::map<std::string, std::optional<std::string>> entries_;
};

struct ExternalTagStats {
  std::size_t dropped_invalid = 0;  // bad offsets or categories outside the set
  std::size_t dropped_by_rule = 0;  // label mapped to null
};

/// Validates bridge spans; throws MappingMissing for an unmapped label.
std::vector<TaggedChunk> tag_external(const std::vector<Chunk>& chunks, const TaggerConfig& cfg,
                                      const EntityLabelMap& label_map, BridgeClient& bridge,
                                      ExternalTagStats* stats = nullptr);

// ---------------------------------------------------------------------------
// LLM taggers

struct ClassificationParse {
  std::set<std::string> labels;
  std::size_t rejected = 0;
};

/// First JSON array of strings in `raw`, filtered to known categories.
/// "NONE" means no labels. Throws UnparseableOutput otherwise.
ClassificationParse parse_classification_output(std::string_view raw, const std::set<std::string>& categories);

struct LlmTaggerSettings {
  PromptTemplate classification_template = PromptTemplate::builtin_classification();
  PromptTemplate ie_template = PromptTemplate::builtin_ie();
  std::vector<FewShotExample> fewshot;
  std::string model_id;
  std::size_t classification_max_output_tokens = 64;
  std::size_t ie_max_output_tokens = 4096;
  bool thinking = false;

  /// Reads params written by to_params(); missing keys keep defaults.
  static LlmTaggerSettings from_params(const Json& params);
  Json to_params() const;
};

struct ClassificationOutcome {
  Digest256 chunk_hash;
  std::set<std::string> labels;
  std::size_t rejected = 0;
  bool parse_failed = false;
};

/// Parse failures are retried once, then recorded as parse_failed with no labels.
ClassificationOutcome tag_llm_classification(const Chunk& chunk, const CategorySet& categories,
                                             const LlmTaggerSettings& settings, LlmClient& llm);

/// The chunk text is never replaced: output that fails the fidelity check is
/// downgraded to no spans with fidelity_failed set.
TaggedChunk tag_llm_ie(const Chunk& chunk, const CategorySet& categories, const LlmTaggerSettings& settings,
                       LlmClient& llm, const Provenance& provenance = {});

/// Union of classification labels and IE span categories; IE spans kept when
/// fidelity held. Throws ChunkMismatch when the hashes differ.
TaggedChunk merge_hybrid(const TaggedChunk& ie, const ClassificationOutcome& cls, const Provenance& provenance = {});

/// Offline stand-in for a tagging model: answers classification and IE
/// prompts built from `settings` with the gazetteer's view of the chunk.
/// Unrecognised prompts get an empty reply.
std::shared_ptr<MockLlm> lexicon_mock(const Lexicon& lexicon, const CategorySet& categories,
                                      const LlmTaggerSettings& settings);

// ---------------------------------------------------------------------------
// Tagger interface

struct TaggerStats {
  std::size_t invocations = 0;  // chunks handed to the underlying tagger
  std::size_t parse_failures = 0;
  std::size_t fidelity_failures = 0;
  std::size_t rejected_labels = 0;
  std::size_t dropped_spans = 0;
};

class Tagger {
 public:
  explicit Tagger(TaggerConfig config);
  virtual ~Tagger() = default;

  const TaggerConfig& config() const { return config_; }
  Provenance provenance() const { return config_.provenance(); }

  /// result[i] tags chunks[i].
  std::vector<TaggedChunk> tag(const std::vector<Chunk>& chunks);
  TaggerStats stats() const;

 protected:
  virtual std::vector<TaggedChunk> tag_batch(const std::vector<Chunk>& chunks) = 0;

  TaggerConfig config_;
  std::atomic<std::size_t> invocations_{0};
  std::atomic<std::size_t> parse_failures_{0};
  std::atomic<std::size_t> fidelity_failures_{0};
  std::atomic<std::size_t> rejected_labels_{0};
  std::atomic<std::size_t> dropped_spans_{0};
};

class GazetteerTagger final : public Tagger {
 public:
  /// Config params: {"lexicon": {...}, "matching": "case_sensitive"|"case_insensitive"}.
  explicit GazetteerTagger(TaggerConfig config);
  static TaggerConfig make_config(const CategorySet& categories, const Lexicon& lexicon);

 protected:
  std::vector<TaggedChunk> tag_batch(const std::vector<Chunk>& chunks) override;

 private:
  Lexicon lexicon_;
};

class ExternalTagger final : public Tagger {
 public:
  ExternalTagger(TaggerConfig config, EntityLabelMap label_map, std::shared_ptr<BridgeClient> bridge);
  static TaggerConfig make_config(const CategorySet& categories, const EntityLabelMap& label_map,
                                  const std::string& bridge_id);

 protected:
  std::vector<TaggedChunk> tag_batch(const std::vector<Chunk>& chunks) override;

 private:
  EntityLabelMap label_map_;
  std::shared_ptr<BridgeClient> bridge_;
};

/// Covers llm_classification, llm_ie and hybrid; chunks run in parallel with
/// at most `max_in_flight` outstanding requests, results in chunk order.
class LlmTagger final : public Tagger {
 public:
  LlmTagger(TaggerConfig config, std::shared_ptr<LlmClient> llm, std::size_t max_in_flight = 4);
  static TaggerConfig make_config(TaggerKind kind, const CategorySet& categories, const LlmTaggerSettings& settings);

 protected:
  std::vector<TaggedChunk> tag_batch(const std::vector<Chunk>& chunks) override;

 private:
  TaggedChunk tag_one(const Chunk& chunk);

  LlmTaggerSettings settings_;
  std::shared_ptr<LlmClient> llm_;
  std::size_t max_in_flight_;
};

}  // namespace tagforge
