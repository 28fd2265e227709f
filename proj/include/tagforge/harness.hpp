#pragma once

// Long-context QA benchmark harness: haystack construction, prompt assembly
// for the baseline / TD / TD_TC settings, scoring, metrics and a resumable
// evaluation runner.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tagforge/chunker.hpp"
#include "tagforge/core.hpp"
#include "tagforge/gateway.hpp"
#include "tagforge/json_io.hpp"
#include "tagforge/prompts.hpp"
#include "tagforge/tokens.hpp"

namespace tagforge {

class TaggingEngine;

enum class PromptMode { kBaseline, kTD, kTDTC };

PromptMode parse_prompt_mode(std::string_view name);
std::string_view to_string(PromptMode mode);  // "baseline" | "td" | "td_tc"

struct NeedleSpec {
  std::string id;
  std::string needle_text;
  std::string question;
  std::vector<std::string> gold_answers;
  std::vector<std::string> keywords;

  void validate() const;
};

void to_json(Json& j, const NeedleSpec& n);
void from_json(const Json& j, NeedleSpec& n);
std::vector<NeedleSpec> load_needles(const std::filesystem::path& path);

enum class Complexity { kSingleHop, kMultiHop, kDetail };

Complexity parse_complexity(std::string_view name);
std::string_view to_string(Complexity c);  // "single_hop" | "multi_hop" | "detail"

struct MCQInstance {
  std::string id;
  std::string book_id;
  std::string question;
  std::map<char, std::string> options;  // exactly A..D
  char gold = 'A';
  Complexity complexity = Complexity::kSingleHop;
  std::size_t evidence_offset = 0;  // byte offset into the book

  void validate() const;
};

void to_json(Json& j, const MCQInstance& m);
void from_json(const Json& j, MCQInstance& m);
/// Instances without an "id" get "<book_id>/q<line index>".
std::vector<MCQInstance> load_mcq(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Haystacks

/// Filler material: the corpus split into sentences, inner whitespace collapsed.
class SnippetPool {
 public:
  explicit SnippetPool(const std::vector<Document>& corpus);
  explicit SnippetPool(std::vector<std::string> snippets);

  const std::vector<std::string>& snippets() const { return snippets_; }
  std::size_t size() const { return snippets_.size(); }

 private:
  std::vector<std::string> snippets_;
};

struct HaystackSpec {
  NeedleSpec needle;
  std::size_t context_length = 250;  // estimated tokens
  std::size_t position_index = 0;    // 0 .. positions-1
  std::size_t positions = 26;
  std::uint64_t seed = 0;
  bool allow_repeat = false;  // cycle through the pool when it runs out

  void validate() const;
};

struct Haystack {
  Document doc;
  std::size_t needle_offset = 0;  // byte offset of the needle in doc.text
  std::size_t tokens = 0;         // estimate of doc.text
};

/// Same seed and context length give the same filler for every needle and
/// position; only the needle placement changes. The needle goes at the snippet
/// boundary whose token offset is nearest position_index/(positions-1) of the
/// filler. Throws CorpusTooSmall and NeedleCollision.
Haystack build_haystack(const HaystackSpec& spec, const SnippetPool& pool, const TokenEstimator& estimator = {});

/// Allowed deviation of a haystack from its token budget, in percent.
inline constexpr double kHaystackTolerancePercent = 2.0;

// ---------------------------------------------------------------------------
// Prompts

struct AssembledPrompt {
  Prompt prompt;
  // TD_TC context without any known tag token, or TD context that has one.
  bool mode_context_mismatch = false;
};

AssembledPrompt assemble_prompt(std::string_view context, std::string_view question, PromptMode mode,
                                const CategorySet& categories);

AssembledPrompt assemble_mcq_prompt(std::string_view context, const MCQInstance& instance, PromptMode mode,
                                    const CategorySet& categories);

// ---------------------------------------------------------------------------
// Scoring and metrics

/// Case-folded, whitespace-collapsed substring match against any gold answer.
int score_contains(std::string_view response, const std::vector<std::string>& gold_answers);

struct McqScore {
  int score = 0;
  std::optional<char> answer;
  bool unparseable = false;
};

/// First standalone A-D letter in the response.
McqScore score_mcq(std::string_view response, char gold);

/// Percentages are carried as integer hundredths (8119 == 81.19%).
using Hundredths = std::int64_t;

std::string format_hundredths(Hundredths v);  // "81.19", "-3.50"
/// Half-up rounding of 10000 * num / den into hundredths.
Hundredths percent_hundredths(std::int64_t num, std::int64_t den);

struct EvalRecord {
  std::string instance_id;
  std::string benchmark;  // "nolima" | "novelqa"
  PromptMode mode = PromptMode::kBaseline;
  std::optional<std::size_t> context_length;
  std::optional<Complexity> complexity;
  std::string model_id;
  std::string tagger;  // empty unless the context was tagged
  std::string response;
  std::optional<int> score;  // present iff error is absent
  Usage usage;
  std::optional<std::string> error;
  bool flagged = false;  // empty or unparseable response

  bool operator==(const EvalRecord&) const = default;
};

void to_json(Json& j, const EvalRecord& r);
void from_json(const Json& j, EvalRecord& r);

struct GroupAccuracy {
  std::size_t correct = 0;
  std::size_t scored = 0;   // records with a score
  std::size_t errored = 0;  // excluded from the denominator
  Hundredths percent = 0;

  bool operator==(const GroupAccuracy&) const = default;
};

/// Groups whose records all errored are absent.
std::map<std::string, GroupAccuracy> accuracy_table(const std::vector<EvalRecord>& records,
                                                    const std::function<std::string(const EvalRecord&)>& group_by);

/// 100 * (acc[min CL] - acc[max CL]) / acc[min CL], in hundredths.
/// Throws InvalidArgument with fewer than two lengths, ZeroShortAccuracy when
/// the shortest length scored 0.
Hundredths extremum_drop_rate(const std::map<std::size_t, Hundredths>& per_cl);

struct TruncationResult {
  Document book;
  std::vector<MCQInstance> kept;
  std::vector<MCQInstance> removed;
  bool truncated = false;
};

/// Cuts the book at the last chunk boundary within the budget and drops
/// questions whose evidence lies at or past the cut.
TruncationResult truncate_and_filter(const Document& book, const std::vector<MCQInstance>& instances,
                                     std::size_t budget, const ChunkingConfig& chunking = {},
                                     const TokenEstimator& estimator = {});

// ---------------------------------------------------------------------------
// Evaluation

enum class Scoring { kContains, kMcq };

struct EvalInstance {
  std::string id;  // unique within a run, mode included
  std::string benchmark;
  PromptMode mode = PromptMode::kBaseline;
  std::optional<std::size_t> context_length;
  std::optional<Complexity> complexity;
  std::string tagger;
  Scoring scoring = Scoring::kContains;
  std::vector<std::string> gold_answers;
  char gold_letter = 'A';
  // Built lazily on a worker thread so large suites do not hold every prompt.
  std::function<AssembledPrompt()> make_prompt;
};

struct RunOptions {
  std::filesystem::path out_jsonl;  // empty: keep records in memory only
  std::size_t max_in_flight = 4;
  std::string model_id;
  std::size_t max_output_tokens = 256;
  bool thinking = false;
  // Stop once this many new records were written (simulates an interruption).
  std::optional<std::size_t> stop_after;
};

struct RunSummary {
  std::vector<EvalRecord> records;  // instance order
  std::size_t resumed = 0;          // records found in out_jsonl and skipped
  std::size_t evaluated = 0;
  std::size_t mode_context_mismatches = 0;
};

/// Records are appended to out_jsonl in instance order as soon as a prefix
/// completes; an existing file is resumed (a torn last line is discarded).
RunSummary run_eval(const std::vector<EvalInstance>& instances, LlmClient& llm, const RunOptions& options);

std::vector<EvalRecord> load_records(const std::filesystem::path& path);

/// Mock that answers a needle question with its first gold answer whenever the
/// needle sentence is present in the (tag-stripped) context, and "" otherwise.
std::shared_ptr<MockLlm> nolima_oracle(const std::vector<NeedleSpec>& needles, const CategorySet& categories);

/// Mock that answers each multiple-choice question with its gold letter.
std::shared_ptr<MockLlm> mcq_oracle(const std::vector<MCQInstance>& questions);

// ---------------------------------------------------------------------------
// Suites

struct TaggingHook {
  TaggingEngine* engine = nullptr;
  ChunkingConfig chunking;
  TokenEstimator estimator;
  RenderOptions render;
  std::string tagger_name;
};

/// Tags one document through chunk -> dedup -> tag -> reassemble.
std::string tag_context(const Document& doc, TaggingHook& hook);

struct NolimaSuiteConfig {
  std::vector<std::size_t> context_lengths{250, 500, 16000, 32000};
  std::size_t positions = 26;
  std::vector<PromptMode> modes{PromptMode::kBaseline, PromptMode::kTD, PromptMode::kTDTC};
  std::uint64_t seed = 0;
  bool allow_repeat = false;
  bool all_positions = false;  // false: needle i uses position i mod positions
  CategorySet categories;
  TokenEstimator estimator;
};

/// One instance per needle x length x position x mode. TD_TC contexts are
/// tagged through the hook (required when td_tc is among the modes), which
/// must outlive the instances.
std::vector<EvalInstance> build_nolima_suite(const std::vector<NeedleSpec>& needles, const SnippetPool& pool,
                                             const NolimaSuiteConfig& config, TaggingHook* hook);

struct NovelqaSuiteConfig {
  std::size_t budget = 180000;
  std::vector<PromptMode> modes{PromptMode::kBaseline, PromptMode::kTD, PromptMode::kTDTC};
  CategorySet categories;
  ChunkingConfig chunking;
  TokenEstimator estimator;
};

struct NovelqaSuite {
  std::vector<EvalInstance> instances;
  std::size_t kept = 0;
  std::size_t removed = 0;
};

NovelqaSuite build_novelqa_suite(const std::vector<Document>& books, const std::vector<MCQInstance>& questions,
                                 const NovelqaSuiteConfig& config, TaggingHook* hook);

}  // namespace tagforge
