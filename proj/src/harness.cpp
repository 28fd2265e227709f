#include "tagforge/harness.hpp"

#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <fstream>
#include <memory>
#include <mutex>
#include <random>
#include <set>
#include <thread>

#include "tagforge/annotator.hpp"
#include "tagforge/engine.hpp"
#include "tagforge/error.hpp"

namespace tagforge {

PromptMode parse_prompt_mode(std::string_view name) {
  if (name == "baseline") return PromptMode::kBaseline;
  if (name == "td" || name == "TD") return PromptMode::kTD;
  if (name == "td_tc" || name == "TD_TC" || name == "td+tc") return PromptMode::kTDTC;
  throw Error(ErrorCode::kInvalidArgument, "unknown prompt mode '" + std::string(name) + "'");
}

std::string_view to_string(PromptMode mode) {
  switch (mode) {
    case PromptMode::kBaseline: return "baseline";
    case PromptMode::kTD: return "td";
    case PromptMode::kTDTC: return "td_tc";
  }
  return "baseline";
}

Complexity parse_complexity(std::string_view name) {
  if (name == "single_hop" || name == "single-hop") return Complexity::kSingleHop;
  if (name == "multi_hop" || name == "multi-hop") return Complexity::kMultiHop;
  if (name == "detail" || name == "detailed") return Complexity::kDetail;
  throw Error(ErrorCode::kInvalidArgument, "unknown complexity '" + std::string(name) + "'");
}

std::string_view to_string(Complexity c) {
  switch (c) {
    case Complexity::kSingleHop: return "single_hop";
    case Complexity::kMultiHop: return "multi_hop";
    case Complexity::kDetail: return "detail";
  }
  return "single_hop";
}

void NeedleSpec::validate() const {
  if (needle_text.empty()) throw Error(ErrorCode::kInvalidArgument, "needle '" + id + "' has no text");
  if (gold_answers.empty()) throw Error(ErrorCode::kInvalidArgument, "needle '" + id + "' has no gold answers");
  for (const auto& g : gold_answers) {
    if (g.empty()) throw Error(ErrorCode::kInvalidArgument, "needle '" + id + "' has an empty gold answer");
  }
}

void to_json(Json& j, const NeedleSpec& n) {
  j = Json{{"id", n.id},
           {"needle_text", n.needle_text},
           {"question", n.question},
           {"gold_answers", n.gold_answers},
           {"keywords", n.keywords}};
}

void from_json(const Json& j, NeedleSpec& n) {
  n.id = j.at("id").get<std::string>();
  n.needle_text = j.at("needle_text").get<std::string>();
  n.question = j.at("question").get<std::string>();
  n.gold_answers = j.at("gold_answers").get<std::vector<std::string>>();
  n.keywords = j.value("keywords", std::vector<std::string>{});
}

std::vector<NeedleSpec> load_needles(const std::filesystem::path& path) {
  std::vector<NeedleSpec> out;
  std::set<std::string> ids;
  for_each_jsonl(path, [&](const Json& j) {
    auto n = j.get<NeedleSpec>();
    n.validate();
    if (!ids.insert(n.id).second) throw Error(ErrorCode::kInvalidArgument, "duplicate needle id '" + n.id + "'");
    out.push_back(std::move(n));
  });
  return out;
}

void MCQInstance::validate() const {
  if (options.size() != 4 || !options.count('A') || !options.count('B') || !options.count('C') || !options.count('D')) {
    throw Error(ErrorCode::kInvalidArgument, "question '" + id + "' needs options A, B, C and D");
  }
  if (gold < 'A' || gold > 'D') throw Error(ErrorCode::kInvalidArgument, "question '" + id + "' has a bad gold letter");
}

void to_json(Json& j, const MCQInstance& m) {
  Json opts = Json::object();
  for (const auto& [k, v] : m.options) opts[std::string(1, k)] = v;
  j = Json{{"id", m.id},
           {"book_id", m.book_id},
           {"question", m.question},
           {"options", opts},
           {"gold", std::string(1, m.gold)},
           {"complexity", to_string(m.complexity)},
           {"evidence_offset", m.evidence_offset}};
}

void from_json(const Json& j, MCQInstance& m) {
  m.id = j.value("id", std::string{});
  m.book_id = j.at("book_id").get<std::string>();
  m.question = j.at("question").get<std::string>();
  m.options.clear();
  for (const auto& [k, v] : j.at("options").items()) {
    if (k.size() != 1) throw Error(ErrorCode::kInvalidArgument, "option key '" + k + "' is not a letter");
    m.options[k[0]] = v.get<std::string>();
  }
  auto gold = j.at("gold").get<std::string>();
  if (gold.size() != 1) throw Error(ErrorCode::kInvalidArgument, "gold must be a single letter");
  m.gold = gold[0];
  m.complexity = parse_complexity(j.at("complexity").get<std::string>());
  m.evidence_offset = j.at("evidence_offset").get<std::size_t>();
}

std::vector<MCQInstance> load_mcq(const std::filesystem::path& path) {
  std::vector<MCQInstance> out;
  for_each_jsonl(path, [&](const Json& j) {
    auto m = j.get<MCQInstance>();
    if (m.id.empty()) m.id = m.book_id + "/q" + std::to_string(out.size());
    m.validate();
    out.push_back(std::move(m));
  });
  return out;
}

// ---------------------------------------------------------------------------
// Haystacks

namespace {

bool is_ascii_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

std::string collapse_ws(std::string_view s) {
  std::string out;
  bool pending = false;
  for (char c : s) {
    if (is_ascii_space(c)) {
      pending = !out.empty();
      continue;
    }
    if (pending) out += ' ';
    pending = false;
    out += c;
  }
  return out;
}

std::size_t count_occurrences(std::string_view hay, std::string_view needle) {
  std::size_t n = 0;
  for (auto p = hay.find(needle); p != std::string_view::npos; p = hay.find(needle, p + 1)) ++n;
  return n;
}

}  // namespace

SnippetPool::SnippetPool(const std::vector<Document>& corpus) {
  for (const auto& doc : corpus) {
    for (const auto& r : split_sentences(doc.text)) {
      auto s = collapse_ws(std::string_view(doc.text).substr(r.start, r.end - r.start));
      if (!s.empty()) snippets_.push_back(std::move(s));
    }
  }
}

SnippetPool::SnippetPool(std::vector<std::string> snippets) {
  for (auto& s : snippets) {
    auto c = collapse_ws(s);
    if (!c.empty()) snippets_.push_back(std::move(c));
  }
}

void HaystackSpec::validate() const {
  needle.validate();
  if (context_length == 0) throw Error(ErrorCode::kInvalidArgument, "context length must be positive");
  if (positions == 0) throw Error(ErrorCode::kInvalidArgument, "positions must be positive");
  if (position_index >= positions) {
    throw Error(ErrorCode::kInvalidArgument, "position index " + std::to_string(position_index) + " out of range");
  }
}

Haystack build_haystack(const HaystackSpec& spec, const SnippetPool& pool, const TokenEstimator& estimator) {
  spec.validate();
  const std::string& needle = spec.needle.needle_text;
  const std::size_t budget = spec.context_length;
  if (pool.size() == 0) throw Error(ErrorCode::kCorpusTooSmall, "empty snippet pool");

  // Whatever the placement, the haystack holds the same bytes as filler + " " + needle.
  const std::string suffix = " " + needle;
  auto total_for = [&](std::string_view filler) { return estimator.estimate(std::string(filler) + suffix); };

  std::mt19937_64 gen(spec.seed);
  const std::size_t start = static_cast<std::size_t>(gen() % pool.size());

  std::string filler;
  std::vector<std::size_t> joins;  // byte offsets of the spaces between snippets
  std::size_t visited = 0;
  std::size_t used = 0;
  std::size_t approx = 0;
  std::size_t target_approx = budget + 16;
  bool exhausted = false;
  while (true) {
    while (approx < target_approx) {
      if (!spec.allow_repeat && visited >= pool.size()) {
        exhausted = true;
        break;
      }
      const auto& s = pool.snippets()[(start + visited) % pool.size()];
      ++visited;
      if (s.find(needle) != std::string::npos) {
        if (used == 0 && visited >= pool.size()) break;
        continue;
      }
      if (!filler.empty()) {
        joins.push_back(filler.size());
        filler += ' ';
      }
      filler += s;
      approx += estimator.estimate(s) + 1;
      ++used;
    }
    if (used == 0) throw Error(ErrorCode::kNeedleCollision, "every filler snippet contains the needle");
    if (exhausted || total_for(filler) > budget) break;
    target_approx += budget / 4 + 16;
  }

  // Largest cut at a word boundary whose haystack fits the budget.
  std::vector<std::size_t> cuts;
  for (std::size_t i = 0; i < filler.size(); ++i) {
    if (filler[i] == ' ') cuts.push_back(i);
  }
  cuts.push_back(filler.size());
  auto fits = [&](std::size_t cut) { return total_for(std::string_view(filler).substr(0, cut)) <= budget; };
  std::size_t cut = 0;
  if (fits(cuts.back())) {
    cut = cuts.back();
  } else {
    auto it = std::partition_point(cuts.begin(), cuts.end(), fits);
    cut = it == cuts.begin() ? 0 : *(it - 1);
  }
  filler.resize(cut);
  joins.erase(std::lower_bound(joins.begin(), joins.end(), cut), joins.end());

  // Candidate needle slots: start, every snippet join, end.
  std::vector<std::size_t> slots;
  slots.push_back(0);
  slots.insert(slots.end(), joins.begin(), joins.end());
  if (cut > 0) slots.push_back(cut);
  const auto total_filler = static_cast<std::int64_t>(estimator.estimate(filler));
  const auto num = static_cast<std::int64_t>(spec.position_index);
  const auto den = static_cast<std::int64_t>(spec.positions > 1 ? spec.positions - 1 : 1);
  // Distance of a slot from the target fraction, scaled by den.
  auto distance = [&](std::size_t slot) {
    auto t = static_cast<std::int64_t>(estimator.estimate(std::string_view(filler).substr(0, slot)));
    return std::llabs(t * den - num * total_filler);
  };
  auto first_at_or_after = std::partition_point(slots.begin(), slots.end(), [&](std::size_t slot) {
    return static_cast<std::int64_t>(estimator.estimate(std::string_view(filler).substr(0, slot))) * den <
           num * total_filler;
  });
  std::size_t chosen;
  if (first_at_or_after == slots.end()) {
    chosen = slots.back();
  } else if (first_at_or_after == slots.begin()) {
    chosen = *first_at_or_after;
  } else {
    auto prev = *(first_at_or_after - 1);
    chosen = distance(prev) <= distance(*first_at_or_after) ? prev : *first_at_or_after;
  }

  Haystack out;
  if (filler.empty()) {
    out.doc.text = needle;
    out.needle_offset = 0;
  } else if (chosen == 0) {
    out.doc.text = needle + " " + filler;
    out.needle_offset = 0;
  } else if (chosen == filler.size()) {
    out.doc.text = filler + " " + needle;
    out.needle_offset = filler.size() + 1;
  } else {
    out.doc.text = filler.substr(0, chosen) + " " + needle + filler.substr(chosen);
    out.needle_offset = chosen + 1;
  }
  out.doc.id = spec.needle.id + "/cl" + std::to_string(budget) + "/p" + std::to_string(spec.position_index);
  out.tokens = estimator.estimate(out.doc.text);

  if (count_occurrences(out.doc.text, needle) != 1) {
    throw Error(ErrorCode::kNeedleCollision, "needle '" + spec.needle.id + "' occurs more than once");
  }
  const double deviation = 100.0 * std::abs(static_cast<double>(out.tokens) - static_cast<double>(budget)) /
                           static_cast<double>(budget);
  if (deviation > kHaystackTolerancePercent) {
    throw Error(ErrorCode::kCorpusTooSmall, "haystack has " + std::to_string(out.tokens) + " tokens for a budget of " +
                                                std::to_string(budget));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Prompts

namespace {

constexpr std::string_view kBaseSystem =
    "You are a helpful assistant that answers questions about a long text. Read the text supplied by the user "
    "carefully and answer the question that follows it.";

std::string system_prompt(PromptMode mode, const CategorySet& categories) {
  std::string s(kBaseSystem);
  if (mode == PromptMode::kBaseline) return s;
  s += "\n\nThe following semantic categories describe the kinds of information that may matter for the "
       "question:\n";
  s += render_category_list(categories);
  if (mode == PromptMode::kTDTC) {
    s += "\n\nIn the text, mentions of these categories are wrapped in XML-style tags named after the category. "
         "Use the tags to locate relevant passages. The tags are not part of the original text.";
  }
  return s;
}

bool mismatch(std::string_view context, PromptMode mode, const CategorySet& categories) {
  if (mode == PromptMode::kBaseline && categories.empty()) return false;
  bool tagged = contains_tag_token(context, categories.names());
  return mode == PromptMode::kTDTC ? !tagged : tagged;
}

}  // namespace

AssembledPrompt assemble_prompt(std::string_view context, std::string_view question, PromptMode mode,
                                const CategorySet& categories) {
  AssembledPrompt out;
  out.prompt.system = system_prompt(mode, categories);
  out.prompt.user = "Text:\n" + std::string(context) + "\n\nQuestion: " + std::string(question) +
                    "\nAnswer the question briefly.";
  out.mode_context_mismatch = mismatch(context, mode, categories);
  return out;
}

AssembledPrompt assemble_mcq_prompt(std::string_view context, const MCQInstance& instance, PromptMode mode,
                                    const CategorySet& categories) {
  AssembledPrompt out;
  out.prompt.system = system_prompt(mode, categories);
  std::string user = "Text:\n" + std::string(context) + "\n\nQuestion: " + instance.question + "\n";
  for (const auto& [letter, text] : instance.options) user += std::string(1, letter) + ". " + text + "\n";
  user += "Respond with only the letter (A, B, C, or D) of the correct option.";
  out.prompt.user = std::move(user);
  out.mode_context_mismatch = mismatch(context, mode, categories);
  return out;
}

// ---------------------------------------------------------------------------
// Scoring and metrics

namespace {

icu::UnicodeString fold_collapse(std::string_view s) {
  auto u = icu::UnicodeString::fromUTF8(icu::StringPiece(s.data(), static_cast<int32_t>(s.size())));
  u.foldCase();
  icu::UnicodeString out;
  bool pending = false;
  for (int32_t i = 0; i < u.length();) {
    UChar32 c = u.char32At(i);
    i += U16_LENGTH(c);
    if (u_isUWhiteSpace(c)) {
      pending = !out.isEmpty();
      continue;
    }
    if (pending) out.append(static_cast<UChar>(' '));
    pending = false;
    out.append(c);
  }
  return out;
}

bool is_ascii_alnum(char c) {
  return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9');
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

}  // namespace

int score_contains(std::string_view response, const std::vector<std::string>& gold_answers) {
  auto r = fold_collapse(response);
  for (const auto& g : gold_answers) {
    auto gf = fold_collapse(g);
    if (!gf.isEmpty() && r.indexOf(gf) >= 0) return 1;
  }
  return 0;
}

McqScore score_mcq(std::string_view response, char gold) {
  McqScore out;
  for (std::size_t i = 0; i < response.size(); ++i) {
    char c = response[i];
    if (c < 'A' || c > 'D') continue;
    bool left = i == 0 || !is_ascii_alnum(response[i - 1]);
    bool right = i + 1 == response.size() || !is_ascii_alnum(response[i + 1]);
    if (left && right) {
      out.answer = c;
      out.score = c == gold ? 1 : 0;
      return out;
    }
  }
  out.unparseable = true;
  return out;
}

std::string format_hundredths(Hundredths v) {
  std::string sign = v < 0 ? "-" : "";
  auto a = v < 0 ? -v : v;
  auto frac = std::to_string(a % 100);
  if (frac.size() < 2) frac = "0" + frac;
  return sign + std::to_string(a / 100) + "." + frac;
}

Hundredths percent_hundredths(std::int64_t num, std::int64_t den) {
  if (den <= 0) throw Error(ErrorCode::kInvalidArgument, "percentage of an empty denominator");
  return floor_div(2 * 10000 * num + den, 2 * den);
}

void to_json(Json& j, const EvalRecord& r) {
  j = Json{{"instance_id", r.instance_id},
           {"benchmark", r.benchmark},
           {"mode", to_string(r.mode)},
           {"model_id", r.model_id},
           {"tagger", r.tagger},
           {"response", r.response},
           {"usage", {{"input_tokens", r.usage.input_tokens}, {"output_tokens", r.usage.output_tokens}}},
           {"flagged", r.flagged}};
  j["context_length"] = r.context_length ? Json(*r.context_length) : Json(nullptr);
  j["complexity"] = r.complexity ? Json(to_string(*r.complexity)) : Json(nullptr);
  j["score"] = r.score ? Json(*r.score) : Json(nullptr);
  j["error"] = r.error ? Json(*r.error) : Json(nullptr);
}

void from_json(const Json& j, EvalRecord& r) {
  r.instance_id = j.at("instance_id").get<std::string>();
  r.benchmark = j.value("benchmark", std::string{});
  r.mode = parse_prompt_mode(j.at("mode").get<std::string>());
  r.model_id = j.value("model_id", std::string{});
  r.tagger = j.value("tagger", std::string{});
  r.response = j.value("response", std::string{});
  r.flagged = j.value("flagged", false);
  r.context_length.reset();
  r.complexity.reset();
  r.score.reset();
  r.error.reset();
  if (auto it = j.find("context_length"); it != j.end() && !it->is_null()) r.context_length = it->get<std::size_t>();
  if (auto it = j.find("complexity"); it != j.end() && !it->is_null()) {
    r.complexity = parse_complexity(it->get<std::string>());
  }
  if (auto it = j.find("score"); it != j.end() && !it->is_null()) r.score = it->get<int>();
  if (auto it = j.find("error"); it != j.end() && !it->is_null()) r.error = it->get<std::string>();
  if (auto it = j.find("usage"); it != j.end()) {
    r.usage.input_tokens = it->value("input_tokens", std::size_t{0});
    r.usage.output_tokens = it->value("output_tokens", std::size_t{0});
  }
  if (r.score.has_value() == r.error.has_value()) {
    throw Error(ErrorCode::kInvalidArgument, "record '" + r.instance_id + "' must have exactly one of score and error");
  }
}

std::map<std::string, GroupAccuracy> accuracy_table(const std::vector<EvalRecord>& records,
                                                    const std::function<std::string(const EvalRecord&)>& group_by) {
  std::map<std::string, GroupAccuracy> groups;
  for (const auto& r : records) {
    auto& g = groups[group_by(r)];
    if (r.score) {
      ++g.scored;
      g.correct += *r.score == 1 ? 1 : 0;
    } else {
      ++g.errored;
    }
  }
  for (auto it = groups.begin(); it != groups.end();) {
    if (it->second.scored == 0) {
      it = groups.erase(it);
      continue;
    }
    it->second.percent = percent_hundredths(static_cast<std::int64_t>(it->second.correct),
                                            static_cast<std::int64_t>(it->second.scored));
    ++it;
  }
  return groups;
}

Hundredths extremum_drop_rate(const std::map<std::size_t, Hundredths>& per_cl) {
  if (per_cl.size() < 2) throw Error(ErrorCode::kInvalidArgument, "drop rate needs at least two context lengths");
  const Hundredths shortest = per_cl.begin()->second;
  const Hundredths longest = per_cl.rbegin()->second;
  if (shortest == 0) throw Error(ErrorCode::kZeroShortAccuracy, "accuracy at the shortest context length is 0");
  return percent_hundredths(shortest - longest, shortest);
}

TruncationResult truncate_and_filter(const Document& book, const std::vector<MCQInstance>& instances,
                                     std::size_t budget, const ChunkingConfig& chunking,
                                     const TokenEstimator& estimator) {
  if (budget == 0) throw Error(ErrorCode::kInvalidArgument, "budget must be positive");
  TruncationResult out;
  out.book = book;
  std::size_t cut = book.text.size();
  if (estimator.estimate(book.text) > budget) {
    auto chunked = chunk_document(book, chunking, estimator);
    std::string_view text = book.text;
    auto it = std::partition_point(chunked.chunks.begin(), chunked.chunks.end(), [&](const Chunk& c) {
      return estimator.estimate(text.substr(0, c.end)) <= budget;
    });
    cut = it == chunked.chunks.begin() ? 0 : (it - 1)->end;
    out.book.text = book.text.substr(0, cut);
    out.truncated = true;
  }
  for (const auto& q : instances) {
    if (q.evidence_offset < cut) {
      out.kept.push_back(q);
    } else {
      out.removed.push_back(q);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

// Drops a torn final line left by an interrupted writer.
void repair_tail(const std::filesystem::path& path) {
  std::string content = read_file(path);
  if (content.empty() || content.back() == '\n') return;
  auto nl = content.rfind('\n');
  content.resize(nl == std::string::npos ? 0 : nl + 1);
  atomic_write_file(path, content);
}

EvalRecord evaluate(const EvalInstance& inst, LlmClient& llm, const RunOptions& options, bool* mismatch) {
  EvalRecord r;
  r.instance_id = inst.id;
  r.benchmark = inst.benchmark;
  r.mode = inst.mode;
  r.context_length = inst.context_length;
  r.complexity = inst.complexity;
  r.model_id = options.model_id;
  r.tagger = inst.tagger;
  try {
    auto assembled = inst.make_prompt();
    *mismatch = assembled.mode_context_mismatch;
    CompletionRequest req;
    req.system = assembled.prompt.system;
    req.user = assembled.prompt.user;
    req.max_output_tokens = options.max_output_tokens;
    req.thinking = options.thinking;
    req.model_id = options.model_id;
    auto result = llm.complete(req);
    r.response = result.text;
    r.usage = result.usage;
    if (inst.scoring == Scoring::kMcq) {
      auto s = score_mcq(result.text, inst.gold_letter);
      r.score = s.score;
      r.flagged = s.unparseable;
    } else {
      r.score = score_contains(result.text, inst.gold_answers);
      r.flagged = collapse_ws(result.text).empty();
    }
  } catch (const std::exception& e) {
    r.error = e.what();
    r.score.reset();
  }
  return r;
}

}  // namespace

std::vector<EvalRecord> load_records(const std::filesystem::path& path) {
  std::vector<EvalRecord> out;
  for_each_jsonl(path, [&](const Json& j) { out.push_back(j.get<EvalRecord>()); });
  return out;
}

RunSummary run_eval(const std::vector<EvalInstance>& instances, LlmClient& llm, const RunOptions& options) {
  std::set<std::string> ids;
  for (const auto& inst : instances) {
    if (!ids.insert(inst.id).second) throw Error(ErrorCode::kInvalidArgument, "duplicate instance id '" + inst.id + "'");
    if (!inst.make_prompt) throw Error(ErrorCode::kInvalidArgument, "instance '" + inst.id + "' has no prompt");
  }

  RunSummary summary;
  std::map<std::string, EvalRecord> existing;
  std::error_code ec;
  const bool to_file = !options.out_jsonl.empty();
  if (to_file && std::filesystem::exists(options.out_jsonl, ec)) {
    repair_tail(options.out_jsonl);
    for (auto& r : load_records(options.out_jsonl)) existing.emplace(r.instance_id, std::move(r));
  }
  std::vector<const EvalInstance*> pending;
  for (const auto& inst : instances) {
    if (!existing.count(inst.id)) pending.push_back(&inst);
  }
  summary.resumed = instances.size() - pending.size();

  std::ofstream out;
  if (to_file) {
    if (options.out_jsonl.has_parent_path()) std::filesystem::create_directories(options.out_jsonl.parent_path(), ec);
    out.open(options.out_jsonl, std::ios::binary | std::ios::app);
    if (!out) throw Error(ErrorCode::kIo, "cannot append to '" + options.out_jsonl.string() + "'");
  }

  std::vector<std::optional<EvalRecord>> results(pending.size());
  std::mutex mu;
  std::condition_variable cv;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::atomic<std::size_t> mismatches{0};
  auto worker = [&] {
    while (!stop.load()) {
      std::size_t i = next.fetch_add(1);
      if (i >= pending.size()) return;
      bool mismatch = false;
      auto rec = evaluate(*pending[i], llm, options, &mismatch);
      if (mismatch) ++mismatches;
      {
        std::lock_guard lock(mu);
        results[i] = std::move(rec);
      }
      cv.notify_all();
    }
  };

  std::vector<std::thread> threads;
  const std::size_t n_threads = std::min(std::max<std::size_t>(1, options.max_in_flight), pending.size());
  for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);

  std::map<std::string, EvalRecord> fresh;
  std::size_t written = 0;
  for (std::size_t i = 0; i < pending.size(); ++i) {
    if (options.stop_after && written >= *options.stop_after) break;
    EvalRecord rec;
    {
      std::unique_lock lock(mu);
      cv.wait(lock, [&] { return results[i].has_value(); });
      rec = std::move(*results[i]);
    }
    if (to_file) {
      out << canonical_json(Json(rec)) << '\n';
      out.flush();
      if (!out) throw Error(ErrorCode::kIo, "write to '" + options.out_jsonl.string() + "' failed");
    }
    ++written;
    fresh.emplace(rec.instance_id, std::move(rec));
  }
  stop.store(true);
  for (auto& t : threads) t.join();

  summary.evaluated = written;
  summary.mode_context_mismatches = mismatches.load();
  for (const auto& inst : instances) {
    if (auto it = existing.find(inst.id); it != existing.end()) {
      summary.records.push_back(it->second);
    } else if (auto f = fresh.find(inst.id); f != fresh.end()) {
      summary.records.push_back(f->second);
    }
  }
  return summary;
}

namespace {

// The question line assembled by assemble_prompt / assemble_mcq_prompt.
std::string_view question_of(std::string_view user) {
  constexpr std::string_view kTag = "\n\nQuestion: ";
  auto at = user.rfind(kTag);
  if (at == std::string_view::npos) return {};
  auto rest = user.substr(at + kTag.size());
  return rest.substr(0, rest.find('\n'));
}

}  // namespace

std::shared_ptr<MockLlm> nolima_oracle(const std::vector<NeedleSpec>& needles, const CategorySet& categories) {
  std::multimap<std::string, NeedleSpec> by_question;
  for (const auto& n : needles) by_question.emplace(n.question, n);
  const auto names = categories.names();
  return std::make_shared<MockLlm>([by_question, names](const CompletionRequest& req) -> std::string {
    auto [lo, hi] = by_question.equal_range(std::string(question_of(req.user)));
    if (lo == hi) return "";
    const std::string plain = names.empty() ? req.user : strip_tags(req.user, names);
    for (auto it = lo; it != hi; ++it) {
      if (plain.find(it->second.needle_text) != std::string::npos) return it->second.gold_answers.front();
    }
    return "";
  });
}

std::shared_ptr<MockLlm> mcq_oracle(const std::vector<MCQInstance>& questions) {
  std::map<std::string, char> gold;
  for (const auto& q : questions) gold.emplace(q.question, q.gold);
  return std::make_shared<MockLlm>([gold](const CompletionRequest& req) -> std::string {
    auto it = gold.find(std::string(question_of(req.user)));
    return it == gold.end() ? "" : std::string(1, it->second);
  });
}

// ---------------------------------------------------------------------------
// Suites

std::string tag_context(const Document& doc, TaggingHook& hook) {
  if (!hook.engine) throw Error(ErrorCode::kInvalidArgument, "tagged context requested without a tagger");
  // Engines keep counters and are not safe for concurrent use.
  static std::mutex engine_mu;
  std::lock_guard lock(engine_mu);
  PipelineConfig cfg;
  cfg.chunking = hook.chunking;
  cfg.estimator = hook.estimator;
  cfg.dedup_scope = DedupScope::kGlobal;
  cfg.render = hook.render;
  return run_pipeline({doc}, cfg, *hook.engine).rendered.at(0).text;
}

std::vector<EvalInstance> build_nolima_suite(const std::vector<NeedleSpec>& needles, const SnippetPool& pool,
                                             const NolimaSuiteConfig& config, TaggingHook* hook) {
  const bool needs_tags = std::find(config.modes.begin(), config.modes.end(), PromptMode::kTDTC) != config.modes.end();
  if (needs_tags && (!hook || !hook->engine)) {
    throw Error(ErrorCode::kInvalidArgument, "td_tc mode needs a tagger");
  }
  std::vector<EvalInstance> out;
  // Prompts are built lazily, so they own what they need besides the hook.
  const auto cats = std::make_shared<CategorySet>(config.categories);
  const auto shared_pool = std::make_shared<SnippetPool>(pool);
  for (std::size_t cl : config.context_lengths) {
    for (std::size_t n = 0; n < needles.size(); ++n) {
      needles[n].validate();
      std::vector<std::size_t> positions;
      if (config.all_positions) {
        for (std::size_t p = 0; p < config.positions; ++p) positions.push_back(p);
      } else {
        positions.push_back(n % config.positions);
      }
      for (std::size_t pos : positions) {
        HaystackSpec spec{needles[n], cl, pos, config.positions, config.seed, config.allow_repeat};
        for (PromptMode mode : config.modes) {
          EvalInstance inst;
          inst.id = needles[n].id + "/cl" + std::to_string(cl) + "/p" + std::to_string(pos) + "/" +
                    std::string(to_string(mode));
          inst.benchmark = "nolima";
          inst.mode = mode;
          inst.context_length = cl;
          inst.tagger = mode == PromptMode::kTDTC ? hook->tagger_name : "";
          inst.scoring = Scoring::kContains;
          inst.gold_answers = needles[n].gold_answers;
          TokenEstimator est = config.estimator;
          inst.make_prompt = [spec, mode, cats, shared_pool, est, hook] {
            auto hay = build_haystack(spec, *shared_pool, est);
            std::string context = mode == PromptMode::kTDTC ? tag_context(hay.doc, *hook) : hay.doc.text;
            return assemble_prompt(context, spec.needle.question, mode, *cats);
          };
          out.push_back(std::move(inst));
        }
      }
    }
  }
  return out;
}

NovelqaSuite build_novelqa_suite(const std::vector<Document>& books, const std::vector<MCQInstance>& questions,
                                 const NovelqaSuiteConfig& config, TaggingHook* hook) {
  const bool needs_tags = std::find(config.modes.begin(), config.modes.end(), PromptMode::kTDTC) != config.modes.end();
  if (needs_tags && (!hook || !hook->engine)) throw Error(ErrorCode::kInvalidArgument, "td_tc mode needs a tagger");
  std::map<std::string, const Document*> by_id;
  for (const auto& b : books) by_id[b.id] = &b;
  std::map<std::string, std::vector<MCQInstance>> by_book;
  for (const auto& q : questions) {
    q.validate();
    if (!by_id.count(q.book_id)) throw Error(ErrorCode::kInvalidArgument, "question '" + q.id + "' names unknown book '" + q.book_id + "'");
    by_book[q.book_id].push_back(q);
  }

  NovelqaSuite suite;
  const auto cats = std::make_shared<CategorySet>(config.categories);
  for (const auto& book : books) {
    auto qs = by_book.find(book.id);
    if (qs == by_book.end()) continue;
    auto tr = truncate_and_filter(book, qs->second, config.budget, config.chunking, config.estimator);
    suite.kept += tr.kept.size();
    suite.removed += tr.removed.size();
    auto plain = std::make_shared<std::string>(tr.book.text);
    std::shared_ptr<std::string> tagged;
    if (needs_tags && !tr.kept.empty()) tagged = std::make_shared<std::string>(tag_context(tr.book, *hook));
    for (const auto& q : tr.kept) {
      for (PromptMode mode : config.modes) {
        EvalInstance inst;
        inst.id = q.id + "/" + std::string(to_string(mode));
        inst.benchmark = "novelqa";
        inst.mode = mode;
        inst.complexity = q.complexity;
        inst.tagger = mode == PromptMode::kTDTC ? hook->tagger_name : "";
        inst.scoring = Scoring::kMcq;
        inst.gold_letter = q.gold;
        auto context = mode == PromptMode::kTDTC ? tagged : plain;
        inst.make_prompt = [context, q, mode, cats] { return assemble_mcq_prompt(*context, q, mode, *cats); };
        suite.instances.push_back(std::move(inst));
      }
    }
  }
  return suite;
}

}  // namespace tagforge
