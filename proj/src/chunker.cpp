#include "tagforge/chunker.hpp"

#include <algorithm>
#include <array>
#include <set>

#include "tagforge/error.hpp"

namespace tagforge {

ChunkStrategy parse_chunk_strategy(std::string_view name) {
  if (name == "sentence") return ChunkStrategy::kSentence;
  if (name == "paragraph") return ChunkStrategy::kParagraph;
  if (name == "token_window") return ChunkStrategy::kTokenWindow;
  throw Error(ErrorCode::kInvalidArgument, "unknown chunking strategy '" + std::string(name) + "'");
}

std::string_view to_string(ChunkStrategy s) {
  switch (s) {
    case ChunkStrategy::kSentence: return "sentence";
    case ChunkStrategy::kParagraph: return "paragraph";
    case ChunkStrategy::kTokenWindow: return "token_window";
  }
  return "sentence";
}

void ChunkingConfig::validate() const {
  if (max_chunk_size < 1) throw Error(ErrorCode::kInvalidArgument, "max_chunk_size must be >= 1");
  if (overlap >= max_chunk_size) {
    throw Error(ErrorCode::kInvalidArgument, "overlap must be smaller than max_chunk_size");
  }
  if (overlap != 0 && strategy != ChunkStrategy::kTokenWindow) {
    throw Error(ErrorCode::kInvalidArgument, "overlap is only supported by token_window");
  }
}

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

std::size_t skip_space(std::string_view text, std::size_t i) {
  while (i < text.size() && is_space(text[i])) ++i;
  return i;
}

std::size_t trim_end(std::string_view text, std::size_t begin, std::size_t end) {
  while (end > begin && is_space(text[end - 1])) --end;
  return end;
}

bool starts_with_at(std::string_view text, std::size_t i, std::string_view what) {
  return text.size() >= i + what.size() && text.substr(i, what.size()) == what;
}

// Multi-byte sentence terminals. CJK full-width terminals break without
// trailing whitespace.
constexpr std::array<std::string_view, 1> kWideTerminals = {"\xE2\x80\xA6"};  // …
constexpr std::array<std::string_view, 3> kCjkTerminals = {"\xE3\x80\x82", "\xEF\xBC\x81", "\xEF\xBC\x9F"};
constexpr std::array<std::string_view, 5> kWideClosers = {
    "\xE2\x80\x9D", "\xE2\x80\x99", "\xC2\xBB", "\xE3\x80\x8D", "\xE3\x80\x8F"};  // ” ’ » 」 』

std::size_t match_any(std::string_view text, std::size_t i, auto const& set) {
  for (auto s : set) {
    if (starts_with_at(text, i, s)) return s.size();
  }
  return 0;
}

const std::set<std::string>& abbreviations() {
  static const std::set<std::string> kAbbrev = {
      "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "mt", "vs", "etc", "e.g", "i.e", "cf",
      "al", "fig", "figs", "no", "nos", "vol", "vols", "p", "pp", "ch", "inc", "ltd", "co",
      "corp", "dept", "est", "approx", "gen", "col", "lt", "sgt", "capt", "cmdr", "adm", "rev",
      "hon", "gov", "sen", "rep", "jan", "feb", "mar", "apr", "jun", "jul", "aug", "sep",
      "sept", "oct", "nov", "dec", "u.s", "u.k", "ph.d", "a.m", "p.m", "ave", "blvd", "rd"};
  return kAbbrev;
}

bool is_abbreviation(std::string_view text, std::size_t sentence_start, std::size_t dot) {
  std::size_t b = dot;
  while (b > sentence_start && !is_space(text[b - 1])) --b;
  std::string word;
  for (std::size_t k = b; k < dot; ++k) {
    char c = text[k];
    if (word.empty() && (c == '(' || c == '"' || c == '\'' || c == '[')) continue;
    word.push_back(static_cast<char>(c >= 'A' && c <= 'Z' ? c - 'A' + 'a' : c));
  }
  return !word.empty() && abbreviations().count(word) != 0;
}

}  // namespace

std::vector<TextRange> split_sentences(std::string_view text) {
  std::vector<TextRange> out;
  const std::size_t n = text.size();
  std::size_t i = skip_space(text, 0);
  std::size_t sent_start = i;

  auto push = [&](std::size_t end) {
    end = trim_end(text, sent_start, end);
    if (end > sent_start) out.push_back({sent_start, end});
  };

  while (i < n) {
    if (text[i] == '\n') {
      std::size_t j = i + 1;
      while (j < n && (text[j] == ' ' || text[j] == '\t' || text[j] == '\r')) ++j;
      if (j < n && text[j] == '\n') {
        push(i);
        i = sent_start = skip_space(text, j);
        continue;
      }
    }

    std::size_t j = i;
    bool cjk = false;
    bool single_dot = false;
    while (j < n) {
      if (text[j] == '.' || text[j] == '!' || text[j] == '?') {
        ++j;
      } else if (std::size_t w = match_any(text, j, kWideTerminals)) {
        j += w;
      } else if (std::size_t c = match_any(text, j, kCjkTerminals)) {
        j += c;
        cjk = true;
      } else {
        break;
      }
    }
    if (j == i) {
      ++i;
      continue;
    }
    single_dot = (j == i + 1 && text[i] == '.');
    const std::size_t dot = i;
    while (j < n) {
      char c = text[j];
      if (c == '"' || c == '\'' || c == ')' || c == ']' || c == '}') {
        ++j;
      } else if (std::size_t w = match_any(text, j, kWideClosers)) {
        j += w;
      } else {
        break;
      }
    }

    bool boundary = false;
    if (j == n) {
      boundary = true;
    } else if (is_space(text[j]) || cjk) {
      std::size_t next = skip_space(text, j);
      // Decimals ("3.14") never reach here: a break needs whitespace after the dot.
      bool lower_follows = next < n && text[next] >= 'a' && text[next] <= 'z';
      bool abbrev = single_dot && is_abbreviation(text, sent_start, dot);
      boundary = cjk || !(lower_follows || abbrev);
    }
    if (boundary) {
      push(j);
      i = sent_start = skip_space(text, j);
    } else {
      i = j;
    }
  }
  if (sent_start < n) push(n);
  return out;
}

std::vector<TextRange> split_paragraphs(std::string_view text) {
  std::vector<TextRange> out;
  const std::size_t n = text.size();
  std::size_t para_start = std::string_view::npos;
  std::size_t para_end = 0;
  std::size_t line_start = 0;
  while (line_start <= n) {
    std::size_t line_end = text.find('\n', line_start);
    if (line_end == std::string_view::npos) line_end = n;
    std::size_t first = line_start;
    while (first < line_end && is_space(text[first])) ++first;
    if (first == line_end) {
      if (para_start != std::string_view::npos) out.push_back({para_start, para_end});
      para_start = std::string_view::npos;
    } else {
      if (para_start == std::string_view::npos) para_start = first;
      para_end = trim_end(text, first, line_end);
    }
    if (line_end == n) break;
    line_start = line_end + 1;
  }
  if (para_start != std::string_view::npos) out.push_back({para_start, para_end});
  return out;
}

namespace {

struct Span {
  std::size_t start;
  std::size_t end;
  bool oversized;
};

// Largest j >= i such that est(text[units[i].start, units[j].end)) <= budget.
// units[i] alone must fit. Relies on the estimator being monotone under extension.
std::size_t furthest_fit(std::string_view text, const std::vector<TextRange>& units, std::size_t i,
                         std::size_t budget, const TokenEstimator& est) {
  auto fits = [&](std::size_t j) {
    return est.estimate(text.substr(units[i].start, units[j].end - units[i].start)) <= budget;
  };
  std::size_t lo = i;  // known to fit
  std::size_t step = 1;
  std::size_t hi = units.size();  // first index known not to fit (or size)
  while (lo + step < units.size()) {
    if (fits(lo + step)) {
      lo += step;
      step *= 2;
    } else {
      hi = lo + step;
      break;
    }
  }
  while (hi - lo > 1) {
    std::size_t mid = lo + (hi - lo) / 2;
    if (fits(mid)) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

std::vector<Span> pack(std::string_view text, const std::vector<TextRange>& units, const ChunkingConfig& cfg,
                       const TokenEstimator& est) {
  std::vector<Span> out;
  std::size_t i = 0;
  while (i < units.size()) {
    const auto& u = units[i];
    if (est.estimate(text.substr(u.start, u.end - u.start)) > cfg.max_chunk_size) {
      out.push_back({u.start, u.end, true});
      ++i;
      continue;
    }
    std::size_t j = furthest_fit(text, units, i, cfg.max_chunk_size, est);
    out.push_back({u.start, units[j].end, false});
    if (cfg.overlap == 0 || j + 1 >= units.size()) {
      i = j + 1;
      continue;
    }
    // Back up so the next window re-covers at most `overlap` tokens while still
    // taking in units[j + 1].
    std::size_t k = j + 1;
    while (k - 1 > i) {
      std::size_t cand = k - 1;
      auto tail = text.substr(units[cand].start, units[j].end - units[cand].start);
      auto with_next = text.substr(units[cand].start, units[j + 1].end - units[cand].start);
      if (est.estimate(tail) > cfg.overlap || est.estimate(with_next) > cfg.max_chunk_size) break;
      k = cand;
    }
    i = k;
  }
  return out;
}

std::vector<TextRange> words(std::string_view text) {
  std::vector<TextRange> out;
  std::size_t i = 0;
  while (i < text.size()) {
    i = skip_space(text, i);
    if (i >= text.size()) break;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    out.push_back({i, j});
    i = j;
  }
  return out;
}

}  // namespace

ChunkedDocument chunk_document(const Document& doc, const ChunkingConfig& cfg, const TokenEstimator& est) {
  cfg.validate();
  const std::string_view text = doc.text;
  if (skip_space(text, 0) == text.size()) {
    throw Error(ErrorCode::kEmptyDocument, "document '" + doc.id + "' has no content");
  }

  std::vector<TextRange> units;
  switch (cfg.strategy) {
    case ChunkStrategy::kSentence:
      units = split_sentences(text);
      break;
    case ChunkStrategy::kParagraph:
      for (const auto& p : split_paragraphs(text)) {
        if (est.estimate(text.substr(p.start, p.end - p.start)) <= cfg.max_chunk_size) {
          units.push_back(p);
          continue;
        }
        for (const auto& s : split_sentences(text.substr(p.start, p.end - p.start))) {
          units.push_back({p.start + s.start, p.start + s.end});
        }
      }
      break;
    case ChunkStrategy::kTokenWindow:
      units = words(text);
      break;
  }

  ChunkedDocument out;
  out.doc_id = doc.id;
  out.overlapping = cfg.overlap > 0;
  for (const auto& span : pack(text, units, cfg, est)) {
    Chunk c;
    c.doc_id = doc.id;
    c.index = out.chunks.size();
    c.start = span.start;
    c.end = span.end;
    c.text = std::string(text.substr(span.start, span.end - span.start));
    c.hash = content_hash(c.text);
    c.oversized = span.oversized;
    out.chunks.push_back(std::move(c));
  }
  for (std::size_t k = 1; k < out.chunks.size(); ++k) {
    if (out.chunks[k].start < out.chunks[k - 1].end) out.overlapping = true;
  }
  if (!out.overlapping) {
    std::size_t prev = 0;
    for (const auto& c : out.chunks) {
      out.separators.emplace_back(text.substr(prev, c.start - prev));
      prev = c.end;
    }
    out.separators.emplace_back(text.substr(prev));
  }
  return out;
}

std::string ChunkedDocument::reconstruct() const {
  std::string out;
  for (std::size_t k = 0; k < chunks.size(); ++k) {
    if (k < separators.size()) out += separators[k];
    out += chunks[k].text;
  }
  if (separators.size() > chunks.size()) out += separators.back();
  return out;
}

std::vector<Chunk> chunk(const Document& doc, const ChunkingConfig& cfg, const TokenEstimator& est) {
  return chunk_document(doc, cfg, est).chunks;
}

DedupResult dedup(const std::vector<Chunk>& chunks) {
  DedupResult out;
  for (const auto& c : chunks) {
    auto [it, inserted] = out.occurrences.try_emplace(c.hash);
    if (inserted) out.unique.push_back(c);
    it->second.push_back(Occurrence{c.doc_id, c.index, c.start, c.end});
  }
  return out;
}

std::string reassemble(const Document& doc, const OccurrenceMap& occ,
                       const std::map<Digest256, TaggedChunk>& tagged, const RenderOptions& options) {
  struct Placed {
    const Occurrence* occurrence;
    const TaggedChunk* tagged;
  };
  std::vector<Placed> placed;
  for (const auto& [hash, list] : occ) {
    for (const auto& o : list) {
      if (o.doc_id != doc.id) continue;
      auto it = tagged.find(hash);
      if (it == tagged.end()) throw Error(ErrorCode::kMissingTaggedChunk, hash.hex());
      placed.push_back({&o, &it->second});
    }
  }
  std::sort(placed.begin(), placed.end(),
            [](const Placed& a, const Placed& b) { return a.occurrence->start < b.occurrence->start; });

  const std::string_view text = doc.text;
  std::string out;
  out.reserve(text.size() + text.size() / 4);
  std::size_t pos = 0;
  for (const auto& p : placed) {
    const Occurrence& o = *p.occurrence;
    if (o.start < pos || o.end > text.size() || o.start >= o.end) {
      throw Error(ErrorCode::kInvalidArgument, "occurrences of '" + doc.id + "' overlap or exceed the text");
    }
    out.append(text.substr(pos, o.start - pos));
    out += render_tagged_chunk(text.substr(o.start, o.end - o.start), *p.tagged, options.level,
                               options.policy);
    pos = o.end;
  }
  out.append(text.substr(pos));
  return out;
}

}  // namespace tagforge
