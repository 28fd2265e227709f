#include "tagforge/annotator.hpp"

#include <algorithm>

#include "tagforge/error.hpp"

namespace tagforge {

NestingOrder parse_nesting_order(std::string_view name) {
  if (name == "longer_span_outer") return NestingOrder::kLongerSpanOuter;
  if (name == "category_alphabetical") return NestingOrder::kCategoryAlphabetical;
  throw Error(ErrorCode::kInvalidArgument, "unknown nesting order '" + std::string(name) + "'");
}

CollisionPolicy parse_collision_policy(std::string_view name) {
  if (name == "drop_inner") return CollisionPolicy::kDropInner;
  if (name == "truncate_inner") return CollisionPolicy::kTruncateInner;
  if (name == "reject") return CollisionPolicy::kReject;
  throw Error(ErrorCode::kInvalidArgument, "unknown collision policy '" + std::string(name) + "'");
}

MarkupLevel parse_markup_level(std::string_view name) {
  if (name == "chunk") return MarkupLevel::kChunk;
  if (name == "entity") return MarkupLevel::kEntity;
  if (name == "both") return MarkupLevel::kBoth;
  throw Error(ErrorCode::kInvalidArgument, "unknown markup level '" + std::string(name) + "'");
}

std::string_view to_string(NestingOrder v) {
  return v == NestingOrder::kLongerSpanOuter ? "longer_span_outer" : "category_alphabetical";
}

std::string_view to_string(CollisionPolicy v) {
  switch (v) {
    case CollisionPolicy::kDropInner: return "drop_inner";
    case CollisionPolicy::kTruncateInner: return "truncate_inner";
    case CollisionPolicy::kReject: return "reject";
  }
  return "drop_inner";
}

std::string_view to_string(MarkupLevel v) {
  switch (v) {
    case MarkupLevel::kChunk: return "chunk";
    case MarkupLevel::kEntity: return "entity";
    case MarkupLevel::kBoth: return "both";
  }
  return "both";
}

std::string open_tag(std::string_view name) {
  std::string out;
  out.reserve(name.size() + 2);
  out += '<';
  out += name;
  out += '>';
  return out;
}

std::string close_tag(std::string_view name) {
  std::string out;
  out.reserve(name.size() + 3);
  out += "</";
  out += name;
  out += '>';
  return out;
}

namespace {

void require_name(std::string_view name) {
  if (!is_valid_category_name(name)) {
    throw Error(ErrorCode::kInvalidCategoryName, "'" + std::string(name) + "'");
  }
}

struct TagToken {
  std::string_view name;
  bool closing = false;
  std::size_t begin = 0;
  std::size_t end = 0;
};

// Parses a tag token starting at text[pos] == '<'. Only well-formed
// "<name>" / "</name>" shapes are recognised.
std::optional<TagToken> parse_token(std::string_view text, std::size_t pos) {
  if (pos >= text.size() || text[pos] != '<') return std::nullopt;
  std::size_t j = pos + 1;
  bool closing = false;
  if (j < text.size() && text[j] == '/') {
    closing = true;
    ++j;
  }
  std::size_t name_begin = j;
  while (j < text.size()) {
    char c = text[j];
    bool ok = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
    if (!ok) break;
    ++j;
  }
  if (j == name_begin || j >= text.size() || text[j] != '>') return std::nullopt;
  return TagToken{text.substr(name_begin, j - name_begin), closing, pos, j + 1};
}

template <typename Fn>
void scan_known_tokens(std::string_view text, const std::set<std::string>& categories, Fn&& on_token,
                       std::string* passthrough) {
  std::size_t i = 0;
  std::size_t copied = 0;
  while (true) {
    std::size_t lt = text.find('<', i);
    if (lt == std::string_view::npos) break;
    auto tok = parse_token(text, lt);
    if (tok && categories.count(std::string(tok->name)) != 0) {
      if (passthrough) passthrough->append(text.substr(copied, lt - copied));
      on_token(*tok, passthrough ? passthrough->size() : 0);
      i = copied = tok->end;
    } else {
      i = lt + 1;
    }
  }
  if (passthrough) passthrough->append(text.substr(copied));
}

}  // namespace

std::string render_chunk_markup(std::string_view text, const std::set<std::string>& labels,
                                const MarkupPolicy& policy) {
  if (labels.empty()) return std::string(text);
  std::vector<std::string> ordered;
  for (const auto& name : policy.chunk_label_order) {
    if (labels.count(name) && std::find(ordered.begin(), ordered.end(), name) == ordered.end()) {
      ordered.push_back(name);
    }
  }
  for (const auto& name : labels) {
    if (std::find(ordered.begin(), ordered.end(), name) == ordered.end()) ordered.push_back(name);
  }
  std::string out;
  for (const auto& name : ordered) {
    require_name(name);
    out += open_tag(name);
  }
  out += text;
  for (auto it = ordered.rbegin(); it != ordered.rend(); ++it) out += close_tag(*it);
  return out;
}

std::vector<TagSpan> resolve_spans(std::string_view text, std::vector<TagSpan> spans,
                                   const MarkupPolicy& policy) {
  for (const auto& s : spans) {
    require_name(s.category);
    if (s.start >= s.end || s.end > text.size() || !is_char_boundary(text, s.start) ||
        !is_char_boundary(text, s.end)) {
      throw Error(ErrorCode::kInvalidSpan, s.category + "(" + std::to_string(s.start) + "," +
                                               std::to_string(s.end) + ")");
    }
  }
  const bool alphabetical = policy.nesting_order == NestingOrder::kCategoryAlphabetical;
  auto before = [alphabetical](const TagSpan& a, const TagSpan& b) {
    if (a.start != b.start) return a.start < b.start;
    if (a.end != b.end) return a.end > b.end;
    return alphabetical && a.category < b.category;
  };
  std::stable_sort(spans.begin(), spans.end(), before);
  std::vector<TagSpan> unique;
  for (auto& s : spans) {
    if (std::find(unique.begin(), unique.end(), s) == unique.end()) unique.push_back(std::move(s));
  }

  std::vector<TagSpan> kept;
  std::vector<std::size_t> stack;  // indices into kept
  for (auto& s : unique) {
    while (!stack.empty() && kept[stack.back()].end <= s.start) stack.pop_back();
    if (!stack.empty() && kept[stack.back()].end < s.end) {
      const TagSpan& outer = kept[stack.back()];
      switch (policy.collision_policy) {
        case CollisionPolicy::kDropInner:
          continue;
        case CollisionPolicy::kTruncateInner:
          s.end = outer.end;
          if (std::find(kept.begin(), kept.end(), s) != kept.end()) continue;
          break;
        case CollisionPolicy::kReject:
          throw Error(ErrorCode::kOverlapUnresolvable,
                      s.category + "(" + std::to_string(s.start) + "," + std::to_string(s.end) +
                          ") partially overlaps " + outer.category + "(" +
                          std::to_string(outer.start) + "," + std::to_string(outer.end) + ")");
      }
    }
    kept.push_back(std::move(s));
    stack.push_back(kept.size() - 1);
  }
  std::stable_sort(kept.begin(), kept.end(), before);
  return kept;
}

std::string render_span_markup(std::string_view text, const std::vector<TagSpan>& spans,
                               const MarkupPolicy& policy) {
  auto resolved = resolve_spans(text, spans, policy);
  std::string out;
  out.reserve(text.size() + resolved.size() * 16);
  std::size_t pos = 0;
  std::vector<const TagSpan*> open;
  auto close_top = [&] {
    const TagSpan* top = open.back();
    out.append(text.substr(pos, top->end - pos));
    pos = top->end;
    out += close_tag(top->category);
    open.pop_back();
  };
  for (const auto& s : resolved) {
    while (!open.empty() && open.back()->end <= s.start) close_top();
    out.append(text.substr(pos, s.start - pos));
    pos = s.start;
    out += open_tag(s.category);
    open.push_back(&s);
  }
  while (!open.empty()) close_top();
  out.append(text.substr(pos));
  return out;
}

std::string render_tagged_chunk(std::string_view text, const TaggedChunk& tagged, MarkupLevel level,
                                const MarkupPolicy& policy) {
  // Spans are offsets into the representative chunk; a duplicate whose raw
  // bytes differ only receives chunk-level labels.
  const bool spans_apply = text == tagged.chunk.text;
  switch (level) {
    case MarkupLevel::kEntity:
      return spans_apply ? render_span_markup(text, tagged.spans, policy) : std::string(text);
    case MarkupLevel::kChunk: {
      std::set<std::string> labels = tagged.chunk_labels;
      for (const auto& s : tagged.spans) labels.insert(s.category);
      return render_chunk_markup(text, labels, policy);
    }
    case MarkupLevel::kBoth: {
      if (spans_apply) return render_chunk_markup(render_span_markup(text, tagged.spans, policy), tagged.chunk_labels, policy);
      std::set<std::string> labels = tagged.chunk_labels;
      for (const auto& s : tagged.spans) labels.insert(s.category);
      return render_chunk_markup(text, labels, policy);
    }
  }
  return std::string(text);
}

std::string strip_tags(std::string_view marked, const std::set<std::string>& categories) {
  std::string out;
  out.reserve(marked.size());
  scan_known_tokens(marked, categories, [](const TagToken&, std::size_t) {}, &out);
  return out;
}

bool tags_balanced(std::string_view marked, const std::set<std::string>& categories) {
  std::vector<std::string_view> stack;
  bool ok = true;
  scan_known_tokens(
      marked, categories,
      [&](const TagToken& tok, std::size_t) {
        if (!tok.closing) {
          stack.push_back(tok.name);
        } else if (stack.empty() || stack.back() != tok.name) {
          ok = false;
        } else {
          stack.pop_back();
        }
      },
      nullptr);
  return ok && stack.empty();
}

FidelityReport verify_fidelity(std::string_view original, std::string_view marked,
                               const std::set<std::string>& categories) {
  FidelityReport report;
  std::string stripped = strip_tags(marked, categories);
  auto [a, b] = std::mismatch(original.begin(), original.end(), stripped.begin(), stripped.end());
  if (a != original.end() || b != stripped.end()) {
    report.first_divergence = static_cast<std::size_t>(a - original.begin());
  }
  report.balanced = tags_balanced(marked, categories);
  report.ok = !report.first_divergence && report.balanced;
  return report;
}

std::vector<TagSpan> lift_spans(std::string_view marked, const std::set<std::string>& categories) {
  std::vector<TagSpan> spans;
  std::vector<std::pair<std::string_view, std::size_t>> stack;
  std::string stripped;
  scan_known_tokens(
      marked, categories,
      [&](const TagToken& tok, std::size_t out_pos) {
        if (!tok.closing) {
          stack.emplace_back(tok.name, out_pos);
          return;
        }
        if (stack.empty() || stack.back().first != tok.name) return;
        auto [name, start] = stack.back();
        stack.pop_back();
        if (out_pos > start) spans.push_back(TagSpan{std::string(name), start, out_pos});
      },
      &stripped);
  sort_spans(spans);
  return spans;
}

bool contains_tag_token(std::string_view text, const std::set<std::string>& categories) {
  bool found = false;
  scan_known_tokens(text, categories, [&](const TagToken&, std::size_t) { found = true; }, nullptr);
  return found;
}

}  // namespace tagforge
