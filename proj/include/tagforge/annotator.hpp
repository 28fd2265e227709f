#pragma once

// Inline XML-style markup: rendering, stripping and fidelity checks.
//
// Document content is never escaped. Tags are textual markers, and fidelity
// means strip_tags(render(t)) == t byte for byte.

#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "tagforge/core.hpp"

namespace tagforge {

enum class NestingOrder {
  kLongerSpanOuter,      // exact ties keep tagger emission order
  kCategoryAlphabetical  // exact ties ordered by category name, outermost first
};

enum class CollisionPolicy {
  kDropInner,      // discard the later-starting span of a partial overlap
  kTruncateInner,  // clip the later-starting span to the enclosing span's end
  kReject          // raise OverlapUnresolvable
};

struct MarkupPolicy {
  NestingOrder nesting_order = NestingOrder::kLongerSpanOuter;
  // Outermost first. Labels not listed follow in alphabetical order.
  std::vector<std::string> chunk_label_order;
  CollisionPolicy collision_policy = CollisionPolicy::kDropInner;
};

enum class MarkupLevel { kChunk, kEntity, kBoth };

NestingOrder parse_nesting_order(std::string_view name);
CollisionPolicy parse_collision_policy(std::string_view name);
MarkupLevel parse_markup_level(std::string_view name);
std::string_view to_string(NestingOrder v);
std::string_view to_string(CollisionPolicy v);
std::string_view to_string(MarkupLevel v);

std::string open_tag(std::string_view name);
std::string close_tag(std::string_view name);

std::string render_chunk_markup(std::string_view text, const std::set<std::string>& labels,
                                const MarkupPolicy& policy = {});

/// Applies the policy's collision handling and nesting order. The result is
/// sorted by (start asc, end desc) and is disjoint-or-nested.
std::vector<TagSpan> resolve_spans(std::string_view text, std::vector<TagSpan> spans,
                                   const MarkupPolicy& policy = {});

std::string render_span_markup(std::string_view text, const std::vector<TagSpan>& spans,
                               const MarkupPolicy& policy = {});

/// Chunk-level markup wraps chunk_labels (plus span categories when the level
/// is kChunk); entity-level markup renders spans.
std::string render_tagged_chunk(std::string_view text, const TaggedChunk& tagged, MarkupLevel level,
                                const MarkupPolicy& policy = {});

std::string strip_tags(std::string_view marked, const std::set<std::string>& categories);

struct FidelityReport {
  bool ok = false;
  bool balanced = false;
  std::optional<std::size_t> first_divergence;
};

FidelityReport verify_fidelity(std::string_view original, std::string_view marked,
                               const std::set<std::string>& categories);

/// Stack check over the known tag tokens only.
bool tags_balanced(std::string_view marked, const std::set<std::string>& categories);

/// Lifts inline tags into spans over the stripped text. Requires balanced input;
/// empty elements are dropped.
std::vector<TagSpan> lift_spans(std::string_view marked, const std::set<std::string>& categories);

/// True if any "<name>" or "</name>" token for a known category occurs.
bool contains_tag_token(std::string_view text, const std::set<std::string>& categories);

}  // namespace tagforge
