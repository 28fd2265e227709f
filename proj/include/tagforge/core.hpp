#pragma once

// Shared domain types, text normalization and content hashing.

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace tagforge {

/// Name of the content hash used for every digest in caches and artifacts.
inline constexpr std::string_view kHashAlgorithm = "sha256";

struct Digest256 {
  std::array<std::uint8_t, 32> bytes{};

  std::string hex() const;
  static Digest256 from_hex(std::string_view hex);

  auto operator<=>(const Digest256&) const = default;
};

Digest256 sha256(std::string_view bytes);

/// NFC, CRLF/CR folded to LF, outer whitespace trimmed. Inner whitespace is kept.
/// Used for dedup equality and hashing only; markup always works on the original bytes.
std::string normalize(std::string_view text);

/// sha256(normalize(text)).
Digest256 content_hash(std::string_view text);

// UTF-8 helpers. Offsets everywhere in the library are byte offsets that must
// sit on code point boundaries.
bool is_valid_utf8(std::string_view text);
bool is_char_boundary(std::string_view text, std::size_t offset);
std::size_t codepoint_count(std::string_view text);

struct Document {
  std::string id;
  std::string text;
  std::map<std::string, std::string> meta;

  bool operator==(const Document&) const = default;
};

struct Chunk {
  std::string doc_id;
  std::size_t index = 0;
  std::size_t start = 0;
  std::size_t end = 0;
  std::string text;
  Digest256 hash;
  // Set when a single sentence (or word, for token windows) exceeded the budget.
  bool oversized = false;

  bool operator==(const Chunk&) const = default;
};

/// Element names must be usable verbatim inside "<name>" and "</name>".
bool is_valid_category_name(std::string_view name);

struct TagCategory {
  std::string name;
  std::string definition;
  std::vector<std::string> examples;

  bool operator==(const TagCategory&) const = default;
};

/// An ordered category set with unique, well-formed names.
class CategorySet {
 public:
  CategorySet() = default;
  explicit CategorySet(std::vector<TagCategory> categories);

  const std::vector<TagCategory>& categories() const { return categories_; }
  std::set<std::string> names() const;
  bool contains(std::string_view name) const;
  bool empty() const { return categories_.empty(); }
  std::size_t size() const { return categories_.size(); }

 private:
  std::vector<TagCategory> categories_;
};

struct TagSpan {
  std::string category;
  std::size_t start = 0;
  std::size_t end = 0;

  auto operator<=>(const TagSpan&) const = default;
};

struct Provenance {
  std::string tagger_id;
  std::string config_hash;
  // Sub-taggers that contributed, for merged results.
  std::vector<std::string> sources;

  bool operator==(const Provenance&) const = default;
};

struct TaggedChunk {
  Chunk chunk;
  std::set<std::string> chunk_labels;
  std::vector<TagSpan> spans;
  Provenance provenance;
  bool fidelity_failed = false;

  bool operator==(const TaggedChunk&) const = default;
};

/// Sorts by (start asc, end desc, category) and drops exact duplicates.
void sort_spans(std::vector<TagSpan>& spans);

/// True when every span is in range, on character boundaries, and any two are
/// disjoint or nested.
bool spans_well_formed(std::string_view text, const std::vector<TagSpan>& spans);

}  // namespace tagforge
