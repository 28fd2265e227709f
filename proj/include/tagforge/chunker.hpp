#pragma once

// Document segmentation, dedup and reassembly of tagged chunks.

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "tagforge/annotator.hpp"
#include "tagforge/core.hpp"
#include "tagforge/tokens.hpp"

namespace tagforge {

// Open set: semantic chunking would slot in here.
enum class ChunkStrategy { kSentence, kParagraph, kTokenWindow };

ChunkStrategy parse_chunk_strategy(std::string_view name);
std::string_view to_string(ChunkStrategy s);

struct ChunkingConfig {
  ChunkStrategy strategy = ChunkStrategy::kSentence;
  std::size_t max_chunk_size = 250;  // estimated tokens
  std::size_t overlap = 0;           // token_window only

  void validate() const;
};

struct TextRange {
  std::size_t start = 0;
  std::size_t end = 0;

  bool operator==(const TextRange&) const = default;
};

/// Rule-based sentence boundaries: terminal punctuation (optionally followed
/// by closing quotes or brackets) then whitespace, with abbreviation,
/// decimal and lowercase-continuation guards. Blank lines always break.
/// Ranges exclude surrounding whitespace.
std::vector<TextRange> split_sentences(std::string_view text);

/// Paragraphs separated by blank lines, trimmed.
std::vector<TextRange> split_paragraphs(std::string_view text);

struct ChunkedDocument {
  std::string doc_id;
  std::vector<Chunk> chunks;
  // separators[i] is the text before chunks[i]; separators.back() trails the
  // last chunk. Empty for overlapping token windows.
  std::vector<std::string> separators;
  bool overlapping = false;

  /// Interleaves separators and chunk texts. Equals the source text whenever
  /// the chunks do not overlap.
  std::string reconstruct() const;
};

/// Throws EmptyDocument for empty or whitespace-only text.
ChunkedDocument chunk_document(const Document& doc, const ChunkingConfig& cfg,
                               const TokenEstimator& estimator = {});

std::vector<Chunk> chunk(const Document& doc, const ChunkingConfig& cfg,
                         const TokenEstimator& estimator = {});

struct Occurrence {
  std::string doc_id;
  std::size_t index = 0;
  std::size_t start = 0;
  std::size_t end = 0;

  bool operator==(const Occurrence&) const = default;
};

using OccurrenceMap = std::map<Digest256, std::vector<Occurrence>>;

struct DedupResult {
  std::vector<Chunk> unique;
  OccurrenceMap occurrences;
};

/// Exact dedup on normalized text, first occurrence wins.
DedupResult dedup(const std::vector<Chunk>& chunks);

struct RenderOptions {
  MarkupLevel level = MarkupLevel::kBoth;
  MarkupPolicy policy;
};

/// Replaces every occurrence of the document's chunks with its rendered tagged
/// form; separators between chunks are copied verbatim. Throws
/// MissingTaggedChunk when an occurrence has no tagged entry.
std::string reassemble(const Document& doc, const OccurrenceMap& occ,
                       const std::map<Digest256, TaggedChunk>& tagged, const RenderOptions& options = {});

}  // namespace tagforge
