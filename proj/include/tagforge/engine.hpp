#pragma once

// Dedup-aware, cache-backed tagging and the chunk -> tag -> reassemble pipeline.

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "tagforge/cache.hpp"
#include "tagforge/chunker.hpp"
#include "tagforge/core.hpp"
#include "tagforge/taggers.hpp"

namespace tagforge {

struct EngineCounters {
  std::size_t chunks = 0;
  std::size_t unique_chunks = 0;
  std::size_t tagger_calls = 0;  // chunks handed to the tagger
  std::size_t cache_hits = 0;
  std::size_t cache_misses = 0;
  std::size_t parse_failures = 0;
  std::size_t fidelity_failures = 0;
  std::size_t dropped_spans = 0;

  Json to_json() const;
};

class TaggingEngine {
 public:
  /// `cache` may be null.
  TaggingEngine(Tagger& tagger, TagCache* cache = nullptr);

  /// Tags each distinct content hash once, consulting the cache first.
  std::map<Digest256, TaggedChunk> tag_unique(const std::vector<Chunk>& chunks);

  /// One result per input chunk, in input order. Duplicates share the
  /// representative's labels and spans but keep their own chunk fields.
  std::vector<TaggedChunk> tag(const std::vector<Chunk>& chunks);

  EngineCounters counters() const;
  Tagger& tagger() { return tagger_; }

 private:
  Tagger& tagger_;
  TagCache* cache_;
  EngineCounters counters_;
};

enum class DedupScope { kGlobal, kPerDocument };

DedupScope parse_dedup_scope(std::string_view name);
std::string_view to_string(DedupScope scope);

struct PipelineConfig {
  ChunkingConfig chunking;
  TokenEstimator estimator;
  DedupScope dedup_scope = DedupScope::kGlobal;
  RenderOptions render;
};

struct PipelineResult {
  std::vector<Document> rendered;  // same ids and order as the input
  std::vector<ChunkedDocument> chunked;
  std::map<Digest256, TaggedChunk> tagged;
  std::size_t unique_chunks = 0;
};

/// Overlapping token windows cannot be reassembled and are rejected.
PipelineResult run_pipeline(const std::vector<Document>& docs, const PipelineConfig& config, TaggingEngine& engine);

}  // namespace tagforge
