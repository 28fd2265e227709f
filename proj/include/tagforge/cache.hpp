#pragma once

// Content-addressed store of tagging results keyed by tagger identity and
// chunk content. One checksummed JSON file per entry under <dir>/ab/cd/.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "tagforge/core.hpp"
#include "tagforge/json_io.hpp"

namespace tagforge {

struct TaggerConfig;

struct CacheKey {
  std::string kind;
  std::string version;
  std::string config_hash;
  Digest256 chunk_hash;

  static CacheKey make(const TaggerConfig& config, const Digest256& chunk_hash);

  Json to_json() const;
  Digest256 digest() const;  // sha256 of the canonical JSON form
};

struct CacheStats {
  std::size_t entries = 0;
  std::uint64_t bytes = 0;
  std::size_t hits = 0;
  std::size_t misses = 0;
  std::size_t corrupt = 0;  // entries that failed to parse or verify, counted as misses
  std::size_t writes = 0;
};

struct GcResult {
  std::size_t removed = 0;
  std::uint64_t freed_bytes = 0;
};

/// Safe for concurrent use from threads and processes: writers go through
/// write-temp-then-rename and readers verify a per-entry checksum.
class TagCache {
 public:
  explicit TagCache(std::filesystem::path dir);

  std::optional<TaggedChunk> get(const CacheKey& key);
  /// Throws InvalidArgument when the value's provenance or chunk hash does not
  /// match the key, IOFailure when the entry cannot be written.
  void put(const CacheKey& key, const TaggedChunk& value);

  /// Counts files on disk plus this instance's hit/miss counters.
  CacheStats stats() const;
  /// Removes oldest entries (by mtime) until the store is at most max_bytes.
  GcResult gc(std::uint64_t max_bytes);

  std::filesystem::path entry_path(const CacheKey& key) const;
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  std::atomic<std::size_t> hits_{0};
  std::atomic<std::size_t> misses_{0};
  std::atomic<std::size_t> corrupt_{0};
  std::atomic<std::size_t> writes_{0};
};

}  // namespace tagforge
