#include "tagforge/cache.hpp"

#include <algorithm>
#include <system_error>
#include <vector>

#include "tagforge/error.hpp"
#include "tagforge/taggers.hpp"

namespace tagforge {

namespace fs = std::filesystem;

CacheKey CacheKey::make(const TaggerConfig& config, const Digest256& chunk_hash) {
  return CacheKey{std::string(to_string(config.kind)), config.version, config.config_hash(), chunk_hash};
}

Json CacheKey::to_json() const {
  return Json{{"hash_algorithm", kHashAlgorithm},
              {"kind", kind},
              {"version", version},
              {"config_hash", config_hash},
              {"chunk_hash", chunk_hash.hex()}};
}

Digest256 CacheKey::digest() const { return sha256(canonical_json(to_json())); }

TagCache::TagCache(fs::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create cache directory '" + dir_.string() + "': " + ec.message());
}

fs::path TagCache::entry_path(const CacheKey& key) const {
  auto hex = key.digest().hex();
  return dir_ / hex.substr(0, 2) / hex.substr(2, 2) / (hex + ".json");
}

namespace {

bool is_entry_file(const fs::directory_entry& e) {
  return e.is_regular_file() && e.path().extension() == ".json" && e.path().stem().string().size() == 64;
}

// Parses and verifies an entry; nullopt when it is torn or tampered with.
std::optional<TaggedChunk> decode_entry(const std::string& raw, const CacheKey& key) {
  Json j = Json::parse(raw, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  try {
    const auto& payload = j.at("payload");
    if (j.at("checksum").get<std::string>() != sha256(canonical_json(payload)).hex()) return std::nullopt;
    if (j.at("key") != key.to_json()) return std::nullopt;
    return payload.get<TaggedChunk>();
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace

std::optional<TaggedChunk> TagCache::get(const CacheKey& key) {
  auto path = entry_path(key);
  std::error_code ec;
  if (!fs::exists(path, ec)) {
    ++misses_;
    return std::nullopt;
  }
  std::string raw;
  try {
    raw = read_file(path);
  } catch (const Error&) {
    ++misses_;
    return std::nullopt;
  }
  auto value = decode_entry(raw, key);
  if (!value) {
    ++corrupt_;
    ++misses_;
    return std::nullopt;
  }
  ++hits_;
  return value;
}

void TagCache::put(const CacheKey& key, const TaggedChunk& value) {
  if (value.provenance.tagger_id != key.kind + "@" + key.version || value.provenance.config_hash != key.config_hash) {
    throw Error(ErrorCode::kInvalidArgument, "cache value provenance does not match its key");
  }
  if (value.chunk.hash != key.chunk_hash) {
    throw Error(ErrorCode::kInvalidArgument, "cache value chunk hash does not match its key");
  }
  auto path = entry_path(key);
  std::error_code ec;
  if (fs::exists(path, ec)) {
    try {
      if (decode_entry(read_file(path), key)) return;
    } catch (const Error&) {
    }
  }
  fs::create_directories(path.parent_path(), ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create '" + path.parent_path().string() + "': " + ec.message());
  Json payload = value;
  Json entry{{"key", key.to_json()}, {"checksum", sha256(canonical_json(payload)).hex()}, {"payload", payload}};
  atomic_write_file(path, canonical_json(entry) + "\n");
  ++writes_;
}

CacheStats TagCache::stats() const {
  CacheStats s;
  std::error_code ec;
  if (fs::is_directory(dir_, ec)) {
    for (const auto& e : fs::recursive_directory_iterator(dir_, ec)) {
      if (!is_entry_file(e)) continue;
      ++s.entries;
      s.bytes += e.file_size(ec);
    }
  }
  s.hits = hits_.load();
  s.misses = misses_.load();
  s.corrupt = corrupt_.load();
  s.writes = writes_.load();
  return s;
}

GcResult TagCache::gc(std::uint64_t max_bytes) {
  struct Item {
    fs::file_time_type mtime;
    fs::path path;
    std::uint64_t size;
  };
  std::vector<Item> items;
  std::uint64_t total = 0;
  std::error_code ec;
  for (const auto& e : fs::recursive_directory_iterator(dir_, ec)) {
    if (!is_entry_file(e)) continue;
    Item it{e.last_write_time(ec), e.path(), e.file_size(ec)};
    total += it.size;
    items.push_back(std::move(it));
  }
  std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
    return a.mtime != b.mtime ? a.mtime < b.mtime : a.path < b.path;
  });
  GcResult out;
  for (const auto& it : items) {
    if (total <= max_bytes) break;
    if (fs::remove(it.path, ec)) {
      total -= it.size;
      ++out.removed;
      out.freed_bytes += it.size;
    }
  }
  return out;
}

}  // namespace tagforge
