#pragma once

// JSON (de)serialization for the domain types and JSONL file helpers.
// Canonical JSON is nlohmann's compact dump: object keys sorted, no whitespace.

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tagforge/core.hpp"

namespace tagforge {

using Json = nlohmann::json;

std::string canonical_json(const Json& j);

void to_json(Json& j, const Digest256& d);
void from_json(const Json& j, Digest256& d);
void to_json(Json& j, const Document& d);
void from_json(const Json& j, Document& d);
void to_json(Json& j, const Chunk& c);
void from_json(const Json& j, Chunk& c);
void to_json(Json& j, const TagCategory& c);
void from_json(const Json& j, TagCategory& c);
void to_json(Json& j, const TagSpan& s);
void from_json(const Json& j, TagSpan& s);
void to_json(Json& j, const Provenance& p);
void from_json(const Json& j, Provenance& p);
void to_json(Json& j, const TaggedChunk& t);
void from_json(const Json& j, TaggedChunk& t);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);
/// Writes to a unique temp file in the same directory, then renames over `path`.
void atomic_write_file(const std::filesystem::path& path, std::string_view content);

/// Calls fn for every non-blank line; parse failures name the file and line.
void for_each_jsonl(const std::filesystem::path& path, const std::function<void(const Json&)>& fn);

std::vector<Document> load_corpus(const std::filesystem::path& path);
CategorySet load_categories(const std::filesystem::path& path);

}  // namespace tagforge
