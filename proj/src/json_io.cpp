#include "tagforge/json_io.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <atomic>
#include <cstdint>
#include <fstream>
#include <thread>
#include <set>
#include <sstream>

#include "tagforge/error.hpp"

namespace tagforge {

std::string canonical_json(const Json& j) { return j.dump(); }

void to_json(Json& j, const Digest256& d) { j = d.hex(); }
void from_json(const Json& j, Digest256& d) { d = Digest256::from_hex(j.get<std::string>()); }

void to_json(Json& j, const Document& d) {
  j = Json{{"id", d.id}, {"text", d.text}, {"meta", d.meta}};
}

void from_json(const Json& j, Document& d) {
  d.id = j.at("id").get<std::string>();
  d.text = j.at("text").get<std::string>();
  d.meta.clear();
  if (auto it = j.find("meta"); it != j.end() && it->is_object()) {
    for (const auto& [k, v] : it->items()) {
      d.meta[k] = v.is_string() ? v.get<std::string>() : v.dump();
    }
  }
}

void to_json(Json& j, const Chunk& c) {
  j = Json{{"doc_id", c.doc_id}, {"index", c.index}, {"start", c.start},
           {"end", c.end},       {"text", c.text},   {"hash", c.hash}};
  if (c.oversized) j["oversized"] = true;
}

void from_json(const Json& j, Chunk& c) {
  c.doc_id = j.at("doc_id").get<std::string>();
  c.index = j.at("index").get<std::size_t>();
  c.start = j.at("start").get<std::size_t>();
  c.end = j.at("end").get<std::size_t>();
  c.text = j.at("text").get<std::string>();
  c.hash = j.contains("hash") ? j.at("hash").get<Digest256>() : content_hash(c.text);
  c.oversized = j.value("oversized", false);
}

void to_json(Json& j, const TagCategory& c) {
  j = Json{{"name", c.name}, {"definition", c.definition}, {"examples", c.examples}};
}

void from_json(const Json& j, TagCategory& c) {
  c.name = j.at("name").get<std::string>();
  c.definition = j.value("definition", std::string{});
  c.examples = j.value("examples", std::vector<std::string>{});
}

void to_json(Json& j, const TagSpan& s) {
  j = Json{{"category", s.category}, {"start", s.start}, {"end", s.end}};
}

void from_json(const Json& j, TagSpan& s) {
  s.category = j.at("category").get<std::string>();
  s.start = j.at("start").get<std::size_t>();
  s.end = j.at("end").get<std::size_t>();
}

void to_json(Json& j, const Provenance& p) {
  j = Json{{"tagger_id", p.tagger_id}, {"config_hash", p.config_hash}, {"sources", p.sources}};
}

void from_json(const Json& j, Provenance& p) {
  p.tagger_id = j.at("tagger_id").get<std::string>();
  p.config_hash = j.at("config_hash").get<std::string>();
  p.sources = j.value("sources", std::vector<std::string>{});
}

void to_json(Json& j, const TaggedChunk& t) {
  j = Json{{"chunk", t.chunk},
           {"chunk_labels", t.chunk_labels},
           {"spans", t.spans},
           {"provenance", t.provenance},
           {"fidelity_failed", t.fidelity_failed}};
}

void from_json(const Json& j, TaggedChunk& t) {
  t.chunk = j.at("chunk").get<Chunk>();
  t.chunk_labels = j.value("chunk_labels", std::set<std::string>{});
  t.spans = j.value("spans", std::vector<TagSpan>{});
  t.provenance = j.at("provenance").get<Provenance>();
  t.fidelity_failed = j.value("fidelity_failed", false);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write '" + path.string() + "'");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error(ErrorCode::kIo, "short write to '" + path.string() + "'");
}

void atomic_write_file(const std::filesystem::path& path, std::string_view content) {
  static std::atomic<std::uint64_t> counter{0};
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid()) + "." +
         std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id())) + "." +
         std::to_string(counter.fetch_add(1));
  write_file(tmp, content);
  if (int fd = ::open(tmp.c_str(), O_RDONLY); fd >= 0) {
    ::fsync(fd);
    ::close(fd);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorCode::kIo, "cannot rename into '" + path.string() + "'");
  }
}

void for_each_jsonl(const std::filesystem::path& path, const std::function<void(const Json&)>& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "'");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw Error(ErrorCode::kInvalidArgument,
                  path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    try {
      fn(j);
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::kInvalidArgument,
                  path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

std::vector<Document> load_corpus(const std::filesystem::path& path) {
  std::vector<Document> docs;
  std::set<std::string> ids;
  for_each_jsonl(path, [&](const Json& j) {
    auto doc = j.get<Document>();
    if (doc.id.empty()) throw Error(ErrorCode::kInvalidArgument, "document id must be nonempty");
    if (!ids.insert(doc.id).second) {
      throw Error(ErrorCode::kInvalidArgument, "duplicate document id '" + doc.id + "'");
    }
    if (!is_valid_utf8(doc.text)) {
      throw Error(ErrorCode::kInvalidArgument, "document '" + doc.id + "' is not valid UTF-8");
    }
    docs.push_back(std::move(doc));
  });
  return docs;
}

CategorySet load_categories(const std::filesystem::path& path) {
  Json j;
  try {
    j = Json::parse(read_file(path));
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::kInvalidArgument, path.string() + ": " + e.what());
  }
  return CategorySet(j.get<std::vector<TagCategory>>());
}

}  // namespace tagforge
