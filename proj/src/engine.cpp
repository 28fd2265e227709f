#include "tagforge/engine.hpp"

#include "tagforge/error.hpp"

namespace tagforge {

Json EngineCounters::to_json() const {
  return Json{{"chunks", chunks},
              {"unique_chunks", unique_chunks},
              {"tagger_calls", tagger_calls},
              {"cache_hits", cache_hits},
              {"cache_misses", cache_misses},
              {"parse_failures", parse_failures},
              {"fidelity_failures", fidelity_failures},
              {"dropped_spans", dropped_spans}};
}

TaggingEngine::TaggingEngine(Tagger& tagger, TagCache* cache) : tagger_(tagger), cache_(cache) {}

std::map<Digest256, TaggedChunk> TaggingEngine::tag_unique(const std::vector<Chunk>& chunks) {
  auto unique = dedup(chunks).unique;
  counters_.chunks += chunks.size();
  counters_.unique_chunks += unique.size();

  std::map<Digest256, TaggedChunk> out;
  std::vector<Chunk> pending;
  for (const auto& c : unique) {
    if (cache_) {
      auto hit = cache_->get(CacheKey::make(tagger_.config(), c.hash));
      // Spans are byte offsets, so an entry recorded for differently encoded
      // but equivalent text is re-tagged instead of reused.
      if (hit && hit->chunk.text == c.text) {
        ++counters_.cache_hits;
        hit->chunk = c;
        out.emplace(c.hash, std::move(*hit));
        continue;
      }
      ++counters_.cache_misses;
    }
    pending.push_back(c);
  }
  if (pending.empty()) return out;

  const auto before = tagger_.stats();
  auto results = tagger_.tag(pending);
  const auto after = tagger_.stats();
  counters_.tagger_calls += after.invocations - before.invocations;
  counters_.parse_failures += after.parse_failures - before.parse_failures;
  counters_.fidelity_failures += after.fidelity_failures - before.fidelity_failures;
  counters_.dropped_spans += after.dropped_spans - before.dropped_spans;

  for (auto& r : results) {
    if (cache_) cache_->put(CacheKey::make(tagger_.config(), r.chunk.hash), r);
    auto hash = r.chunk.hash;
    out.emplace(hash, std::move(r));
  }
  return out;
}

std::vector<TaggedChunk> TaggingEngine::tag(const std::vector<Chunk>& chunks) {
  auto by_hash = tag_unique(chunks);
  std::vector<TaggedChunk> out;
  out.reserve(chunks.size());
  for (const auto& c : chunks) {
    TaggedChunk t = by_hash.at(c.hash);
    if (t.chunk.text != c.text) {
      // Same normalized content, different bytes: spans do not transfer.
      for (const auto& s : t.spans) t.chunk_labels.insert(s.category);
      t.spans.clear();
    }
    t.chunk = c;
    out.push_back(std::move(t));
  }
  return out;
}

EngineCounters TaggingEngine::counters() const { return counters_; }

DedupScope parse_dedup_scope(std::string_view name) {
  if (name == "global") return DedupScope::kGlobal;
  if (name == "per_document" || name == "document") return DedupScope::kPerDocument;
  throw Error(ErrorCode::kInvalidArgument, "unknown dedup scope '" + std::string(name) + "'");
}

std::string_view to_string(DedupScope scope) { return scope == DedupScope::kGlobal ? "global" : "per_document"; }

PipelineResult run_pipeline(const std::vector<Document>& docs, const PipelineConfig& config, TaggingEngine& engine) {
  config.chunking.validate();
  if (config.chunking.overlap > 0) {
    throw Error(ErrorCode::kInvalidArgument, "overlapping windows cannot be reassembled; set overlap to 0");
  }
  PipelineResult result;
  std::vector<Chunk> all;
  for (const auto& d : docs) {
    result.chunked.push_back(chunk_document(d, config.chunking, config.estimator));
    const auto& cs = result.chunked.back().chunks;
    all.insert(all.end(), cs.begin(), cs.end());
  }

  if (config.dedup_scope == DedupScope::kGlobal) {
    auto d = dedup(all);
    result.unique_chunks = d.unique.size();
    result.tagged = engine.tag_unique(all);
    for (const auto& doc : docs) {
      result.rendered.push_back(Document{doc.id, reassemble(doc, d.occurrences, result.tagged, config.render), doc.meta});
    }
  } else {
    for (std::size_t i = 0; i < docs.size(); ++i) {
      auto d = dedup(result.chunked[i].chunks);
      result.unique_chunks += d.unique.size();
      auto tagged = engine.tag_unique(result.chunked[i].chunks);
      result.rendered.push_back(
          Document{docs[i].id, reassemble(docs[i], d.occurrences, tagged, config.render), docs[i].meta});
      result.tagged.merge(tagged);
    }
  }
  return result;
}

}  // namespace tagforge
