#pragma once

// Result tables in the layout of the published benchmark tables, plus the
// run manifest written next to every output.

#include <filesystem>
#include <string>
#include <vector>

#include "tagforge/cache.hpp"
#include "tagforge/engine.hpp"
#include "tagforge/harness.hpp"
#include "tagforge/json_io.hpp"

namespace tagforge {

/// "250", "500", "16K", "32K".
std::string context_length_label(std::size_t cl);

struct TableReport {
  std::string markdown;
  std::string csv;
  bool has_deltas = false;
};

/// Rows: model x (mode, tagger); columns: context lengths, delta-vs-baseline
/// columns (when a baseline row and another mode exist), extremum drop rate.
/// Only records with a context length take part.
TableReport context_length_table(const std::vector<EvalRecord>& records);

/// Same row layout; columns are single-hop, multi-hop and detail.
TableReport complexity_table(const std::vector<EvalRecord>& records);

struct Report {
  std::string markdown;  // both tables, whichever have data
  std::string csv_context_length;
  std::string csv_complexity;
};

Report emit_report(const std::vector<EvalRecord>& records);

/// Writes report.md and report_<table>.csv into `dir`; returns the paths written.
std::vector<std::filesystem::path> write_report(const Report& report, const std::filesystem::path& dir);

struct RunManifest {
  std::string command;
  Json config = Json::object();  // snapshot of effective options
  std::string tool_version = TAGFORGE_VERSION;
  std::string category_set_hash;
  EngineCounters counters;
  CacheStats cache;
  std::size_t records = 0;
  std::size_t errored_records = 0;
  std::size_t flagged_records = 0;
  std::size_t mode_context_mismatches = 0;
  std::string started_at;  // UTC, ISO 8601
  std::string finished_at;

  Json to_json() const;
};

std::string utc_timestamp();
std::string category_set_hash(const CategorySet& categories);

}  // namespace tagforge
