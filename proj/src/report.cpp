#include "tagforge/report.hpp"

#include <chrono>
#include <ctime>
#include <map>
#include <optional>
#include <set>
#include <tuple>

#include "tagforge/error.hpp"

namespace tagforge {

std::string context_length_label(std::size_t cl) {
  if (cl >= 1000 && cl % 1000 == 0) return std::to_string(cl / 1000) + "K";
  return std::to_string(cl);
}

namespace {

struct RowKey {
  std::string model;
  PromptMode mode;
  std::string tagger;

  auto operator<=>(const RowKey&) const = default;
};

std::string delta_text(Hundredths v) { return (v >= 0 ? "+" : "") + format_hundredths(v); }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

struct Column {
  std::string label;
  std::string csv_label;
};

// Shared layout for both tables. `column_of` maps a record to its column key
// (nullopt: the record does not belong in this table).
template <typename Key>
TableReport build_table(const std::vector<EvalRecord>& records,
                        const std::function<std::optional<Key>(const EvalRecord&)>& column_of,
                        const std::function<Column(const Key&)>& describe, bool with_drop_rate) {
  std::map<RowKey, std::map<Key, std::pair<std::size_t, std::size_t>>> cells;  // correct, scored
  std::set<Key> columns;
  std::set<RowKey> rows;
  for (const auto& r : records) {
    auto col = column_of(r);
    if (!col) continue;
    RowKey row{r.model_id, r.mode, r.mode == PromptMode::kTDTC ? r.tagger : ""};
    rows.insert(row);
    columns.insert(*col);
    auto& cell = cells[row][*col];
    if (r.score) {
      ++cell.second;
      if (*r.score == 1) ++cell.first;
    }
  }
  TableReport out;
  if (rows.empty()) return out;

  auto percent = [&](const RowKey& row, const Key& col) -> std::optional<Hundredths> {
    auto rit = cells.find(row);
    if (rit == cells.end()) return std::nullopt;
    auto cit = rit->second.find(col);
    if (cit == rit->second.end() || cit->second.second == 0) return std::nullopt;
    return percent_hundredths(static_cast<std::int64_t>(cit->second.first), static_cast<std::int64_t>(cit->second.second));
  };

  std::set<PromptMode> modes;
  std::set<std::string> models;
  for (const auto& r : rows) {
    modes.insert(r.mode);
    models.insert(r.model);
  }
  out.has_deltas = modes.count(PromptMode::kBaseline) && modes.size() >= 2;

  std::vector<std::string> md_header{"Models", "Tagged Context", "Tagger", "Tag definition in prompt"};
  std::vector<std::string> csv_header{"model", "tagged_context", "tagger", "tag_definition"};
  for (const auto& c : columns) {
    md_header.push_back(describe(c).label);
    csv_header.push_back(describe(c).csv_label);
  }
  if (out.has_deltas) {
    for (const auto& c : columns) {
      md_header.push_back(describe(c).label + " vs baseline");
      csv_header.push_back(describe(c).csv_label + "_delta");
    }
  }
  if (with_drop_rate) {
    md_header.push_back("Extremum drop rate");
    csv_header.push_back("extremum_drop_rate");
  }

  std::string md = "|";
  for (const auto& h : md_header) md += " " + h + " |";
  md += "\n|";
  for (std::size_t i = 0; i < md_header.size(); ++i) md += i < 4 ? " --- |" : " ---: |";
  md += "\n";
  std::string csv;
  for (std::size_t i = 0; i < csv_header.size(); ++i) csv += (i ? "," : "") + csv_field(csv_header[i]);
  csv += "\n";

  for (const auto& model : models) {
    bool first_in_group = true;
    RowKey baseline{model, PromptMode::kBaseline, ""};
    for (const auto& row : rows) {
      if (row.model != model) continue;
      const bool tagged = row.mode == PromptMode::kTDTC;
      const bool defs = row.mode != PromptMode::kBaseline;
      std::vector<std::string> fields{row.model.empty() ? "-" : row.model, tagged ? "Yes" : "No",
                                      tagged && !row.tagger.empty() ? row.tagger : "-", defs ? "Yes" : "No"};
      for (const auto& c : columns) {
        auto p = percent(row, c);
        fields.push_back(p ? format_hundredths(*p) : "-");
      }
      if (out.has_deltas) {
        for (const auto& c : columns) {
          auto p = percent(row, c);
          auto b = percent(baseline, c);
          fields.push_back(row.mode == PromptMode::kBaseline ? "" : (p && b ? delta_text(*p - *b) : "-"));
        }
      }
      if (with_drop_rate) {
        std::map<std::size_t, Hundredths> per_cl;
        for (const auto& c : columns) {
          if (auto p = percent(row, c)) per_cl[static_cast<std::size_t>(c)] = *p;
        }
        std::string drop = "-";
        if (per_cl.size() >= 2 && per_cl.begin()->second != 0) drop = format_hundredths(extremum_drop_rate(per_cl));
        fields.push_back(drop);
      }
      md += "|";
      for (std::size_t i = 0; i < fields.size(); ++i) {
        std::string f = (i == 0 && !first_in_group) ? "" : fields[i];
        md += " " + f + " |";
      }
      md += "\n";
      for (std::size_t i = 0; i < fields.size(); ++i) csv += (i ? "," : "") + csv_field(fields[i]);
      csv += "\n";
      first_in_group = false;
    }
  }
  out.markdown = std::move(md);
  out.csv = std::move(csv);
  return out;
}

}  // namespace

TableReport context_length_table(const std::vector<EvalRecord>& records) {
  return build_table<std::size_t>(
      records, [](const EvalRecord& r) { return r.context_length; },
      [](const std::size_t& cl) { return Column{context_length_label(cl), "cl_" + std::to_string(cl)}; }, true);
}

TableReport complexity_table(const std::vector<EvalRecord>& records) {
  return build_table<Complexity>(
      records, [](const EvalRecord& r) { return r.complexity; },
      [](const Complexity& c) {
        switch (c) {
          case Complexity::kSingleHop: return Column{"Single-hop", "single_hop"};
          case Complexity::kMultiHop: return Column{"Multi-hop", "multi_hop"};
          case Complexity::kDetail: return Column{"Detail", "detail"};
        }
        return Column{"?", "?"};
      },
      false);
}

Report emit_report(const std::vector<EvalRecord>& records) {
  Report out;
  auto cl = context_length_table(records);
  auto cx = complexity_table(records);
  std::size_t errored = 0;
  std::size_t flagged = 0;
  for (const auto& r : records) {
    if (r.error) ++errored;
    if (r.flagged) ++flagged;
  }
  std::string md = "# Evaluation report\n\n";
  md += "Records: " + std::to_string(records.size()) + " (errored: " + std::to_string(errored) +
        ", flagged: " + std::to_string(flagged) + "). Accuracy in percent; errored records are excluded.\n";
  if (!cl.markdown.empty()) md += "\n## Accuracy by context length\n\n" + cl.markdown;
  if (!cx.markdown.empty()) md += "\n## Accuracy by question complexity\n\n" + cx.markdown;
  out.markdown = std::move(md);
  out.csv_context_length = std::move(cl.csv);
  out.csv_complexity = std::move(cx.csv);
  return out;
}

std::vector<std::filesystem::path> write_report(const Report& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  auto put = [&](const std::string& name, const std::string& content) {
    if (content.empty()) return;
    auto p = dir / name;
    atomic_write_file(p, content);
    written.push_back(p);
  };
  put("report.md", report.markdown);
  put("report_context_length.csv", report.csv_context_length);
  put("report_complexity.csv", report.csv_complexity);
  return written;
}

Json RunManifest::to_json() const {
  return Json{{"command", command},
              {"config", config},
              {"tool_version", tool_version},
              {"hash_algorithm", kHashAlgorithm},
              {"category_set_hash", category_set_hash},
              {"counters", counters.to_json()},
              {"cache",
               {{"entries", cache.entries},
                {"bytes", cache.bytes},
                {"hits", cache.hits},
                {"misses", cache.misses},
                {"corrupt", cache.corrupt},
                {"writes", cache.writes}}},
              {"records", records},
              {"errored_records", errored_records},
              {"flagged_records", flagged_records},
              {"mode_context_mismatches", mode_context_mismatches},
              {"started_at", started_at},
              {"finished_at", finished_at}};
}

std::string utc_timestamp() {
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string category_set_hash(const CategorySet& categories) {
  return sha256(canonical_json(Json(categories.categories()))).hex();
}

}  // namespace tagforge
