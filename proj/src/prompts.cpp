#include "tagforge/prompts.hpp"

#include <map>
#include <sstream>

#include "builtin_templates.hpp"  // generated from templates/*.txt
#include "tagforge/error.hpp"
#include "tagforge/json_io.hpp"

namespace tagforge {

namespace {

std::string trim_newlines(std::string s) {
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
  std::size_t b = 0;
  while (b < s.size() && (s[b] == '\n' || s[b] == '\r')) ++b;
  return s.substr(b);
}

bool has_slot(std::string_view layout, std::string_view slot) {
  return layout.find("{{" + std::string(slot) + "}}") != std::string_view::npos;
}

// Single pass: substituted values are never rescanned for slots.
std::string fill(std::string_view layout, const std::map<std::string, std::string>& values) {
  std::string out;
  std::size_t i = 0;
  while (i < layout.size()) {
    auto open = layout.find("{{", i);
    if (open == std::string_view::npos) break;
    auto close = layout.find("}}", open + 2);
    if (close == std::string_view::npos) break;
    auto name = std::string(layout.substr(open + 2, close - open - 2));
    auto it = values.find(name);
    if (it == values.end()) {
      out.append(layout.substr(i, close + 2 - i));
    } else {
      out.append(layout.substr(i, open - i));
      out += it->second;
    }
    i = close + 2;
  }
  out.append(layout.substr(i));
  return out;
}

}  // namespace

PromptTemplate PromptTemplate::parse(std::string_view text, std::string id) {
  std::map<std::string, std::string> sections;
  std::string current;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.size() > 2 && line.front() == '[' && line.back() == ']' &&
        line.find(' ') == std::string::npos) {
      current = line.substr(1, line.size() - 2);
      sections[current];
      continue;
    }
    if (current.empty()) continue;
    sections[current] += line;
    sections[current] += '\n';
  }
  PromptTemplate t;
  t.id = std::move(id);
  for (const char* required : {"persona", "instructions", "format", "layout"}) {
    auto it = sections.find(required);
    if (it == sections.end() || trim_newlines(it->second).empty()) {
      throw Error(ErrorCode::kTemplateSlotMissing, "template '" + t.id + "' lacks section [" + required + "]");
    }
  }
  t.persona = trim_newlines(sections["persona"]);
  t.instructions = trim_newlines(sections["instructions"]);
  t.format = trim_newlines(sections["format"]);
  t.layout = trim_newlines(sections["layout"]);
  for (const char* slot : {"instructions", "format", "categories", "chunk"}) {
    if (!has_slot(t.layout, slot)) {
      throw Error(ErrorCode::kTemplateSlotMissing, "template '" + t.id + "' layout lacks {{" + slot + "}}");
    }
  }
  return t;
}

PromptTemplate PromptTemplate::load(const std::filesystem::path& path) {
  return parse(read_file(path), path.stem().string());
}

const PromptTemplate& PromptTemplate::builtin_classification() {
  static const PromptTemplate t = parse(builtin_templates::kClassification, "classification");
  return t;
}

const PromptTemplate& PromptTemplate::builtin_ie() {
  static const PromptTemplate t = parse(builtin_templates::kIe, "ie");
  return t;
}

std::string PromptTemplate::serialize() const {
  return "[persona]\n" + persona + "\n[instructions]\n" + instructions + "\n[format]\n" + format + "\n[layout]\n" +
         layout + "\n";
}

std::string render_category_list(const CategorySet& categories) {
  std::string out;
  for (const auto& c : categories.categories()) {
    out += "- " + c.name;
    if (!c.definition.empty()) out += ": " + c.definition;
    if (!c.examples.empty()) {
      out += " (examples: ";
      for (std::size_t i = 0; i < c.examples.size(); ++i) {
        if (i) out += "; ";
        out += c.examples[i];
      }
      out += ")";
    }
    out += "\n";
  }
  if (!out.empty()) out.pop_back();
  return out;
}

Prompt build_classification_prompt(std::string_view chunk_text, const CategorySet& categories,
                                   const PromptTemplate& tmpl, const std::vector<FewShotExample>& fewshot) {
  if (!fewshot.empty() && !has_slot(tmpl.layout, "fewshot")) {
    throw Error(ErrorCode::kTemplateSlotMissing, "template '" + tmpl.id + "' has no {{fewshot}} slot");
  }
  std::string shots;
  for (std::size_t i = 0; i < fewshot.size(); ++i) {
    shots += "Example " + std::to_string(i + 1) + ":\nPassage:\n" + fewshot[i].text + "\nAnswer: " +
             Json(fewshot[i].labels).dump() + "\n\n";
  }
  return Prompt{tmpl.persona, fill(tmpl.layout, {{"instructions", tmpl.instructions},
                                                 {"format", tmpl.format},
                                                 {"categories", render_category_list(categories)},
                                                 {"fewshot", shots},
                                                 {"chunk", std::string(chunk_text)}})};
}

Prompt build_ie_prompt(std::string_view chunk_text, const CategorySet& categories, const PromptTemplate& tmpl) {
  return Prompt{tmpl.persona, fill(tmpl.layout, {{"instructions", tmpl.instructions},
                                                 {"format", tmpl.format},
                                                 {"categories", render_category_list(categories)},
                                                 {"fewshot", ""},
                                                 {"chunk", std::string(chunk_text)}})};
}

}  // namespace tagforge
