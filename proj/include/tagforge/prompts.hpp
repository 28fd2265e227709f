#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "tagforge/core.hpp"

namespace tagforge {

struct Prompt {
  std::string system;
  std::string user;
};

/// A tagging prompt template. Text form:
///
///   [persona]       -> system prompt
///   [instructions]
///   [format]
///   [layout]        -> user prompt; {{instructions}} {{format}} {{categories}}
///                      and {{chunk}} are required, {{fewshot}} is optional
///
/// Section headers are lines consisting of exactly "[name]".
struct PromptTemplate {
  std::string id;
  std::string persona;
  std::string instructions;
  std::string format;
  std::string layout;

  /// Throws TemplateSlotMissing when a section or a required slot is absent.
  static PromptTemplate parse(std::string_view text, std::string id);
  static PromptTemplate load(const std::filesystem::path& path);

  static const PromptTemplate& builtin_classification();
  static const PromptTemplate& builtin_ie();

  std::string serialize() const;
};

struct FewShotExample {
  std::string text;
  std::vector<std::string> labels;
};

/// "- Name: definition (examples: a; b)" per line, in category-set order.
std::string render_category_list(const CategorySet& categories);

Prompt build_classification_prompt(std::string_view chunk_text, const CategorySet& categories,
                                   const PromptTemplate& tmpl, const std::vector<FewShotExample>& fewshot = {});

Prompt build_ie_prompt(std::string_view chunk_text, const CategorySet& categories, const PromptTemplate& tmpl);

}  // namespace tagforge
