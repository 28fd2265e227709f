#include "tagforge/tokens.hpp"

#include "tagforge/core.hpp"
#include "tagforge/error.hpp"
#include "tagforge/json_io.hpp"

namespace tagforge {

EstimatorMode parse_estimator_mode(std::string_view name) {
  if (name == "chars_div_4") return EstimatorMode::kCharsDiv4;
  if (name == "whitespace_words_x4/3" || name == "words_x4_3") return EstimatorMode::kWordsTimes4Over3;
  if (name == "external_count_file") return EstimatorMode::kExternalCountFile;
  throw Error(ErrorCode::kInvalidArgument, "unknown token estimator '" + std::string(name) + "'");
}

std::string_view to_string(EstimatorMode mode) {
  switch (mode) {
    case EstimatorMode::kCharsDiv4: return "chars_div_4";
    case EstimatorMode::kWordsTimes4Over3: return "whitespace_words_x4/3";
    case EstimatorMode::kExternalCountFile: return "external_count_file";
  }
  return "chars_div_4";
}

TokenEstimator TokenEstimator::from_count_file(const std::filesystem::path& path) {
  TokenEstimator est(EstimatorMode::kExternalCountFile);
  Json j = Json::parse(read_file(path));
  for (const auto& [id, count] : j.items()) est.counts_[id] = count.get<std::size_t>();
  return est;
}

std::size_t TokenEstimator::estimate(std::string_view text) const {
  switch (mode_) {
    case EstimatorMode::kWordsTimes4Over3: {
      std::size_t words = 0;
      bool in_word = false;
      for (char c : text) {
        bool space = c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
        if (!space && !in_word) ++words;
        in_word = !space;
      }
      return (words * 4 + 2) / 3;
    }
    case EstimatorMode::kCharsDiv4:
    case EstimatorMode::kExternalCountFile:
      return (codepoint_count(text) + 3) / 4;
  }
  return 0;
}

std::optional<std::size_t> TokenEstimator::exact_count(const std::string& id) const {
  if (auto it = counts_.find(id); it != counts_.end()) return it->second;
  return std::nullopt;
}

}  // namespace tagforge
