#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace tagforge {

enum class EstimatorMode { kCharsDiv4, kWordsTimes4Over3, kExternalCountFile };

EstimatorMode parse_estimator_mode(std::string_view name);
std::string_view to_string(EstimatorMode mode);

/// Approximate token counts. Both formula modes are monotone under
/// concatenation and map "" to 0.
///   chars_div_4:       ceil(code points / 4)
///   words_x4/3:        ceil(whitespace-delimited words * 4 / 3)
///   external_count_file: exact per-id counts loaded from a JSON object
///                      {id: count}; text without an id falls back to chars_div_4.
class TokenEstimator {
 public:
  TokenEstimator() = default;
  explicit TokenEstimator(EstimatorMode mode) : mode_(mode) {}

  static TokenEstimator from_count_file(const std::filesystem::path& path);

  EstimatorMode mode() const { return mode_; }
  std::size_t estimate(std::string_view text) const;
  std::optional<std::size_t> exact_count(const std::string& id) const;

 private:
  EstimatorMode mode_ = EstimatorMode::kCharsDiv4;
  std::map<std::string, std::size_t> counts_;
};

}  // namespace tagforge
