#pragma once

// Helpers shared by the unit and acceptance tests.

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

#include "tagforge/core.hpp"
#include "tagforge/error.hpp"
#include "tagforge/json_io.hpp"

namespace tagforge::test {

inline std::filesystem::path fixture(const std::string& name) { return std::filesystem::path(TAGFORGE_FIXTURES) / name; }

// Removed with its contents on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("tagforge-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Code of the tagforge::Error thrown by fn, or nullopt-like -1 when none.
template <typename Fn>
int error_code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return static_cast<int>(e.code());
  }
  return -1;
}

#define CHECK_ERROR_CODE(expr, code) CHECK(::tagforge::test::error_code_of([&] { (void)(expr); }) == static_cast<int>(code))

// Random text mixing ASCII words, punctuation, whitespace and multibyte characters.
inline std::string random_text(std::mt19937_64& rng, std::size_t max_pieces) {
  static const char* pieces[] = {"alpha", "Beta", " ", "  ", "\n", ".", ",", "é", "ü", "東京", "🙂", "x", "42",
                                 "<", ">", "&", "\t", "Dr.", "\"", "Ω"};
  std::uniform_int_distribution<std::size_t> n(0, max_pieces);
  std::uniform_int_distribution<std::size_t> pick(0, std::size(pieces) - 1);
  std::string out;
  for (std::size_t i = 0, k = n(rng); i < k; ++i) out += pieces[pick(rng)];
  return out;
}

inline std::vector<Json> read_jsonl(const std::filesystem::path& path) {
  std::vector<Json> out;
  for_each_jsonl(path, [&](const Json& j) { out.push_back(j); });
  return out;
}

// Byte offsets of every code point boundary in text, including 0 and size().
inline std::vector<std::size_t> boundaries(const std::string& text) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i <= text.size(); ++i) {
    if (is_char_boundary(text, i)) out.push_back(i);
  }
  return out;
}

}  // namespace tagforge::test
