#pragma once

// Chat-completion client surface: a deterministic mock, an HTTP client with
// provider adapters, a rate-limiting decorator and a record/replay store.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "tagforge/core.hpp"
#include "tagforge/json_io.hpp"

namespace tagforge {

struct Usage {
  std::size_t input_tokens = 0;
  std::size_t output_tokens = 0;

  bool operator==(const Usage&) const = default;
};

struct CompletionRequest {
  std::string system;
  std::string user;
  std::size_t max_output_tokens = 1024;
  double temperature = 0.0;
  // Extended reasoning; supersedes temperature.
  bool thinking = false;
  std::string model_id;

  /// Rejects temperature outside [0, 1], nonzero temperature without thinking,
  /// and max_output_tokens == 0. Throws InvalidRequest.
  void validate() const;
  Json to_json() const;
  Digest256 hash() const;
};

struct CompletionResult {
  std::string text;
  std::optional<std::string> reasoning;
  Usage usage;
  std::int64_t latency_ms = 0;
  int attempt = 1;
};

void to_json(Json& j, const CompletionResult& r);
void from_json(const Json& j, CompletionResult& r);

class LlmClient {
 public:
  virtual ~LlmClient() = default;
  virtual CompletionResult complete(const CompletionRequest& request) = 0;
};

/// Deterministic in-process model. Thread-safe as long as the responder is.
class MockLlm final : public LlmClient {
 public:
  using Responder = std::function<std::string(const CompletionRequest&)>;

  explicit MockLlm(Responder responder);
  /// Serves table[request.hash()]; misses return `fallback` or raise FixtureMiss.
  static std::shared_ptr<MockLlm> from_table(std::map<Digest256, std::string> table,
                                             std::optional<std::string> fallback = std::nullopt);

  CompletionResult complete(const CompletionRequest& request) override;
  std::size_t calls() const { return calls_.load(); }

 private:
  Responder responder_;
  std::atomic<std::size_t> calls_{0};
};

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{500};
  double multiplier = 2.0;
  std::chrono::milliseconds max_backoff{8000};
  std::chrono::seconds timeout{60};
};

enum class Provider { kOpenAiCompatible, kAnthropic };

Provider parse_provider(std::string_view name);

struct HttpConfig {
  std::string endpoint;  // full URL of the chat endpoint
  std::string api_key;
  std::string model_id;
  Provider provider = Provider::kOpenAiCompatible;
  std::size_t thinking_budget_tokens = 2048;
  RetryPolicy retry;

  /// TAGFORGE_LLM_ENDPOINT, TAGFORGE_LLM_API_KEY, TAGFORGE_LLM_MODEL,
  /// TAGFORGE_LLM_PROVIDER (openai | anthropic).
  static HttpConfig from_env();
};

/// Maps a request to the provider's JSON body and back. Exposed for tests.
Json provider_request_body(Provider provider, const CompletionRequest& request, std::size_t thinking_budget);
CompletionResult parse_provider_response(Provider provider, const Json& body);

class HttpLlmClient final : public LlmClient {
 public:
  explicit HttpLlmClient(HttpConfig config);
  CompletionResult complete(const CompletionRequest& request) override;

 private:
  HttpConfig config_;
};

/// Bounds in-flight requests and smooths the request rate with a token bucket.
class RateLimitedClient final : public LlmClient {
 public:
  RateLimitedClient(std::shared_ptr<LlmClient> inner, std::size_t max_in_flight,
                    double requests_per_second = 0.0, double burst = 1.0);
  CompletionResult complete(const CompletionRequest& request) override;
  std::size_t peak_in_flight() const { return peak_.load(); }

 private:
  void acquire_token();

  std::shared_ptr<LlmClient> inner_;
  std::size_t max_in_flight_;
  double rate_;
  double burst_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::size_t in_flight_ = 0;
  std::atomic<std::size_t> peak_{0};
  double tokens_;
  std::chrono::steady_clock::time_point last_refill_;
};

/// Content-addressed, append-only directory of recorded completions, one
/// <request-hash>.json per entry.
class FixtureStore {
 public:
  explicit FixtureStore(std::filesystem::path dir);

  std::optional<CompletionResult> load(const Digest256& request_hash) const;
  /// No-op when an entry for the request already exists.
  void store(const CompletionRequest& request, const CompletionResult& result) const;
  std::size_t size() const;
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
};

enum class ReplayMode { kRecord, kReplay, kPassthrough };

ReplayMode parse_replay_mode(std::string_view name);

class RecordReplayClient final : public LlmClient {
 public:
  /// `inner` may be null in replay mode.
  RecordReplayClient(ReplayMode mode, FixtureStore store, std::shared_ptr<LlmClient> inner);
  CompletionResult complete(const CompletionRequest& request) override;
  std::size_t inner_calls() const { return inner_calls_.load(); }

 private:
  ReplayMode mode_;
  FixtureStore store_;
  std::shared_ptr<LlmClient> inner_;
  std::atomic<std::size_t> inner_calls_{0};
};

}  // namespace tagforge
