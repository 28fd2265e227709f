#include "tagforge/gateway.hpp"

#include <algorithm>
#include <system_error>
#include <thread>

#include "tagforge/error.hpp"
#include "tagforge/tokens.hpp"

namespace tagforge {

void CompletionRequest::validate() const {
  if (max_output_tokens < 1) throw Error(ErrorCode::kInvalidRequest, "max_output_tokens must be >= 1");
  if (!(temperature >= 0.0 && temperature <= 1.0)) {
    throw Error(ErrorCode::kInvalidRequest, "temperature must lie in [0, 1]");
  }
  if (!thinking && temperature != 0.0) {
    throw Error(ErrorCode::kInvalidRequest, "temperature must be 0 unless thinking is enabled");
  }
}

Json CompletionRequest::to_json() const {
  return Json{{"system", system},         {"user", user},         {"max_output_tokens", max_output_tokens},
              {"temperature", temperature}, {"thinking", thinking}, {"model_id", model_id}};
}

Digest256 CompletionRequest::hash() const { return sha256(canonical_json(to_json())); }

void to_json(Json& j, const CompletionResult& r) {
  j = Json{{"text", r.text},
           {"usage", {{"input_tokens", r.usage.input_tokens}, {"output_tokens", r.usage.output_tokens}}},
           {"latency_ms", r.latency_ms},
           {"attempt", r.attempt}};
  j["reasoning"] = r.reasoning ? Json(*r.reasoning) : Json(nullptr);
}

void from_json(const Json& j, CompletionResult& r) {
  r.text = j.at("text").get<std::string>();
  if (auto it = j.find("reasoning"); it != j.end() && it->is_string()) {
    r.reasoning = it->get<std::string>();
  } else {
    r.reasoning.reset();
  }
  const auto& usage = j.at("usage");
  r.usage.input_tokens = usage.value("input_tokens", std::size_t{0});
  r.usage.output_tokens = usage.value("output_tokens", std::size_t{0});
  r.latency_ms = j.value("latency_ms", std::int64_t{0});
  r.attempt = j.value("attempt", 1);
}

MockLlm::MockLlm(Responder responder) : responder_(std::move(responder)) {}

std::shared_ptr<MockLlm> MockLlm::from_table(std::map<Digest256, std::string> table,
                                             std::optional<std::string> fallback) {
  return std::make_shared<MockLlm>(
      [table = std::move(table), fallback = std::move(fallback)](const CompletionRequest& req) {
        auto h = req.hash();
        if (auto it = table.find(h); it != table.end()) return it->second;
        if (fallback) return *fallback;
        throw Error(ErrorCode::kFixtureMiss, h.hex());
      });
}

CompletionResult MockLlm::complete(const CompletionRequest& request) {
  request.validate();
  calls_.fetch_add(1);
  CompletionResult out;
  out.text = responder_(request);
  TokenEstimator est;
  out.usage.input_tokens = est.estimate(request.system) + est.estimate(request.user);
  out.usage.output_tokens = est.estimate(out.text);
  return out;
}

Provider parse_provider(std::string_view name) {
  if (name == "openai" || name == "openai_compatible") return Provider::kOpenAiCompatible;
  if (name == "anthropic") return Provider::kAnthropic;
  throw Error(ErrorCode::kInvalidArgument, "unknown provider '" + std::string(name) + "'");
}

RateLimitedClient::RateLimitedClient(std::shared_ptr<LlmClient> inner, std::size_t max_in_flight,
                                     double requests_per_second, double burst)
    : inner_(std::move(inner)),
      max_in_flight_(std::max<std::size_t>(1, max_in_flight)),
      rate_(requests_per_second),
      burst_(std::max(1.0, burst)),
      tokens_(std::max(1.0, burst)),
      last_refill_(std::chrono::steady_clock::now()) {}

void RateLimitedClient::acquire_token() {
  if (rate_ <= 0.0) return;
  std::unique_lock lock(mu_);
  while (true) {
    auto now = std::chrono::steady_clock::now();
    double elapsed = std::chrono::duration<double>(now - last_refill_).count();
    tokens_ = std::min(burst_, tokens_ + elapsed * rate_);
    last_refill_ = now;
    if (tokens_ >= 1.0) {
      tokens_ -= 1.0;
      return;
    }
    auto wait = std::chrono::duration<double>((1.0 - tokens_) / rate_);
    cv_.wait_for(lock, wait);
  }
}

CompletionResult RateLimitedClient::complete(const CompletionRequest& request) {
  acquire_token();
  {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return in_flight_ < max_in_flight_; });
    ++in_flight_;
    std::size_t seen = peak_.load();
    while (in_flight_ > seen && !peak_.compare_exchange_weak(seen, in_flight_)) {
    }
  }
  struct Release {
    RateLimitedClient* self;
    ~Release() {
      {
        std::lock_guard lock(self->mu_);
        --self->in_flight_;
      }
      self->cv_.notify_all();
    }
  } release{this};
  return inner_->complete(request);
}

FixtureStore::FixtureStore(std::filesystem::path dir) : dir_(std::move(dir)) {}

std::optional<CompletionResult> FixtureStore::load(const Digest256& request_hash) const {
  auto path = dir_ / (request_hash.hex() + ".json");
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return std::nullopt;
  Json j = Json::parse(read_file(path));
  return j.at("result").get<CompletionResult>();
}

void FixtureStore::store(const CompletionRequest& request, const CompletionResult& result) const {
  std::filesystem::create_directories(dir_);
  auto hash = request.hash();
  auto path = dir_ / (hash.hex() + ".json");
  std::error_code ec;
  if (std::filesystem::exists(path, ec)) return;
  Json entry{{"hash_algorithm", kHashAlgorithm}, {"request_hash", hash.hex()}, {"request", request.to_json()},
             {"result", result}};
  atomic_write_file(path, entry.dump(2) + "\n");
}

std::size_t FixtureStore::size() const {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir_, ec)) return 0;
  std::size_t n = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir_)) {
    if (e.path().extension() == ".json") ++n;
  }
  return n;
}

ReplayMode parse_replay_mode(std::string_view name) {
  if (name == "record") return ReplayMode::kRecord;
  if (name == "replay") return ReplayMode::kReplay;
  if (name == "passthrough") return ReplayMode::kPassthrough;
  throw Error(ErrorCode::kInvalidArgument, "unknown replay mode '" + std::string(name) + "'");
}

RecordReplayClient::RecordReplayClient(ReplayMode mode, FixtureStore store, std::shared_ptr<LlmClient> inner)
    : mode_(mode), store_(std::move(store)), inner_(std::move(inner)) {
  if (mode_ != ReplayMode::kReplay && !inner_) {
    throw Error(ErrorCode::kInvalidArgument, "record and passthrough modes need an inner client");
  }
}

CompletionResult RecordReplayClient::complete(const CompletionRequest& request) {
  request.validate();
  switch (mode_) {
    case ReplayMode::kReplay: {
      auto hit = store_.load(request.hash());
      if (!hit) throw Error(ErrorCode::kFixtureMiss, request.hash().hex());
      return *hit;
    }
    case ReplayMode::kRecord: {
      inner_calls_.fetch_add(1);
      auto result = inner_->complete(request);
      store_.store(request, result);
      return result;
    }
    case ReplayMode::kPassthrough:
      inner_calls_.fetch_add(1);
      return inner_->complete(request);
  }
  throw Error(ErrorCode::kInvalidArgument, "bad replay mode");
}

}  // namespace tagforge
