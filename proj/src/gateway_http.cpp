#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <thread>

#include "tagforge/error.hpp"
#include "tagforge/gateway.hpp"

namespace tagforge {

HttpConfig HttpConfig::from_env() {
  auto get = [](const char* name) -> std::string {
    const char* v = std::getenv(name);
    return v ? std::string(v) : std::string{};
  };
  HttpConfig cfg;
  cfg.endpoint = get("TAGFORGE_LLM_ENDPOINT");
  cfg.api_key = get("TAGFORGE_LLM_API_KEY");
  cfg.model_id = get("TAGFORGE_LLM_MODEL");
  if (auto p = get("TAGFORGE_LLM_PROVIDER"); !p.empty()) cfg.provider = parse_provider(p);
  if (cfg.endpoint.empty()) throw Error(ErrorCode::kInvalidArgument, "TAGFORGE_LLM_ENDPOINT is not set");
  return cfg;
}

Json provider_request_body(Provider provider, const CompletionRequest& req, std::size_t thinking_budget) {
  Json body;
  body["model"] = req.model_id;
  switch (provider) {
    case Provider::kOpenAiCompatible: {
      Json messages = Json::array();
      if (!req.system.empty()) messages.push_back({{"role", "system"}, {"content", req.system}});
      messages.push_back({{"role", "user"}, {"content", req.user}});
      body["messages"] = std::move(messages);
      body["max_tokens"] = req.max_output_tokens;
      if (!req.thinking) body["temperature"] = req.temperature;
      break;
    }
    case Provider::kAnthropic: {
      if (!req.system.empty()) body["system"] = req.system;
      body["messages"] = Json::array({{{"role", "user"}, {"content", req.user}}});
      if (req.thinking) {
        body["thinking"] = {{"type", "enabled"}, {"budget_tokens", thinking_budget}};
        body["max_tokens"] = req.max_output_tokens + thinking_budget;
      } else {
        body["max_tokens"] = req.max_output_tokens;
        body["temperature"] = req.temperature;
      }
      break;
    }
  }
  return body;
}

CompletionResult parse_provider_response(Provider provider, const Json& body) {
  CompletionResult out;
  try {
    switch (provider) {
      case Provider::kOpenAiCompatible: {
        const auto& message = body.at("choices").at(0).at("message");
        out.text = message.at("content").is_string() ? message.at("content").get<std::string>() : "";
        if (auto it = message.find("reasoning_content"); it != message.end() && it->is_string()) {
          out.reasoning = it->get<std::string>();
        }
        if (auto u = body.find("usage"); u != body.end()) {
          out.usage.input_tokens = u->value("prompt_tokens", std::size_t{0});
          out.usage.output_tokens = u->value("completion_tokens", std::size_t{0});
        }
        break;
      }
      case Provider::kAnthropic: {
        std::string reasoning;
        for (const auto& block : body.at("content")) {
          auto type = block.value("type", std::string{});
          if (type == "text") out.text += block.value("text", std::string{});
          if (type == "thinking") reasoning += block.value("thinking", std::string{});
        }
        if (!reasoning.empty()) out.reasoning = reasoning;
        if (auto u = body.find("usage"); u != body.end()) {
          out.usage.input_tokens = u->value("input_tokens", std::size_t{0});
          out.usage.output_tokens = u->value("output_tokens", std::size_t{0});
        }
        break;
      }
    }
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kTransportError, std::string("malformed provider response: ") + e.what());
  }
  return out;
}

namespace {

bool mentions_context_limit(std::string body) {
  std::transform(body.begin(), body.end(), body.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (const char* needle : {"context length", "context window", "context_length", "prompt is too long",
                             "too many tokens", "maximum context", "input is too long"}) {
    if (body.find(needle) != std::string::npos) return true;
  }
  return false;
}

std::pair<std::string, std::string> split_url(const std::string& url) {
  auto scheme = url.find("://");
  auto path_start = url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

HttpLlmClient::HttpLlmClient(HttpConfig config) : config_(std::move(config)) {
  if (config_.endpoint.empty()) throw Error(ErrorCode::kInvalidArgument, "HTTP client needs an endpoint");
}

CompletionResult HttpLlmClient::complete(const CompletionRequest& request) {
  request.validate();
  CompletionRequest req = request;
  if (req.model_id.empty()) req.model_id = config_.model_id;

  auto [base, path] = split_url(config_.endpoint);
  httplib::Client client(base);
  client.set_connection_timeout(config_.retry.timeout);
  client.set_read_timeout(config_.retry.timeout);
  client.set_write_timeout(config_.retry.timeout);

  httplib::Headers headers;
  switch (config_.provider) {
    case Provider::kOpenAiCompatible:
      if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);
      break;
    case Provider::kAnthropic:
      headers.emplace("x-api-key", config_.api_key);
      headers.emplace("anthropic-version", "2023-06-01");
      break;
  }
  const std::string body = provider_request_body(config_.provider, req, config_.thinking_budget_tokens).dump();

  auto backoff = config_.retry.initial_backoff;
  ErrorCode last_code = ErrorCode::kTransportError;
  std::string last_message;
  const int attempts = std::max(0, config_.retry.max_retries) + 1;
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    auto started = std::chrono::steady_clock::now();
    auto res = client.Post(path, headers, body, "application/json");
    if (!res) {
      last_code = ErrorCode::kTransportError;
      last_message = httplib::to_string(res.error());
    } else if (res->status >= 200 && res->status < 300) {
      Json parsed;
      try {
        parsed = Json::parse(res->body);
      } catch (const Json::parse_error& e) {
        throw Error(ErrorCode::kTransportError, std::string("response is not JSON: ") + e.what());
      }
      auto out = parse_provider_response(config_.provider, parsed);
      out.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::steady_clock::now() - started)
                           .count();
      out.attempt = attempt;
      return out;
    } else if (res->status == 401 || res->status == 403) {
      throw Error(ErrorCode::kAuthError, "HTTP " + std::to_string(res->status));
    } else if (res->status == 429 || res->status == 529) {
      last_code = ErrorCode::kThrottled;
      last_message = "HTTP " + std::to_string(res->status);
    } else if (res->status >= 500) {
      last_code = ErrorCode::kTransportError;
      last_message = "HTTP " + std::to_string(res->status);
    } else if (mentions_context_limit(res->body)) {
      throw Error(ErrorCode::kContextWindowExceeded, res->body);
    } else {
      throw Error(ErrorCode::kInvalidRequest, "HTTP " + std::to_string(res->status) + ": " + res->body);
    }
    if (attempt < attempts) {
      std::this_thread::sleep_for(backoff);
      backoff = std::min(config_.retry.max_backoff,
                         std::chrono::milliseconds(static_cast<std::int64_t>(
                             static_cast<double>(backoff.count()) * config_.retry.multiplier)));
    }
  }
  throw Error(last_code, last_message + " after " + std::to_string(attempts) + " attempts");
}

}  // namespace tagforge
