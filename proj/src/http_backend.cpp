#include "personadb/http_backend.hpp"

#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "personadb/text.hpp"

namespace personadb {

namespace {

bool retryable_status(int status) { return status == 408 || status == 409 || status == 429 || status >= 500; }

std::optional<std::chrono::milliseconds> retry_after(const httplib::Result& res) {
  if (!res || !res->has_header("Retry-After")) return std::nullopt;
  const auto value = res->get_header_value("Retry-After");
  char* end = nullptr;
  const double seconds = std::strtod(value.c_str(), &end);
  if (end == value.c_str() || seconds < 0) return std::nullopt;
  return std::chrono::milliseconds(static_cast<long long>(seconds * 1000.0));
}

}  // namespace

HttpBackend::HttpBackend(HttpBackendOptions options) : options_(std::move(options)) {
  if (options_.max_attempts < 1) throw Error(ErrorCode::InvalidConfig, "max_attempts must be at least 1");
  const auto& url = options_.base_url;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(ErrorCode::InvalidConfig, "base_url needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  scheme_host_port_ = url.substr(0, path_start);
  path_prefix_ = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

std::chrono::milliseconds HttpBackend::backoff_delay(int attempt) const {
  auto delay = options_.base_delay;
  for (int i = 1; i < attempt && delay < options_.max_delay; ++i) delay *= 2;
  return std::min(delay, options_.max_delay);
}

HttpBackend::Response HttpBackend::post_json(const std::string& endpoint, const nlohmann::json& payload) {
  httplib::Client client(scheme_host_port_);
  client.set_connection_timeout(options_.timeout);
  client.set_read_timeout(options_.timeout);
  client.set_write_timeout(options_.timeout);

  httplib::Headers headers;
  if (const char* key = std::getenv(options_.api_key_env.c_str()); key && *key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  const auto body = payload.dump();
  const auto path = path_prefix_ + endpoint;

  std::string last_error;
  for (int attempt = 1; attempt <= options_.max_attempts; ++attempt) {
    auto res = client.Post(path, headers, body, "application/json");
    if (res && res->status == 200) {
      try {
        return {nlohmann::json::parse(res->body), attempt};
      } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::BackendUnavailable, "unparseable response body: " + std::string(e.what()));
      }
    }
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
    } else {
      last_error = "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200);
      if (!retryable_status(res->status)) throw Error(ErrorCode::BackendUnavailable, last_error);
    }
    if (attempt < options_.max_attempts) {
      auto delay = retry_after(res).value_or(backoff_delay(attempt));
      std::this_thread::sleep_for(std::min(delay, options_.max_delay));
    }
  }
  throw Error(ErrorCode::BackendUnavailable,
              "giving up after " + std::to_string(options_.max_attempts) + " attempts; last " + last_error);
}

AnalyzerReply HttpBackend::analyze(const AnalyzerRequest& req) {
  nlohmann::json payload;
  payload["model"] = options_.chat_model;
  payload["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", req.rendered_prompt}}});
  payload["temperature"] = req.temperature;
  payload["max_tokens"] = req.max_output_tokens;
  if (req.seed) payload["seed"] = *req.seed;

  auto res = post_json("/chat/completions", payload);
  try {
    const auto& choice = res.body.at("choices").at(0);
    if (choice.value("finish_reason", "") == "length") {
      throw Error(ErrorCode::OutputTruncated, req.prompt_name + " hit the output token cap");
    }
    return {choice.at("message").at("content").get<std::string>(), res.attempts};
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BackendUnavailable, "malformed chat response: " + std::string(e.what()));
  }
}

EmbedReply HttpBackend::embed(std::string_view instruction, std::string_view s) {
  nlohmann::json payload;
  payload["model"] = options_.embed_model;
  payload["input"] = std::string(instruction) + "\n" + std::string(s);
  auto res = post_json("/embeddings", payload);
  try {
    auto values = res.body.at("data").at(0).at("embedding").get<std::vector<double>>();
    return {make_embedding(std::move(values), embedder_tag()), res.attempts};
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BackendUnavailable, "malformed embeddings response: " + std::string(e.what()));
  }
}

}  // namespace personadb
