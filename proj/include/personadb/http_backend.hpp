#pragma once

#include <chrono>
#include <map>
#include <optional>
#include <string>

#include "personadb/gateway.hpp"

namespace personadb {

struct HttpBackendOptions {
  std::string base_url = "https://api.openai.com/v1";
  std::string chat_model = "gpt-3.5-turbo-0613";
  std::string embed_model = "text-embedding-ada-002";
  std::size_t embed_dims = 1536;
  int max_attempts = 5;
  std::chrono::milliseconds base_delay{500};
  std::chrono::milliseconds max_delay{20000};
  std::chrono::seconds timeout{60};
  std::string api_key_env = "PERSONADB_API_KEY";
};

/// Chat-completions / embeddings client. Transient failures (transport
/// errors, 408, 409, 429, 5xx) are retried with exponential backoff, honoring
/// Retry-After, up to max_attempts.
class HttpBackend : public Backend {
 public:
  explicit HttpBackend(HttpBackendOptions options);

  AnalyzerReply analyze(const AnalyzerRequest& req) override;
  EmbedReply embed(std::string_view instruction, std::string_view text) override;
  std::size_t embed_dims() const override { return options_.embed_dims; }
  std::string analyzer_tag() const override { return "http:" + options_.chat_model; }
  std::string embedder_tag() const override { return "http:" + options_.embed_model; }
  bool deterministic() const override { return false; }

  /// Delay before retry number `attempt` (1-based), absent a Retry-After hint.
  std::chrono::milliseconds backoff_delay(int attempt) const;

 private:
  struct Response {
    nlohmann::json body;
    int attempts = 0;
  };
  Response post_json(const std::string& endpoint, const nlohmann::json& payload);

  HttpBackendOptions options_;
  std::string scheme_host_port_;
  std::string path_prefix_;
};

}  // namespace personadb
