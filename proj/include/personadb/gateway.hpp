#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "personadb/embedding_cache.hpp"
#include "personadb/error.hpp"
#include "personadb/journal.hpp"
#include "personadb/rate_limiter.hpp"
#include "personadb/types.hpp"

namespace personadb {

struct AnalyzerRequest {
  std::string prompt_name;
  std::string rendered_prompt;
  double temperature = 0.0;
  std::optional<std::int64_t> seed = 0;
  int max_output_tokens = 512;
};

struct EmbedRequest {
  std::string prompt_name;  // selects the instruction prompt, e.g. "join" or "retrieval"
  std::string text;
};

struct AnalyzerReply {
  std::string text;
  int attempts = 1;
};

struct EmbedReply {
  EmbeddingVector vector;
  int attempts = 1;
};

/// Stable digests ignore sampling knobs (seed, temperature, token cap) so
/// transcripts survive config tweaks; full digests cover every field.
enum class DigestMode { Stable, Full };
std::string request_digest(const AnalyzerRequest& req, DigestMode mode);

class Backend {
 public:
  virtual ~Backend() = default;
  virtual AnalyzerReply analyze(const AnalyzerRequest& req) = 0;
  virtual EmbedReply embed(std::string_view instruction, std::string_view text) = 0;
  virtual std::size_t embed_dims() const = 0;
  virtual std::string analyzer_tag() const = 0;
  virtual std::string embedder_tag() const = 0;
  virtual bool deterministic() const = 0;
};

enum class TranscriptMode { Strict, Fallback };

/// Canned responses keyed by request digest. JSONL on disk: {digest, response}.
class Transcript {
 public:
  explicit Transcript(TranscriptMode mode = TranscriptMode::Fallback) : mode_(mode) {}

  static Transcript load(const std::filesystem::path& path, TranscriptMode mode);
  /// Rebuilds a transcript from the analyze/embed lines of a run journal.
  static Transcript from_journal(std::span<const ordered_json> entries, TranscriptMode mode);

  void save(const std::filesystem::path& path) const;
  void add(std::string digest, std::string response);
  /// Adds the response for `req`, keyed by the digest this transcript's mode uses.
  void add(const AnalyzerRequest& req, std::string response);
  const std::string* find(const std::string& digest) const;

  TranscriptMode mode() const noexcept { return mode_; }
  DigestMode digest_mode() const noexcept {
    return mode_ == TranscriptMode::Strict ? DigestMode::Full : DigestMode::Stable;
  }
  std::size_t size() const noexcept { return responses_.size(); }

 private:
  TranscriptMode mode_;
  std::map<std::string, std::string> responses_;
};

/// Deterministic embedder: token counts over a fixed vocabulary, optionally
/// L2-normalized. Tokens outside the vocabulary are ignored.
class BagOfWordsEmbedder {
 public:
  explicit BagOfWordsEmbedder(std::vector<std::string> vocabulary, bool normalize = true);

  std::vector<double> counts(std::string_view text) const;
  EmbeddingVector embed(std::string_view text) const;
  std::size_t dims() const noexcept { return vocabulary_.size(); }
  const std::vector<std::string>& vocabulary() const noexcept { return vocabulary_; }
  bool normalize() const noexcept { return normalize_; }

 private:
  std::vector<std::string> vocabulary_;
  std::unordered_map<std::string, std::size_t> index_;
  bool normalize_;
};

using Responder = std::function<std::string(const AnalyzerRequest&)>;

/// Backend for tests and synthetic runs. Analyzer calls replay the transcript;
/// in fallback mode a miss is answered by the responder, if one is set.
/// Embeddings replay the transcript (vector as a JSON array) or fall back to
/// the bag-of-words embedder.
class ScriptedBackend : public Backend {
 public:
  ScriptedBackend(Transcript transcript, Responder responder = {},
                  std::shared_ptr<const BagOfWordsEmbedder> bow = {}, std::size_t dims = 0);

  AnalyzerReply analyze(const AnalyzerRequest& req) override;
  EmbedReply embed(std::string_view instruction, std::string_view text) override;
  std::size_t embed_dims() const override { return dims_; }
  std::string analyzer_tag() const override { return "scripted"; }
  std::string embedder_tag() const override;
  bool deterministic() const override { return true; }

  std::size_t analyzer_calls() const noexcept { return analyzer_calls_; }
  std::size_t embed_calls() const noexcept { return embed_calls_; }

 private:
  Transcript transcript_;
  Responder responder_;
  std::shared_ptr<const BagOfWordsEmbedder> bow_;
  std::size_t dims_;
  std::atomic<std::size_t> analyzer_calls_{0};
  std::atomic<std::size_t> embed_calls_{0};
};

struct GatewayOptions {
  double requests_per_minute = 0.0;
  std::map<std::string, std::string> embed_prompts = default_embed_prompts();

  static std::map<std::string, std::string> default_embed_prompts();
};

struct BatchItem {
  std::optional<EmbeddingVector> vector;
  std::optional<ErrorCode> error;
  std::string message;

  bool ok() const noexcept { return vector.has_value(); }
};

/// Uniform access to the analyzer and embedder. Every call is journaled once
/// with its request digest, latency and outcome; embeddings are routed
/// through the content-addressed cache.
class Gateway {
 public:
  Gateway(std::shared_ptr<Backend> backend, std::shared_ptr<EmbeddingCache> cache,
          std::shared_ptr<Journal> journal, GatewayOptions options = {});

  std::string analyze(const AnalyzerRequest& req);
  EmbeddingVector embed(const EmbedRequest& req);
  std::vector<BatchItem> embed_batch(std::span<const EmbedRequest> reqs, std::size_t max_in_flight);

  Journal& journal() noexcept { return *journal_; }
  std::shared_ptr<Journal> journal_ptr() const noexcept { return journal_; }
  Backend& backend() noexcept { return *backend_; }
  EmbeddingCache& cache() noexcept { return *cache_; }
  std::size_t dims() const noexcept { return cache_->dims(); }
  const std::string& embed_prompt(const std::string& name) const;

 private:
  std::int64_t elapsed_ms(std::chrono::steady_clock::time_point start) const;

  std::shared_ptr<Backend> backend_;
  std::shared_ptr<EmbeddingCache> cache_;
  std::shared_ptr<Journal> journal_;
  GatewayOptions options_;
  RateLimiter limiter_;
};

}  // namespace personadb
