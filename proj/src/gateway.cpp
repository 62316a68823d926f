#include "personadb/gateway.hpp"

#include <algorithm>
#include <atomic>
#include <thread>

#include "personadb/digest.hpp"
#include "personadb/store.hpp"
#include "personadb/text.hpp"

namespace personadb {

std::string request_digest(const AnalyzerRequest& req, DigestMode mode) {
  if (mode == DigestMode::Stable) {
    return sha256_hex(canonical_fields({req.prompt_name, req.rendered_prompt}));
  }
  const std::string temperature = nlohmann::json(req.temperature).dump();
  const std::string seed = req.seed ? std::to_string(*req.seed) : std::string("none");
  const std::string tokens = std::to_string(req.max_output_tokens);
  return sha256_hex(canonical_fields({req.prompt_name, req.rendered_prompt, temperature, seed, tokens}));
}

// Transcript

Transcript Transcript::load(const std::filesystem::path& path, TranscriptMode mode) {
  Transcript t(mode);
  const auto lines = text::split_lines(read_file(path));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (text::trim(lines[i]).empty()) continue;
    try {
      auto j = nlohmann::json::parse(lines[i]);
      t.add(j.at("digest").get<std::string>(), j.at("response").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ConfigError, path.string() + ":" + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return t;
}

Transcript Transcript::from_journal(std::span<const ordered_json> entries, TranscriptMode mode) {
  Transcript t(mode);
  const char* field = mode == TranscriptMode::Strict ? "digest_full" : "digest";
  for (const auto& e : entries) {
    if (e.value("kind", "") == "analyze" && e.value("outcome", "") == "ok" && e.contains("response")) {
      t.add(e.at(field).get<std::string>(), e.at("response").get<std::string>());
    }
  }
  return t;
}

void Transcript::save(const std::filesystem::path& path) const {
  std::string out;
  for (const auto& [digest, response] : responses_) {
    ordered_json j;
    j["digest"] = digest;
    j["response"] = response;
    out += j.dump() + "\n";
  }
  write_file_atomic(path, out);
}

void Transcript::add(std::string digest, std::string response) {
  responses_.insert_or_assign(std::move(digest), std::move(response));
}

void Transcript::add(const AnalyzerRequest& req, std::string response) {
  add(request_digest(req, digest_mode()), std::move(response));
}

const std::string* Transcript::find(const std::string& digest) const {
  auto it = responses_.find(digest);
  return it == responses_.end() ? nullptr : &it->second;
}

// BagOfWordsEmbedder

BagOfWordsEmbedder::BagOfWordsEmbedder(std::vector<std::string> vocabulary, bool normalize)
    : vocabulary_(std::move(vocabulary)), normalize_(normalize) {
  if (vocabulary_.empty()) throw Error(ErrorCode::InvalidConfig, "bag-of-words vocabulary is empty");
  for (std::size_t i = 0; i < vocabulary_.size(); ++i) {
    vocabulary_[i] = text::to_lower(vocabulary_[i]);
    if (!index_.emplace(vocabulary_[i], i).second) {
      throw Error(ErrorCode::InvalidConfig, "duplicate vocabulary token '" + vocabulary_[i] + "'");
    }
  }
}

std::vector<double> BagOfWordsEmbedder::counts(std::string_view s) const {
  std::vector<double> out(vocabulary_.size(), 0.0);
  for (const auto& tok : text::tokenize(s)) {
    if (auto it = index_.find(tok); it != index_.end()) out[it->second] += 1.0;
  }
  return out;
}

EmbeddingVector BagOfWordsEmbedder::embed(std::string_view s) const {
  auto v = make_embedding(counts(s), "bow");
  return normalize_ ? l2_normalized(v) : v;
}

// ScriptedBackend

ScriptedBackend::ScriptedBackend(Transcript transcript, Responder responder,
                                 std::shared_ptr<const BagOfWordsEmbedder> bow, std::size_t dims)
    : transcript_(std::move(transcript)), responder_(std::move(responder)), bow_(std::move(bow)), dims_(dims) {
  if (bow_) dims_ = bow_->dims();
  if (dims_ == 0) dims_ = 1;
}

std::string ScriptedBackend::embedder_tag() const {
  if (!bow_) return "scripted-replay";
  return "bow-" + std::to_string(bow_->dims()) + (bow_->normalize() ? "-l2" : "-raw");
}

AnalyzerReply ScriptedBackend::analyze(const AnalyzerRequest& req) {
  ++analyzer_calls_;
  const auto digest = request_digest(req, transcript_.digest_mode());
  if (const auto* hit = transcript_.find(digest)) return {*hit, 1};
  if (transcript_.mode() == TranscriptMode::Fallback && responder_) return {responder_(req), 1};
  throw Error(ErrorCode::TranscriptMiss, req.prompt_name + " request " + digest.substr(0, 16));
}

EmbedReply ScriptedBackend::embed(std::string_view instruction, std::string_view s) {
  ++embed_calls_;
  const auto digest = EmbeddingCacheKey::of(embedder_tag(), instruction, s).digest;
  if (const auto* hit = transcript_.find(digest)) {
    try {
      return {make_embedding(nlohmann::json::parse(*hit).get<std::vector<double>>(), embedder_tag()), 1};
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ConfigError, "transcript embedding for " + digest.substr(0, 16) + ": " + e.what());
    }
  }
  if (bow_) return {bow_->embed(s), 1};
  throw Error(ErrorCode::TranscriptMiss, "embedding " + digest.substr(0, 16));
}

// Gateway

std::map<std::string, std::string> GatewayOptions::default_embed_prompts() {
  return {
      {"join",
       "Represent this user persona summary for finding other users who hold similar values, interests and "
       "dispositions:"},
      {"retrieval",
       "Represent this text for retrieving statements about a user that help predict the user's reaction to a "
       "message:"},
  };
}

Gateway::Gateway(std::shared_ptr<Backend> backend, std::shared_ptr<EmbeddingCache> cache,
                 std::shared_ptr<Journal> journal, GatewayOptions options)
    : backend_(std::move(backend)),
      cache_(std::move(cache)),
      journal_(journal ? std::move(journal) : std::make_shared<Journal>()),
      options_(std::move(options)),
      limiter_(options_.requests_per_minute) {
  if (!backend_ || !cache_) throw Error(ErrorCode::InvalidConfig, "gateway needs a backend and a cache");
  if (backend_->embed_dims() != cache_->dims()) {
    throw Error(ErrorCode::DimensionMismatch, "backend embeds " + std::to_string(backend_->embed_dims()) +
                                                  " dims, cache expects " + std::to_string(cache_->dims()));
  }
}

std::int64_t Gateway::elapsed_ms(std::chrono::steady_clock::time_point start) const {
  // Deterministic backends record zero latency so journals are reproducible byte for byte.
  if (backend_->deterministic()) return 0;
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
}

const std::string& Gateway::embed_prompt(const std::string& name) const {
  auto it = options_.embed_prompts.find(name);
  if (it == options_.embed_prompts.end()) {
    throw Error(ErrorCode::PreconditionViolation, "no embedding prompt named '" + name + "'");
  }
  return it->second;
}

std::string Gateway::analyze(const AnalyzerRequest& req) {
  if (req.rendered_prompt.empty()) throw Error(ErrorCode::PreconditionViolation, "empty rendered prompt");
  if (req.temperature < 0.0 || req.temperature > 2.0) {
    throw Error(ErrorCode::PreconditionViolation, "temperature outside [0, 2]");
  }
  if (req.max_output_tokens <= 0) throw Error(ErrorCode::PreconditionViolation, "max_output_tokens must be positive");

  ordered_json entry;
  entry["kind"] = "analyze";
  entry["prompt_name"] = req.prompt_name;
  entry["digest"] = request_digest(req, DigestMode::Stable);
  entry["digest_full"] = request_digest(req, DigestMode::Full);

  limiter_.acquire();
  const auto start = std::chrono::steady_clock::now();
  try {
    auto reply = backend_->analyze(req);
    if (text::trim(reply.text).empty()) throw Error(ErrorCode::BackendUnavailable, "empty completion");
    entry["latency_ms"] = elapsed_ms(start);
    entry["attempts"] = reply.attempts;
    entry["outcome"] = "ok";
    entry["response"] = reply.text;
    journal_->append(entry);
    return reply.text;
  } catch (const Error& e) {
    entry["latency_ms"] = elapsed_ms(start);
    entry["outcome"] = to_string(e.code());
    entry["message"] = e.detail();
    journal_->append(entry);
    throw;
  }
}

EmbeddingVector Gateway::embed(const EmbedRequest& req) {
  if (req.text.empty()) throw Error(ErrorCode::PreconditionViolation, "empty embedding text");
  const auto& instruction = embed_prompt(req.prompt_name);
  const auto tag = backend_->embedder_tag();
  const auto key = EmbeddingCacheKey::of(tag, instruction, req.text);

  ordered_json entry;
  entry["kind"] = "embed";
  entry["prompt_name"] = req.prompt_name;
  entry["digest"] = key.digest;

  const auto start = std::chrono::steady_clock::now();
  bool computed = false;
  int attempts = 0;
  try {
    auto v = cache_->get_or_compute(key, tag, [&] {
      computed = true;
      limiter_.acquire();
      auto reply = backend_->embed(instruction, req.text);
      attempts = reply.attempts;
      return std::move(reply.vector);
    });
    entry["latency_ms"] = elapsed_ms(start);
    entry["outcome"] = computed ? "computed" : "cache_hit";
    if (computed) entry["attempts"] = attempts;
    journal_->append(entry);
    return v;
  } catch (const Error& e) {
    entry["latency_ms"] = elapsed_ms(start);
    entry["outcome"] = to_string(e.code());
    entry["message"] = e.detail();
    journal_->append(entry);
    throw;
  }
}

std::vector<BatchItem> Gateway::embed_batch(std::span<const EmbedRequest> reqs, std::size_t max_in_flight) {
  if (max_in_flight == 0) throw Error(ErrorCode::PreconditionViolation, "max_in_flight must be at least 1");
  std::vector<BatchItem> results(reqs.size());
  if (reqs.empty()) return results;

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < reqs.size(); i = next++) {
      try {
        results[i].vector = embed(reqs[i]);
      } catch (const Error& e) {
        results[i].error = e.code();
        results[i].message = e.detail();
      }
    }
  };
  {
    // A deterministic backend gains nothing from concurrency, and running it
    // in order keeps the journal byte-identical across runs.
    const std::size_t n_workers = backend_->deterministic() ? 1 : std::min(max_in_flight, reqs.size());
    std::vector<std::jthread> workers;
    workers.reserve(n_workers);
    for (std::size_t w = 0; w < n_workers; ++w) workers.emplace_back(worker);
  }
  return results;
}

}  // namespace personadb
