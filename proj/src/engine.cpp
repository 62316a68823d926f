#include "personadb/engine.hpp"

#include "personadb/http_backend.hpp"
#include "personadb/synth.hpp"

namespace personadb {

std::shared_ptr<Backend> make_backend(const RunConfig& cfg) {
  const auto& b = cfg.backend;
  if (b.kind == "http") return std::make_shared<HttpBackend>(b.http);

  const auto& s = b.scripted;
  Transcript transcript(s.transcript_mode);
  if (s.transcript) transcript = Transcript::load(*s.transcript, s.transcript_mode);

  Responder responder;
  if (s.responder == "synth") {
    if (!s.oracle_key) throw Error(ErrorCode::ConfigError, "backend.scripted.oracle_key is required by the synth responder");
    auto key = std::make_shared<const OracleKey>(oracle_key_from_json(nlohmann::json::parse(read_file(*s.oracle_key))));
    responder = synth_responder(std::move(key));
  }

  std::shared_ptr<const BagOfWordsEmbedder> bow;
  std::size_t dims = s.embed_dims;
  if (s.vocabulary) {
    std::vector<std::string> vocab;
    try {
      vocab = nlohmann::json::parse(read_file(*s.vocabulary)).get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ConfigError, s.vocabulary->string() + ": " + e.what());
    }
    bow = std::make_shared<const BagOfWordsEmbedder>(std::move(vocab), s.normalize);
    dims = bow->dims();
  }
  if (dims == 0) {
    throw Error(ErrorCode::ConfigError, "scripted backend needs backend.scripted.vocabulary or embed_dims");
  }
  return std::make_shared<ScriptedBackend>(std::move(transcript), std::move(responder), std::move(bow), dims);
}

Engine::Engine(const RunConfig& cfg, std::shared_ptr<Journal> journal, std::shared_ptr<Backend> backend)
    : cfg_(cfg), journal_(std::move(journal)) {
  if (!backend) backend = make_backend(cfg_);
  store_ = std::make_unique<PersonaStore>(cfg_.store_path, cfg_.refine.taxonomy);
  auto cache = std::make_shared<EmbeddingCache>(cfg_.backend.embedding_cache, backend->embed_dims());
  GatewayOptions gopts;
  gopts.requests_per_minute = cfg_.backend.requests_per_minute;
  gateway_ = std::make_unique<Gateway>(std::move(backend), std::move(cache), journal_, gopts);
  joins_ = std::make_unique<JoinEngine>(*store_, *gateway_);
  retriever_ = std::make_unique<Retriever>(*store_, *gateway_, *joins_, cfg_.backend.max_in_flight);
  intsum_ = std::make_unique<IntSumCache>(*gateway_, cfg_.refine.prompts);
  predictor_ = std::make_unique<Predictor>(*store_, *gateway_, *retriever_, *intsum_, cfg_.refine.prompts, cfg_.predict);
}

}  // namespace personadb
