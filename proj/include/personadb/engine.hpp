#pragma once

#include <memory>

#include "personadb/collab.hpp"
#include "personadb/config.hpp"
#include "personadb/evalx.hpp"
#include "personadb/gateway.hpp"
#include "personadb/intsum.hpp"
#include "personadb/predict.hpp"
#include "personadb/retrieve.hpp"
#include "personadb/store.hpp"

namespace personadb {

/// Builds the backend described by `cfg`. Scripted backends load their
/// transcript, oracle key and vocabulary from the configured paths.
std::shared_ptr<Backend> make_backend(const RunConfig& cfg);

/// Every component a run needs, wired from one resolved config.
class Engine {
 public:
  Engine(const RunConfig& cfg, std::shared_ptr<Journal> journal, std::shared_ptr<Backend> backend = nullptr);

  const RunConfig& config() const noexcept { return cfg_; }
  PersonaStore& store() noexcept { return *store_; }
  Gateway& gateway() noexcept { return *gateway_; }
  JoinEngine& joins() noexcept { return *joins_; }
  Retriever& retriever() noexcept { return *retriever_; }
  Predictor& predictor() noexcept { return *predictor_; }
  IntSumCache& intsum() noexcept { return *intsum_; }
  Journal& journal() noexcept { return *journal_; }

 private:
  RunConfig cfg_;
  std::shared_ptr<Journal> journal_;
  std::unique_ptr<PersonaStore> store_;
  std::unique_ptr<Gateway> gateway_;
  std::unique_ptr<JoinEngine> joins_;
  std::unique_ptr<Retriever> retriever_;
  std::unique_ptr<IntSumCache> intsum_;
  std::unique_ptr<Predictor> predictor_;
};

}  // namespace personadb
