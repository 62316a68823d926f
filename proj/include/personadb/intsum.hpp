#pragma once

#include <map>
#include <mutex>
#include <string>

#include "personadb/gateway.hpp"
#include "personadb/infer.hpp"
#include "personadb/template.hpp"

namespace personadb {

/// Task-aware user summaries for the retrieval-free baseline. One analyzer
/// call per (user, task kind); later requests hit the in-memory cache.
class IntSumCache {
 public:
  IntSumCache(Gateway& gateway, PromptSet prompts, std::size_t history_budget_chars = 6000);

  /// Throws EmptyHistory. The most recent records that fit the budget are
  /// summarized (always at least one).
  std::string summary(const PersonaDatabase& db, TaskKind kind);
  std::size_t size() const;

 private:
  Gateway& gateway_;
  PromptSet prompts_;
  std::size_t budget_;
  mutable std::mutex mutex_;
  std::map<std::pair<std::string, TaskKind>, std::string> cache_;
};

}  // namespace personadb
