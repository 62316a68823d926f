#pragma once

#include <map>
#include <optional>

#include "personadb/infer.hpp"
#include "personadb/intsum.hpp"
#include "personadb/method.hpp"
#include "personadb/retrieve.hpp"

namespace personadb {

struct PredictOptions {
  PromptBudget budget;
  double temperature = 0.0;
  std::optional<std::int64_t> seed = 0;
  int max_output_tokens = 64;
};

/// Deterministic label drawn from (seed, task_id) for the random baseline.
Label random_label(const QueryTask& task, std::uint64_t seed);

/// Retrieval, prompt assembly, analyzer call and parsing for one task.
class Predictor {
 public:
  Predictor(const PersonaStore& store, Gateway& gateway, Retriever& retriever, IntSumCache& intsum, PromptSet prompts,
            PredictOptions options = {});

  /// The evidence a method places in the prompt for `task`.
  RetrievalSet context_for(const QueryTask& task, const MethodConfig& method);
  /// Rendered prompt without calling the analyzer.
  std::string prompt_for(const QueryTask& task, const MethodConfig& method, RetrievalSet* context_out = nullptr);

  Prediction predict(const QueryTask& task, const MethodConfig& method);

  /// Label returned by the majority baseline for tasks of `kind`.
  void set_majority(TaskKind kind, Label label) { majority_[kind] = std::move(label); }

 private:
  const PersonaStore& store_;
  Gateway& gateway_;
  Retriever& retriever_;
  IntSumCache& intsum_;
  PromptSet prompts_;
  PredictOptions options_;
  std::map<TaskKind, Label> majority_;
};

}  // namespace personadb
