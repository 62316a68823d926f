#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "personadb/collab.hpp"
#include "personadb/retrieve.hpp"

namespace personadb {

enum class MethodName {
  PersonaDb,
  PersonaDbWoJoin,
  PersonaDbWoIp,
  PersonaDbWoDp,
  HRetrieval,
  HRecency,
  HistoryFull,
  IntSum,
  Random,
  Majority,
};

std::string_view to_string(MethodName m) noexcept;
MethodName method_from_string(std::string_view s);
const std::vector<MethodName>& all_methods();

struct MethodConfig {
  MethodName name = MethodName::PersonaDb;
  CompositionConfig composition;
  JoinConfig join;
  std::uint64_t seed = 0;

  /// Applies the per-method overrides: w/o JOIN forces x=0, the History
  /// baselines retrieve from History only, the DP/IP ablations drop their layer.
  MethodConfig resolved() const;
  /// Prediction template used by this method.
  std::string template_name() const;
  bool uses_retrieval() const noexcept;
  bool uses_analyzer() const noexcept;
  ordered_json to_json() const;
};

}  // namespace personadb
