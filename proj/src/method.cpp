#include "personadb/method.hpp"

#include <algorithm>
#include <array>

namespace personadb {

namespace {

constexpr std::array<std::pair<MethodName, std::string_view>, 10> kNames{{
    {MethodName::PersonaDb, "persona_db"},
    {MethodName::PersonaDbWoJoin, "persona_db_wo_join"},
    {MethodName::PersonaDbWoIp, "persona_db_wo_ip"},
    {MethodName::PersonaDbWoDp, "persona_db_wo_dp"},
    {MethodName::HRetrieval, "h_retrieval"},
    {MethodName::HRecency, "h_recency"},
    {MethodName::HistoryFull, "history_full"},
    {MethodName::IntSum, "intsum"},
    {MethodName::Random, "random"},
    {MethodName::Majority, "majority"},
}};

void drop_layer(std::vector<Layer>& layers, Layer l) { std::erase(layers, l); }

}  // namespace

std::string_view to_string(MethodName m) noexcept {
  for (const auto& [name, s] : kNames) {
    if (name == m) return s;
  }
  return "persona_db";
}

MethodName method_from_string(std::string_view s) {
  for (const auto& [name, str] : kNames) {
    if (str == s) return name;
  }
  throw Error(ErrorCode::InvalidConfig, "unknown method '" + std::string(s) + "'");
}

const std::vector<MethodName>& all_methods() {
  static const std::vector<MethodName> all = [] {
    std::vector<MethodName> v;
    for (const auto& [name, s] : kNames) v.push_back(name);
    return v;
  }();
  return all;
}

MethodConfig MethodConfig::resolved() const {
  MethodConfig m = *this;
  switch (name) {
    case MethodName::PersonaDb:
      break;
    case MethodName::PersonaDbWoJoin:
      m.composition.x = 0.0;
      break;
    case MethodName::PersonaDbWoIp:
      drop_layer(m.composition.pool_layers, Layer::InducedPersona);
      drop_layer(m.join.layers, Layer::InducedPersona);
      break;
    case MethodName::PersonaDbWoDp:
      drop_layer(m.composition.pool_layers, Layer::DistilledPersona);
      drop_layer(m.join.layers, Layer::DistilledPersona);
      break;
    case MethodName::HRetrieval:
    case MethodName::HRecency:
    case MethodName::HistoryFull:
    case MethodName::IntSum:
    case MethodName::Random:
    case MethodName::Majority:
      m.composition.pool_layers = {Layer::History};
      m.composition.x = 0.0;
      break;
  }
  return m;
}

std::string MethodConfig::template_name() const {
  switch (name) {
    case MethodName::PersonaDb:
    case MethodName::PersonaDbWoIp:
    case MethodName::PersonaDbWoDp:
      return "predict_full";
    case MethodName::PersonaDbWoJoin:
      return "predict_wo_join";
    default:
      return "predict_baseline";
  }
}

bool MethodConfig::uses_retrieval() const noexcept {
  switch (name) {
    case MethodName::PersonaDb:
    case MethodName::PersonaDbWoJoin:
    case MethodName::PersonaDbWoIp:
    case MethodName::PersonaDbWoDp:
    case MethodName::HRetrieval:
      return true;
    default:
      return false;
  }
}

bool MethodConfig::uses_analyzer() const noexcept { return name != MethodName::Random && name != MethodName::Majority; }

ordered_json MethodConfig::to_json() const {
  ordered_json j;
  j["name"] = std::string(to_string(name));
  j["composition"] = composition.to_json();
  j["join"] = join.to_json();
  j["seed"] = seed;
  return j;
}

}  // namespace personadb
