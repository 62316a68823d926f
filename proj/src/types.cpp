#include "personadb/types.hpp"

#include <cmath>
#include <unordered_map>
#include <utility>

#include "personadb/error.hpp"

namespace personadb {

std::string_view to_string(Layer layer) noexcept {
  switch (layer) {
    case Layer::History: return "History";
    case Layer::DistilledPersona: return "DistilledPersona";
    case Layer::InducedPersona: return "InducedPersona";
    case Layer::Cache: return "Cache";
  }
  return "History";
}

Layer layer_from_string(std::string_view name) {
  if (name == "History") return Layer::History;
  if (name == "DistilledPersona" || name == "DP") return Layer::DistilledPersona;
  if (name == "InducedPersona" || name == "IP") return Layer::InducedPersona;
  if (name == "Cache") return Layer::Cache;
  throw Error(ErrorCode::InvalidConfig, "unknown layer '" + std::string(name) + "'");
}

std::string_view to_string(RecordKind kind) noexcept {
  switch (kind) {
    case RecordKind::Post: return "post";
    case RecordKind::Response: return "response";
    case RecordKind::Profile: return "profile";
    case RecordKind::SurveyAnswer: return "survey_answer";
  }
  return "post";
}

RecordKind record_kind_from_string(std::string_view name) {
  if (name == "post") return RecordKind::Post;
  if (name == "response") return RecordKind::Response;
  if (name == "profile") return RecordKind::Profile;
  if (name == "survey_answer") return RecordKind::SurveyAnswer;
  throw Error(ErrorCode::MalformedRecord, "unknown record kind '" + std::string(name) + "'");
}

const std::vector<std::string>& default_taxonomy() {
  static const std::vector<std::string> taxonomy = {
      "values_and_beliefs", "interests",        "political_leaning",     "communication_style",
      "domain_expertise",   "sentiment_disposition", "demographics"};
  return taxonomy;
}

const std::vector<PersonaEntry>& PersonaDatabase::entries(Layer layer) const {
  switch (layer) {
    case Layer::DistilledPersona: return distilled;
    case Layer::InducedPersona: return induced;
    case Layer::Cache: return cache;
    case Layer::History: break;
  }
  throw Error(ErrorCode::PreconditionViolation, "History is stored as records; use history_entries()");
}

std::vector<PersonaEntry>& PersonaDatabase::entries(Layer layer) {
  return const_cast<std::vector<PersonaEntry>&>(std::as_const(*this).entries(layer));
}

std::vector<PersonaEntry> PersonaDatabase::history_entries() const {
  std::vector<PersonaEntry> out;
  out.reserve(history.size());
  for (const auto& r : history) {
    out.push_back(PersonaEntry{r.record_id, Layer::History, "", r.text, {}, r.timestamp});
  }
  return out;
}

std::vector<PersonaEntry> PersonaDatabase::layer_view(Layer layer) const {
  if (layer == Layer::History) return history_entries();
  return entries(layer);
}

const PersonaEntry* PersonaDatabase::find_cache(std::string_view key) const {
  for (const auto& e : cache) {
    if (e.key == key) return &e;
  }
  return nullptr;
}

double EmbeddingVector::norm() const noexcept {
  double sum = 0.0;
  for (double v : values) sum += v * v;
  return std::sqrt(sum);
}

EmbeddingVector make_embedding(std::vector<double> values, std::string model_tag) {
  for (double& v : values) {
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::PreconditionViolation, "embedding contains a non-finite value");
    }
    v = static_cast<double>(static_cast<float>(v));
  }
  return EmbeddingVector{std::move(values), std::move(model_tag)};
}

EmbeddingVector l2_normalized(const EmbeddingVector& v) {
  const double n = v.norm();
  if (n == 0.0) return v;
  std::vector<double> out(v.values.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v.values[i] / n;
  return make_embedding(std::move(out), v.model_tag);
}

ordered_json to_json(const UserRecord& record) {
  ordered_json j;
  j["record_id"] = record.record_id;
  j["user_id"] = record.user_id;
  j["timestamp"] = record.timestamp;
  j["kind"] = to_string(record.kind);
  j["text"] = record.text;
  if (record.meta) {
    ordered_json meta = ordered_json::object();
    for (const auto& [k, v] : *record.meta) meta[k] = v;
    j["meta"] = std::move(meta);
  } else {
    j["meta"] = nullptr;
  }
  return j;
}

namespace {

template <typename T>
T require_field(const nlohmann::json& j, const char* field) {
  if (!j.is_object() || !j.contains(field) || j.at(field).is_null()) {
    throw Error(ErrorCode::MalformedRecord, std::string("missing field '") + field + "'");
  }
  try {
    return j.at(field).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::MalformedRecord, std::string("field '") + field + "' has the wrong type");
  }
}

}  // namespace

UserRecord user_record_from_json(const nlohmann::json& j) {
  UserRecord r;
  r.record_id = require_field<std::string>(j, "record_id");
  r.user_id = require_field<std::string>(j, "user_id");
  r.timestamp = require_field<std::int64_t>(j, "timestamp");
  r.kind = record_kind_from_string(require_field<std::string>(j, "kind"));
  r.text = require_field<std::string>(j, "text");
  if (j.contains("meta") && !j.at("meta").is_null()) {
    try {
      r.meta = j.at("meta").get<std::map<std::string, std::string>>();
    } catch (const nlohmann::json::exception&) {
      throw Error(ErrorCode::MalformedRecord, "field 'meta' must map strings to strings");
    }
  }
  return r;
}

ordered_json to_json(const PersonaEntry& entry) {
  ordered_json j;
  j["entry_id"] = entry.entry_id;
  j["key"] = entry.key;
  j["text"] = entry.text;
  j["provenance"] = entry.provenance;
  j["created_at"] = entry.created_at;
  return j;
}

PersonaEntry persona_entry_from_json(const nlohmann::json& j, Layer layer) {
  PersonaEntry e;
  e.layer = layer;
  e.entry_id = j.at("entry_id").get<std::string>();
  e.key = j.value("key", std::string{});
  e.text = j.at("text").get<std::string>();
  e.provenance = j.value("provenance", std::vector<std::string>{});
  e.created_at = j.value("created_at", std::int64_t{0});
  return e;
}

void validate_record(const UserRecord& record) {
  if (record.record_id.empty()) throw Error(ErrorCode::MalformedRecord, "empty record_id");
  if (record.user_id.empty()) throw Error(ErrorCode::MalformedRecord, "record " + record.record_id + ": empty user_id");
  if (record.text.empty()) throw Error(ErrorCode::MalformedRecord, "record " + record.record_id + ": empty text");
  if (record.timestamp < 0) throw Error(ErrorCode::MalformedRecord, "record " + record.record_id + ": negative timestamp");
}

std::optional<std::string> check_provenance(const PersonaDatabase& db) {
  std::unordered_map<std::string, Layer> ids;
  for (const auto& r : db.history) ids.emplace(r.record_id, Layer::History);
  for (Layer layer : {Layer::DistilledPersona, Layer::InducedPersona, Layer::Cache}) {
    for (const auto& e : db.entries(layer)) {
      if (e.layer != layer) return "entry " + e.entry_id + " stored under the wrong layer";
      if (!ids.emplace(e.entry_id, layer).second) return "duplicate id " + e.entry_id;
    }
  }
  for (Layer layer : {Layer::DistilledPersona, Layer::InducedPersona, Layer::Cache}) {
    for (const auto& e : db.entries(layer)) {
      if (layer != Layer::Cache && e.provenance.empty()) return "entry " + e.entry_id + " has no provenance";
      if (layer == Layer::Cache) {
        bool known = false;
        for (const auto& k : db.taxonomy) known = known || k == e.key;
        if (!known) return "cache key '" + e.key + "' not in taxonomy";
      }
      for (const auto& ref : e.provenance) {
        auto it = ids.find(ref);
        if (it == ids.end()) return "entry " + e.entry_id + " cites unknown id " + ref;
        if (layer_rank(it->second) >= layer_rank(layer)) {
          return "entry " + e.entry_id + " cites " + ref + " from a layer that is not lower";
        }
        if (layer == Layer::DistilledPersona && it->second != Layer::History) {
          return "distilled entry " + e.entry_id + " cites a non-History id";
        }
      }
    }
  }
  std::map<std::string, int> per_key;
  for (const auto& e : db.cache) {
    if (++per_key[e.key] > 1) return "duplicate cache key " + e.key;
  }
  return std::nullopt;
}

}  // namespace personadb
