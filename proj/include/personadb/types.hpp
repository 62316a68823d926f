#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace personadb {

using ordered_json = nlohmann::ordered_json;

/// The four layers of a persona database, ordered from raw to most abstract.
/// Provenance edges always point from a layer to a strictly lower one.
enum class Layer { History = 0, DistilledPersona = 1, InducedPersona = 2, Cache = 3 };

std::string_view to_string(Layer layer) noexcept;
Layer layer_from_string(std::string_view name);
inline int layer_rank(Layer layer) noexcept { return static_cast<int>(layer); }

enum class RecordKind { Post, Response, Profile, SurveyAnswer };

std::string_view to_string(RecordKind kind) noexcept;
RecordKind record_kind_from_string(std::string_view name);

struct UserRecord {
  std::string record_id;
  std::string user_id;
  std::int64_t timestamp = 0;
  RecordKind kind = RecordKind::Post;
  std::string text;
  std::optional<std::map<std::string, std::string>> meta;

  bool operator==(const UserRecord&) const = default;
};

struct PersonaEntry {
  std::string entry_id;
  Layer layer = Layer::DistilledPersona;
  std::string key;  // taxonomy key, Cache entries only
  std::string text;
  std::vector<std::string> provenance;
  std::int64_t created_at = 0;

  bool operator==(const PersonaEntry&) const = default;
};

/// Default persona categories used as the Cache layer's keys.
const std::vector<std::string>& default_taxonomy();

inline constexpr std::string_view kUnknownValue = "unknown";

struct PersonaDatabase {
  std::string user_id;
  std::vector<std::string> taxonomy = default_taxonomy();
  std::string template_set = "default";
  bool cache_degraded = false;

  std::vector<UserRecord> history;
  std::vector<PersonaEntry> distilled;
  std::vector<PersonaEntry> induced;
  std::vector<PersonaEntry> cache;

  const std::vector<PersonaEntry>& entries(Layer layer) const;
  std::vector<PersonaEntry>& entries(Layer layer);

  /// History records viewed as entries (entry_id = record_id).
  std::vector<PersonaEntry> history_entries() const;

  /// Entries of `layer`, including History as PersonaEntry views.
  std::vector<PersonaEntry> layer_view(Layer layer) const;

  const PersonaEntry* find_cache(std::string_view key) const;

  bool operator==(const PersonaDatabase&) const = default;
};

/// Dense embedding. Values are always representable as float32 so that a
/// vector read back from the on-disk cache equals the freshly computed one.
struct EmbeddingVector {
  std::vector<double> values;
  std::string model_tag;

  std::size_t dims() const noexcept { return values.size(); }
  double norm() const noexcept;
  bool operator==(const EmbeddingVector&) const = default;
};

/// Rounds every component to float32 precision; rejects non-finite values.
EmbeddingVector make_embedding(std::vector<double> values, std::string model_tag);
EmbeddingVector l2_normalized(const EmbeddingVector& v);

// JSON codecs. Field order is fixed so files diff cleanly.
ordered_json to_json(const UserRecord& record);
UserRecord user_record_from_json(const nlohmann::json& j);
ordered_json to_json(const PersonaEntry& entry);
PersonaEntry persona_entry_from_json(const nlohmann::json& j, Layer layer);

/// Validates the UserRecord invariants, throwing MalformedRecord.
void validate_record(const UserRecord& record);

/// Checks provenance soundness: every reference resolves within the database
/// and points to a strictly lower layer. Returns a description of the first
/// violation, or nullopt when the graph is a valid DAG.
std::optional<std::string> check_provenance(const PersonaDatabase& db);

}  // namespace personadb
