#pragma once

#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "personadb/gateway.hpp"
#include "personadb/store.hpp"
#include "personadb/types.hpp"

namespace personadb {

struct JoinConfig {
  std::size_t k = 5;
  bool exclude_self = true;
  std::optional<std::vector<std::string>> candidate_set;  // default: users with a non-degraded Cache
  std::optional<double> min_similarity;
  std::vector<Layer> layers = {Layer::DistilledPersona, Layer::InducedPersona, Layer::History};

  void validate() const;
  ordered_json to_json() const;
  std::string digest() const;
};

struct Collaborator {
  std::string user_id;
  double psi = 0.0;
  bool operator==(const Collaborator&) const = default;
};

struct JoinedEntry {
  std::string source_user;
  PersonaEntry entry;
};

struct CollaborativeDatabase {
  std::string owner;
  std::string config_digest;
  std::vector<Collaborator> collaborators;  // psi descending, ties by user_id
  std::vector<JoinedEntry> entries;

  ordered_json summary_json() const;
};

/// Cosine similarity. Throws DimensionMismatch or ZeroNormVector.
double similarity(const EmbeddingVector& a, const EmbeddingVector& b);

/// Sorted `key: value` lines; the canonical text embedded for user matching.
std::string serialize_cache(const PersonaDatabase& db);

/// Ranks candidates by psi descending with ties broken by ascending user id and
/// keeps the first k.
std::vector<Collaborator> rank_top_k(std::vector<Collaborator> scored, std::size_t k);

class JoinEngine {
 public:
  JoinEngine(const PersonaStore& store, Gateway& gateway);

  /// Embeds the Cache with the "join" prompt and L2-normalizes it.
  EmbeddingVector embed_cache(const PersonaDatabase& db);
  /// Cache embedding for a stored user; nullopt when the vector has zero norm.
  std::optional<EmbeddingVector> cache_embedding(const std::string& user_id);

  std::vector<Collaborator> top_k_collaborators(const std::string& current, const JoinConfig& cfg);
  CollaborativeDatabase join(const std::string& current, const JoinConfig& cfg);

 private:
  struct Memo {
    std::string fingerprint;
    std::optional<EmbeddingVector> vector;
  };
  struct JoinMemo {
    std::map<std::string, std::string> fingerprints;
    CollaborativeDatabase result;
  };

  std::vector<std::string> default_candidates();

  const PersonaStore& store_;
  Gateway& gateway_;
  std::mutex mutex_;
  std::map<std::string, Memo> embeddings_;
  std::map<std::pair<std::string, std::string>, JoinMemo> joins_;
};

}  // namespace personadb
