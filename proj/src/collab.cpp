#include "personadb/collab.hpp"

#include <algorithm>
#include <cmath>

#include "personadb/digest.hpp"

namespace personadb {

void JoinConfig::validate() const {
  if (k < 1) throw Error(ErrorCode::InvalidConfig, "join.k must be at least 1");
  if (layers.empty()) throw Error(ErrorCode::InvalidConfig, "join.layers must not be empty");
  for (auto l : layers) {
    if (l == Layer::Cache) throw Error(ErrorCode::InvalidConfig, "join.layers cannot include Cache");
  }
}

ordered_json JoinConfig::to_json() const {
  ordered_json j;
  j["k"] = k;
  j["exclude_self"] = exclude_self;
  j["candidate_set"] = candidate_set ? ordered_json(*candidate_set) : ordered_json(nullptr);
  j["min_similarity"] = min_similarity ? ordered_json(*min_similarity) : ordered_json(nullptr);
  ordered_json layer_names = ordered_json::array();
  for (auto l : layers) layer_names.push_back(std::string(to_string(l)));
  j["layers"] = std::move(layer_names);
  return j;
}

std::string JoinConfig::digest() const { return sha256_hex(to_json().dump()); }

ordered_json CollaborativeDatabase::summary_json() const {
  ordered_json j;
  j["owner"] = owner;
  j["config_digest"] = config_digest;
  ordered_json collabs = ordered_json::array();
  for (const auto& c : collaborators) {
    ordered_json cj;
    cj["user_id"] = c.user_id;
    cj["psi"] = c.psi;
    collabs.push_back(std::move(cj));
  }
  j["collaborators"] = std::move(collabs);
  j["entry_count"] = entries.size();
  return j;
}

double similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dims() != b.dims()) {
    throw Error(ErrorCode::DimensionMismatch, std::to_string(a.dims()) + " vs " + std::to_string(b.dims()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.dims(); ++i) {
    dot += a.values[i] * b.values[i];
    na += a.values[i] * a.values[i];
    nb += b.values[i] * b.values[i];
  }
  if (na == 0.0 || nb == 0.0) throw Error(ErrorCode::ZeroNormVector, "cosine of a zero vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

std::string serialize_cache(const PersonaDatabase& db) {
  std::vector<std::string> lines;
  for (const auto& e : db.cache) lines.push_back(e.key + ": " + e.text);
  std::sort(lines.begin(), lines.end());
  std::string out;
  for (const auto& l : lines) {
    if (!out.empty()) out += '\n';
    out += l;
  }
  return out;
}

std::vector<Collaborator> rank_top_k(std::vector<Collaborator> scored, std::size_t k) {
  std::sort(scored.begin(), scored.end(), [](const Collaborator& a, const Collaborator& b) {
    if (a.psi != b.psi) return a.psi > b.psi;
    return a.user_id < b.user_id;
  });
  if (scored.size() > k) scored.resize(k);
  return scored;
}

JoinEngine::JoinEngine(const PersonaStore& store, Gateway& gateway) : store_(store), gateway_(gateway) {}

EmbeddingVector JoinEngine::embed_cache(const PersonaDatabase& db) {
  if (db.cache.empty()) throw Error(ErrorCode::EmptyCache, db.user_id);
  return l2_normalized(gateway_.embed({"join", serialize_cache(db)}));
}

std::optional<EmbeddingVector> JoinEngine::cache_embedding(const std::string& user_id) {
  const auto fp = store_.persona_fingerprint(user_id);
  {
    std::lock_guard lock(mutex_);
    if (auto it = embeddings_.find(user_id); it != embeddings_.end() && it->second.fingerprint == fp) {
      return it->second.vector;
    }
  }
  auto v = embed_cache(store_.load_database(user_id));
  std::optional<EmbeddingVector> result;
  if (v.norm() > 0.0) {
    result = std::move(v);
  } else {
    gateway_.journal().warn("ZeroNormVector", "cache embedding has zero norm; user excluded from candidacy",
                            {{"user_id", user_id}});
  }
  std::lock_guard lock(mutex_);
  embeddings_[user_id] = {fp, result};
  return result;
}

std::vector<std::string> JoinEngine::default_candidates() {
  std::vector<std::string> out;
  for (const auto& id : store_.user_ids()) {
    const auto db = store_.load_database(id);
    if (!db.cache.empty() && !db.cache_degraded) out.push_back(id);
  }
  return out;
}

std::vector<Collaborator> JoinEngine::top_k_collaborators(const std::string& current, const JoinConfig& cfg) {
  cfg.validate();
  if (!store_.has_user(current)) throw Error(ErrorCode::UnknownUser, current);
  const auto self_vec = cache_embedding(current);
  if (!self_vec) throw Error(ErrorCode::ZeroNormVector, "cache embedding of " + current + " has zero norm");

  const auto candidates = cfg.candidate_set ? *cfg.candidate_set : default_candidates();
  std::vector<Collaborator> scored;
  for (const auto& id : candidates) {
    if (cfg.exclude_self && id == current) continue;
    if (!store_.has_user(id)) throw Error(ErrorCode::UnknownUser, id);
    if (std::any_of(scored.begin(), scored.end(), [&](const auto& c) { return c.user_id == id; })) continue;
    const auto vec = cache_embedding(id);
    if (!vec) continue;
    const double psi = similarity(*self_vec, *vec);
    if (cfg.min_similarity && psi < *cfg.min_similarity) continue;
    scored.push_back({id, psi});
  }
  if (scored.empty()) throw Error(ErrorCode::NoCandidates, "no collaborators for " + current);
  return rank_top_k(std::move(scored), cfg.k);
}

CollaborativeDatabase JoinEngine::join(const std::string& current, const JoinConfig& cfg) {
  const auto digest = cfg.digest();
  const auto memo_key = std::make_pair(current, digest);
  {
    std::lock_guard lock(mutex_);
    if (auto it = joins_.find(memo_key); it != joins_.end()) {
      const bool fresh = std::all_of(it->second.fingerprints.begin(), it->second.fingerprints.end(),
                                     [&](const auto& kv) { return store_.persona_fingerprint(kv.first) == kv.second; });
      if (fresh) return it->second.result;
    }
  }

  CollaborativeDatabase out;
  out.owner = current;
  out.config_digest = digest;
  out.collaborators = top_k_collaborators(current, cfg);

  JoinMemo memo;
  // Any user's persona can change the ranking, not only the selected ones.
  for (const auto& id : store_.user_ids()) memo.fingerprints[id] = store_.persona_fingerprint(id);
  for (const auto& c : out.collaborators) {
    const auto db = store_.load_database(c.user_id);
    for (auto layer : cfg.layers) {
      for (auto& e : db.layer_view(layer)) out.entries.push_back({c.user_id, std::move(e)});
    }
  }
  memo.result = out;
  std::lock_guard lock(mutex_);
  joins_[memo_key] = std::move(memo);
  return out;
}

}  // namespace personadb
