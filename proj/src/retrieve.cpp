#include "personadb/retrieve.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "personadb/digest.hpp"

namespace personadb {

std::string_view to_string(Source s) noexcept { return s == Source::Self ? "self" : "collaborative"; }

void CompositionConfig::validate() const {
  if (r < 1) throw Error(ErrorCode::InvalidConfig, "composition.r must be at least 1");
  if (!(x >= 0.0 && x <= 1.0)) throw Error(ErrorCode::InvalidConfig, "composition.x must lie in [0, 1]");
  if (pool_layers.empty()) throw Error(ErrorCode::InvalidConfig, "composition.pool_layers must not be empty");
}

ordered_json CompositionConfig::to_json() const {
  ordered_json j;
  j["r"] = r;
  j["x"] = x;
  ordered_json layers = ordered_json::array();
  for (auto l : pool_layers) layers.push_back(std::string(to_string(l)));
  j["pool_layers"] = std::move(layers);
  j["backfill"] = backfill;
  j["ordering"] = ordering == ItemOrdering::SelfFirst ? "self_first" : "interleaved";
  return j;
}

ordered_json RetrievalSet::to_json() const {
  ordered_json j;
  j["query_digest"] = query_digest;
  j["n_self"] = n_self;
  j["n_collab"] = n_collab;
  ordered_json arr = ordered_json::array();
  for (const auto& it : items) {
    ordered_json ij;
    ij["source"] = std::string(to_string(it.source));
    ij["source_user"] = it.source_user;
    ij["layer"] = std::string(to_string(it.layer));
    ij["entry_id"] = it.entry_id;
    ij["score"] = std::isfinite(it.score) ? ordered_json(it.score) : ordered_json(nullptr);
    ij["text"] = it.text;
    arr.push_back(std::move(ij));
  }
  j["items"] = std::move(arr);
  return j;
}

std::string RetrievalSet::digest() const { return sha256_hex(to_json().dump()); }

std::size_t collaborative_quota(std::size_t r, double x) {
  const double want = x * static_cast<double>(r);
  const auto q = static_cast<std::size_t>(std::ceil(want - 1e-9));
  return std::min(q, r);
}

RetrievalSet compose(const std::vector<RetrievalItem>& self_ranked, const std::vector<RetrievalItem>& collab_ranked,
                     const CompositionConfig& cfg) {
  cfg.validate();
  const std::size_t quota = collaborative_quota(cfg.r, cfg.x);
  std::size_t n_collab = std::min(quota, collab_ranked.size());
  std::size_t n_self = std::min(cfg.r - quota, self_ranked.size());
  if (cfg.backfill) {
    std::size_t spare = cfg.r - n_collab - n_self;
    const std::size_t more_self = std::min(spare, self_ranked.size() - n_self);
    n_self += more_self;
    spare -= more_self;
    n_collab += std::min(spare, collab_ranked.size() - n_collab);
  }

  RetrievalSet out;
  out.n_self = n_self;
  out.n_collab = n_collab;
  out.items.assign(self_ranked.begin(), self_ranked.begin() + static_cast<std::ptrdiff_t>(n_self));
  out.items.insert(out.items.end(), collab_ranked.begin(), collab_ranked.begin() + static_cast<std::ptrdiff_t>(n_collab));
  if (cfg.ordering == ItemOrdering::Interleaved) {
    std::stable_sort(out.items.begin(), out.items.end(),
                     [](const RetrievalItem& a, const RetrievalItem& b) { return a.score > b.score; });
  }
  return out;
}

std::vector<double> score_pool(Gateway& gateway, const std::string& query, const std::vector<std::string>& pool,
                               std::size_t max_in_flight) {
  if (pool.empty()) throw Error(ErrorCode::PreconditionViolation, "score_pool needs a non-empty pool");
  const auto q = gateway.embed({"retrieval", query});
  std::vector<EmbedRequest> reqs;
  reqs.reserve(pool.size());
  for (const auto& t : pool) reqs.push_back({"retrieval", t});
  auto vecs = gateway.embed_batch(reqs, max_in_flight);

  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  std::vector<double> scores(pool.size(), kNegInf);
  if (q.norm() == 0.0) {
    gateway.journal().warn("ZeroNormVector", "query embedding has zero norm; every candidate scored -inf",
                           {{"query", query}});
    return scores;
  }
  for (std::size_t i = 0; i < pool.size(); ++i) {
    auto& item = vecs[i];
    if (!item.ok()) throw Error(*item.error, item.message);
    if (item.vector->norm() == 0.0) {
      gateway.journal().warn("ZeroNormVector", "candidate embedding has zero norm; scored -inf",
                             {{"text", pool[i]}});
      continue;
    }
    scores[i] = similarity(q, *item.vector);
  }
  return scores;
}

std::vector<RetrievalItem> rank_pool(Gateway& gateway, const std::string& query, std::vector<RetrievalItem> pool,
                                     std::size_t max_in_flight) {
  if (pool.empty()) return pool;
  std::vector<std::string> texts;
  texts.reserve(pool.size());
  for (const auto& it : pool) texts.push_back(it.text);
  const auto scores = score_pool(gateway, query, texts, max_in_flight);
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i].score = scores[i];
  std::stable_sort(pool.begin(), pool.end(), [](const RetrievalItem& a, const RetrievalItem& b) { return a.score > b.score; });
  return pool;
}

Retriever::Retriever(const PersonaStore& store, Gateway& gateway, JoinEngine& joins, std::size_t max_in_flight)
    : store_(store), gateway_(gateway), joins_(joins), max_in_flight_(max_in_flight) {}

std::vector<RetrievalItem> Retriever::self_pool(const PersonaDatabase& db, const std::vector<Layer>& layers) const {
  std::vector<RetrievalItem> out;
  for (auto layer : layers) {
    for (auto& e : db.layer_view(layer)) {
      out.push_back({std::move(e.text), Source::Self, db.user_id, layer, std::move(e.entry_id), 0.0});
    }
  }
  return out;
}

RetrievalSet Retriever::retrieve_for_query(const std::string& user_id, const std::string& query,
                                           const CompositionConfig& cfg, const JoinConfig& join_cfg) {
  cfg.validate();
  if (!store_.has_user(user_id)) throw Error(ErrorCode::UnknownUser, user_id);
  const auto db = store_.load_database(user_id);
  auto own = self_pool(db, cfg.pool_layers);

  std::vector<RetrievalItem> collab;
  if (collaborative_quota(cfg.r, cfg.x) > 0) {
    std::unordered_set<std::string> own_texts;
    for (const auto& it : own) own_texts.insert(it.text);
    const auto joined = joins_.join(user_id, join_cfg);
    for (const auto& je : joined.entries) {
      if (std::find(cfg.pool_layers.begin(), cfg.pool_layers.end(), je.entry.layer) == cfg.pool_layers.end()) continue;
      if (own_texts.count(je.entry.text)) continue;
      collab.push_back({je.entry.text, Source::Collaborative, je.source_user, je.entry.layer, je.entry.entry_id, 0.0});
    }
  }

  auto out = compose(rank_pool(gateway_, query, std::move(own), max_in_flight_),
                     rank_pool(gateway_, query, std::move(collab), max_in_flight_), cfg);
  out.query_digest = sha256_hex(query);
  return out;
}

}  // namespace personadb
