#pragma once

#include <string>
#include <vector>

#include "personadb/collab.hpp"
#include "personadb/gateway.hpp"
#include "personadb/store.hpp"
#include "personadb/types.hpp"

namespace personadb {

enum class Source { Self, Collaborative };
std::string_view to_string(Source s) noexcept;

/// Prompt ordering of the composed set: self block then collaborative block,
/// or a single list merged by score.
enum class ItemOrdering { SelfFirst, Interleaved };

struct CompositionConfig {
  std::size_t r = 40;  // retrieval capacity
  double x = 0.25;     // share of r reserved for collaborative items
  std::vector<Layer> pool_layers = {Layer::DistilledPersona, Layer::InducedPersona};
  bool backfill = true;
  ItemOrdering ordering = ItemOrdering::SelfFirst;

  void validate() const;
  ordered_json to_json() const;
};

struct RetrievalItem {
  std::string text;
  Source source = Source::Self;
  std::string source_user;
  Layer layer = Layer::History;
  std::string entry_id;
  double score = 0.0;  // -inf for zero-norm candidates

  bool operator==(const RetrievalItem&) const = default;
};

struct RetrievalSet {
  std::string query_digest;
  std::vector<RetrievalItem> items;
  std::size_t n_collab = 0;
  std::size_t n_self = 0;

  ordered_json to_json() const;
  std::string digest() const;
};

/// ceil(x * r), robust to x values like 0.15 that are not exact in binary.
std::size_t collaborative_quota(std::size_t r, double x);

/// Splits capacity r between two ranked pools. Collaborative items get
/// ceil(x*r) slots and self items the rest; with backfill an under-filled
/// quota is handed to the other pool.
RetrievalSet compose(const std::vector<RetrievalItem>& self_ranked, const std::vector<RetrievalItem>& collab_ranked,
                     const CompositionConfig& cfg);

/// Cosine between the query and each text, both embedded with the
/// "retrieval" prompt. Zero-norm candidates score -inf.
std::vector<double> score_pool(Gateway& gateway, const std::string& query, const std::vector<std::string>& pool,
                               std::size_t max_in_flight = 4);

/// Scores `pool` against `query` and sorts by descending score, keeping the
/// original order among equal scores.
std::vector<RetrievalItem> rank_pool(Gateway& gateway, const std::string& query, std::vector<RetrievalItem> pool,
                                     std::size_t max_in_flight = 4);

class Retriever {
 public:
  Retriever(const PersonaStore& store, Gateway& gateway, JoinEngine& joins, std::size_t max_in_flight = 4);

  RetrievalSet retrieve_for_query(const std::string& user_id, const std::string& query, const CompositionConfig& cfg,
                                  const JoinConfig& join_cfg);

  /// The user's own entries from `layers`, as unscored items.
  std::vector<RetrievalItem> self_pool(const PersonaDatabase& db, const std::vector<Layer>& layers) const;

 private:
  const PersonaStore& store_;
  Gateway& gateway_;
  JoinEngine& joins_;
  std::size_t max_in_flight_;
};

}  // namespace personadb
