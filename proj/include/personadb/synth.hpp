#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "personadb/gateway.hpp"
#include "personadb/infer.hpp"
#include "personadb/types.hpp"

namespace personadb {

struct SynthConfig {
  std::size_t n_users = 20;
  std::size_t n_clusters = 4;
  std::size_t n_domains = 6;
  std::size_t value_vocab_size = 8;   // tokens per cluster value vocabulary
  std::size_t domain_vocab_size = 10; // tokens per domain vocabulary
  std::size_t records_min = 12;
  std::size_t records_max = 20;
  double lurker_fraction = 0.2;
  std::size_t lurker_records_min = 1;
  std::size_t lurker_records_max = 3;
  std::size_t domain_coverage = 3;  // domains per regular user
  std::size_t lurker_coverage = 1;
  std::size_t tokens_per_record = 3;  // drawn from each of the domain and value vocabularies
  std::size_t tasks_per_user = 3;
  std::uint64_t seed = 7;

  void validate() const;
  ordered_json to_json() const;
};

/// Domain tag (`dom3`) and its vocabulary (`dom3_tok0` ...).
std::string domain_tag(std::size_t d);
std::string domain_token(std::size_t d, std::size_t j);
std::string value_token(std::size_t cluster, std::size_t j);

struct OracleEntry {
  std::string user_id;
  std::string required_domain;
  std::vector<std::string> vocabulary;
  Label gold;
  std::size_t n_options = 0;  // opinion_choice tasks only
  bool lurker = false;
  bool domain_covered = false;  // whether the user's own records cover the domain
};

using OracleKey = std::map<std::string, OracleEntry>;

ordered_json oracle_key_to_json(const OracleKey& key);
OracleKey oracle_key_from_json(const nlohmann::json& j);

struct SynthUser {
  std::string user_id;
  std::size_t cluster = 0;
  bool lurker = false;
  std::vector<std::size_t> domains;  // covered domains, sorted
};

struct SynthPopulation {
  std::vector<SynthUser> users;
  std::vector<UserRecord> records;
  std::vector<QueryTask> tasks;
  OracleKey key;
  std::vector<std::string> vocabulary;  // tags, domain tokens, value tokens

  /// Writes corpus.jsonl, tasks.jsonl, oracle_key.json and vocabulary.json.
  void write(const std::filesystem::path& dir) const;
};

/// Seeded generator. Users are split into clusters that share a value
/// vocabulary; each regular user writes about a few domains and every domain
/// is covered by some regular user in every cluster. Lurkers get few records,
/// fewer domains, and tasks only on domains they never wrote about.
SynthPopulation generate_population(const SynthConfig& cfg);

/// Gold label in the strict grammar when the prompt holds a token from the
/// task's domain vocabulary, else the gold label rotated by one class.
std::string oracle_respond(std::string_view prompt, const OracleKey& key, const std::string& task_id);

/// Analyzer stand-in for synthetic runs: echoes records as facts, induces a
/// value statement, fills the Cache from value tokens, and answers
/// prediction prompts through oracle_respond.
Responder synth_responder(std::shared_ptr<const OracleKey> key);

/// Rotated label used by the oracle when evidence is missing.
Label rotate_label(const Label& gold, TaskKind kind, std::size_t n_options);

/// Seeded helpers built on mt19937_64 with plain modulo reduction, so
/// generated corpora are identical across standard libraries.
class SynthRng {
 public:
  explicit SynthRng(std::uint64_t seed) : eng_(seed) {}
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(eng_() % n); }
  std::size_t between(std::size_t lo, std::size_t hi) { return lo + below(hi - lo + 1); }
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace personadb
