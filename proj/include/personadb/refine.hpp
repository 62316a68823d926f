#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "personadb/gateway.hpp"
#include "personadb/store.hpp"
#include "personadb/template.hpp"
#include "personadb/types.hpp"

namespace personadb {

struct RefineConfig {
  std::size_t batch_size = 50;  // History records per extraction call
  bool include_dp = true;
  bool include_ip = true;
  std::vector<std::string> taxonomy = default_taxonomy();
  PromptSet prompts = PromptSet::defaults();
  double temperature = 0.0;
  std::optional<std::int64_t> seed = 0;
  int max_output_tokens = 1024;

  void validate() const;
};

/// One entry parsed from analyzer output. Fact lines look like
/// `- text (sources: id, id)`; cache lines like `- [key] text`.
struct ParsedLine {
  std::string key;
  std::string text;
  std::vector<std::string> sources;
};

/// Returns nullopt when any non-blank line breaks the grammar or no entry is
/// present. A lone `- (none)` line parses to an empty list.
std::optional<std::vector<ParsedLine>> parse_fact_lines(std::string_view output);
std::optional<std::vector<ParsedLine>> parse_cache_lines(std::string_view output);

struct RefineStats {
  std::size_t analyzer_calls = 0;
  std::size_t extraction_calls = 0;
  std::size_t merge_calls = 0;
  std::size_t repairs = 0;
};

/// Hierarchical refinement of one user's database: History -> DistilledPersona
/// -> InducedPersona -> Cache, each layer produced by the analyzer from the
/// layers below it. History is never modified.
class Refiner {
 public:
  Refiner(Gateway& gateway, RefineConfig cfg);

  PersonaDatabase distill(PersonaDatabase db, RefineStats* stats = nullptr);
  /// Distills only `new_record_ids` and merges the result into the existing DP layer.
  PersonaDatabase distill_incremental(PersonaDatabase db, std::span<const std::string> new_record_ids,
                                      RefineStats* stats = nullptr);
  PersonaDatabase induce(PersonaDatabase db, RefineStats* stats = nullptr);
  PersonaDatabase build_cache(PersonaDatabase db, RefineStats* stats = nullptr);

  /// distill, induce and build_cache in sequence.
  PersonaDatabase refine(PersonaDatabase db, RefineStats* stats = nullptr);

  const RefineConfig& config() const noexcept { return cfg_; }

 private:
  struct SourceItem {
    std::string id;
    std::string text;
    std::int64_t created_at = 0;
  };
  struct Draft {
    std::string text;
    std::vector<std::string> provenance;
  };

  std::vector<ParsedLine> call_parsed(const std::string& prompt_name, std::map<std::string, std::string> vars,
                                      bool cache_grammar, RefineStats* stats);
  std::vector<Draft> extract(const std::string& prompt_name, std::span<const SourceItem> items, RefineStats* stats,
                             bool count_as_extraction);
  std::vector<Draft> merge(std::vector<Draft> drafts, RefineStats* stats);
  std::vector<PersonaEntry> finalize(const std::vector<Draft>& drafts, Layer layer, std::string_view id_prefix,
                                     std::span<const SourceItem> items) const;

  Gateway& gateway_;
  RefineConfig cfg_;
};

struct UserRefineOutcome {
  std::string user_id;
  std::optional<ErrorCode> error;
  std::string message;
  RefineStats stats;

  bool ok() const noexcept { return !error.has_value(); }
};

struct RefineReport {
  std::vector<UserRefineOutcome> users;  // input order

  std::size_t ok_count() const;
  ordered_json to_json() const;
};

/// Refines each user independently (up to max_parallel_users at once) and
/// persists persona.json. Failures are isolated per user.
RefineReport refine_all(PersonaStore& store, Gateway& gateway, std::span<const std::string> user_ids,
                        const RefineConfig& cfg, std::size_t max_parallel_users);

}  // namespace personadb
