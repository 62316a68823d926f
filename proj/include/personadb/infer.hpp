#pragma once

#include <optional>
#include <string>
#include <vector>

#include "personadb/retrieve.hpp"
#include "personadb/template.hpp"
#include "personadb/types.hpp"

namespace personadb {

enum class TaskKind { ResponseForecast, OpinionChoice };
std::string_view to_string(TaskKind k) noexcept;
TaskKind task_kind_from_string(std::string_view s);

enum class Polarity { Positive, Negative, Neutral };
std::string_view to_string(Polarity p) noexcept;
std::optional<Polarity> polarity_from_string(std::string_view s);

struct Label {
  std::optional<int> intensity;  // 0..3
  std::optional<Polarity> polarity;
  std::optional<std::size_t> choice_index;

  bool operator==(const Label&) const = default;
};

struct QueryTask {
  std::string task_id;
  std::string user_id;
  TaskKind kind = TaskKind::ResponseForecast;
  std::string stimulus;
  std::vector<std::string> options;  // opinion_choice only
  std::optional<Label> gold;
  std::string split;  // "train" marks tasks usable for the majority baseline; empty otherwise
};

/// Throws MalformedRecord when the kind/options/label constraints are broken.
void validate_task(const QueryTask& task);
void validate_label(const Label& label, TaskKind kind, std::size_t n_options);

enum class ParseStatus { Clean, Repaired, Defaulted };
std::string_view to_string(ParseStatus s) noexcept;
ParseStatus parse_status_from_string(std::string_view s);

struct Prediction {
  std::string task_id;
  std::string user_id;
  std::string method;
  Label label;
  std::string raw_output;
  ParseStatus parse_status = ParseStatus::Clean;
  std::string retrieval_digest;  // empty for retrieval-free methods
  std::string prompt_digest;     // empty when no analyzer call was made
};

ordered_json to_json(const Label& label);
Label label_from_json(const nlohmann::json& j);
ordered_json to_json(const QueryTask& task);
QueryTask query_task_from_json(const nlohmann::json& j);
ordered_json to_json(const Prediction& p);
Prediction prediction_from_json(const nlohmann::json& j);

std::vector<QueryTask> read_tasks_jsonl(const std::filesystem::path& path);
std::string serialize_tasks(const std::vector<QueryTask>& tasks);
std::vector<Prediction> read_predictions_jsonl(const std::filesystem::path& path);
std::string serialize_predictions(const std::vector<Prediction>& preds);

/// Option letter for index i: A..Z, then the decimal index.
std::string option_tag(std::size_t i);

/// Strict answer grammar: `Intensity: n` and `Polarity: word` lines, or `Answer: X`.
std::string format_label(const Label& label, TaskKind kind, std::size_t n_options = 0);
std::string answer_format(TaskKind kind);

struct ParsedLabel {
  Label label;
  ParseStatus status = ParseStatus::Clean;
};

/// Never fails: strict grammar, then a lenient scan, then a default label.
ParsedLabel parse_prediction(std::string_view raw, TaskKind kind, std::size_t n_options);
Label default_label(TaskKind kind);

struct PromptBudget {
  std::size_t max_evidence_chars = 0;  // 0 disables truncation
};

/// Renders `tmpl` with the self and collaborative blocks of `rset`. When the
/// evidence blocks exceed the budget, the lowest-scoring items are dropped
/// first and the truncation is journaled.
std::string assemble_prompt(const QueryTask& task, const RetrievalSet& rset, const std::string& tmpl,
                            const PromptBudget& budget = {}, Journal* journal = nullptr);

}  // namespace personadb
