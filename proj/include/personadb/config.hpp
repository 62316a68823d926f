#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "personadb/http_backend.hpp"
#include "personadb/method.hpp"
#include "personadb/predict.hpp"
#include "personadb/refine.hpp"
#include "personadb/synth.hpp"

namespace personadb {

struct ScriptedOptions {
  std::optional<std::filesystem::path> transcript;
  TranscriptMode transcript_mode = TranscriptMode::Fallback;
  std::string responder = "none";  // "none" or "synth"
  std::optional<std::filesystem::path> oracle_key;
  std::optional<std::filesystem::path> vocabulary;  // JSON list for the bag-of-words embedder
  bool normalize = true;
  std::size_t embed_dims = 0;  // used only without a vocabulary
};

struct BackendConfig {
  std::string kind = "scripted";  // "scripted" or "http"
  ScriptedOptions scripted;
  HttpBackendOptions http;
  double requests_per_minute = 0.0;
  std::optional<std::filesystem::path> embedding_cache;
  std::size_t max_in_flight = 4;
};

/// Fully resolved run configuration: built-in defaults, then the config
/// file, then `--set key=value` overrides. Unknown keys are rejected.
struct RunConfig {
  ordered_json resolved;  // the merged document, journaled verbatim
  std::string digest;     // sha256 of resolved.dump()

  std::filesystem::path store_path;
  std::filesystem::path runs_dir;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  BackendConfig backend;
  std::optional<std::filesystem::path> corpus;
  std::optional<std::filesystem::path> tasks;
  std::optional<std::filesystem::path> synth_out;
  std::optional<std::filesystem::path> prompts_dir;
  RefineConfig refine;
  std::size_t max_parallel_users = 1;
  JoinConfig join;
  CompositionConfig composition;
  MethodConfig method;
  PredictOptions predict;
  std::vector<std::size_t> sweep_r;
  std::vector<double> sweep_x;
  std::size_t lurker_max_records = 5;
  std::size_t frequent_top_n = 300;
  SynthConfig synth;

  static ordered_json defaults();
  /// Throws ConfigError with the offending line or field.
  static RunConfig resolve(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides);
  static RunConfig from_json(ordered_json doc);
};

/// Applies one `a.b.c=value` override. The value is parsed as JSON when it
/// parses, otherwise taken as a string.
void apply_override(ordered_json& doc, const std::string& assignment);

}  // namespace personadb
