#include "personadb/config.hpp"

#include <algorithm>

#include "personadb/digest.hpp"
#include "personadb/store.hpp"
#include "personadb/text.hpp"

namespace personadb {

namespace {

[[noreturn]] void config_error(const std::string& msg) { throw Error(ErrorCode::ConfigError, msg); }

// Rejects keys in `doc` that the defaults do not know about. Objects whose
// default is null or empty accept anything.
void check_keys(const ordered_json& doc, const ordered_json& schema, const std::string& prefix) {
  if (!doc.is_object() || !schema.is_object() || schema.empty()) return;
  for (const auto& [key, val] : doc.items()) {
    const auto path = prefix.empty() ? key : prefix + "." + key;
    if (!schema.contains(key)) config_error("unknown config field '" + path + "'");
    check_keys(val, schema.at(key), path);
  }
}

void merge_into(ordered_json& base, const ordered_json& patch) {
  for (const auto& [key, val] : patch.items()) {
    if (val.is_object() && base.contains(key) && base[key].is_object()) {
      merge_into(base[key], val);
    } else {
      base[key] = val;
    }
  }
}

std::string line_col(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

template <typename T>
T field(const ordered_json& doc, const std::string& path) {
  const ordered_json* cur = &doc;
  for (const auto& part : text::split(path, '.')) {
    if (!cur->is_object() || !cur->contains(part)) config_error("missing config field '" + path + "'");
    cur = &cur->at(part);
  }
  try {
    return cur->get<T>();
  } catch (const nlohmann::json::exception&) {
    config_error("config field '" + path + "' has the wrong type: " + cur->dump());
  }
}

template <typename T>
std::optional<T> opt_field(const ordered_json& doc, const std::string& path) {
  const ordered_json* cur = &doc;
  for (const auto& part : text::split(path, '.')) cur = &cur->at(part);
  if (cur->is_null()) return std::nullopt;
  return field<T>(doc, path);
}

std::vector<Layer> layer_list(const ordered_json& doc, const std::string& path) {
  std::vector<Layer> out;
  for (const auto& name : field<std::vector<std::string>>(doc, path)) {
    try {
      out.push_back(layer_from_string(name));
    } catch (const Error&) {
      config_error("config field '" + path + "': unknown layer '" + name + "'");
    }
  }
  return out;
}

}  // namespace

ordered_json RunConfig::defaults() {
  ordered_json d = ordered_json::parse(R"({
    "store_path": "store",
    "runs_dir": "runs",
    "seed": 0,
    "workers": 1,
    "backend": {
      "kind": "scripted",
      "scripted": {
        "transcript": null,
        "transcript_mode": "fallback",
        "responder": "none",
        "oracle_key": null,
        "vocabulary": null,
        "normalize": true,
        "embed_dims": 0
      },
      "http": {},
      "requests_per_minute": 0,
      "embedding_cache": null,
      "max_in_flight": 4
    },
    "data": {"corpus": null, "tasks": null, "synth_out": null},
    "prompts": {"dir": null},
    "refine": {},
    "join": {},
    "composition": {},
    "method": {"name": "persona_db"},
    "predict": {"max_evidence_chars": 0, "max_output_tokens": 64, "temperature": 0.0},
    "sweep": {"r_values": [4, 8, 16, 32], "x_values": [0, 0.25, 0.5, 0.75]},
    "cohorts": {"lurker_max_records": 5, "frequent_top_n": 300},
    "synth": {}
  })");
  const HttpBackendOptions http;
  auto& h = d["backend"]["http"];
  h["base_url"] = http.base_url;
  h["chat_model"] = http.chat_model;
  h["embed_model"] = http.embed_model;
  h["embed_dims"] = http.embed_dims;
  h["max_attempts"] = http.max_attempts;
  h["timeout_s"] = http.timeout.count();
  h["api_key_env"] = http.api_key_env;

  const RefineConfig refine;
  auto& r = d["refine"];
  r["batch_size"] = refine.batch_size;
  r["include_dp"] = refine.include_dp;
  r["include_ip"] = refine.include_ip;
  r["taxonomy"] = refine.taxonomy;
  r["max_output_tokens"] = refine.max_output_tokens;
  r["max_parallel_users"] = 1;

  d["join"] = JoinConfig{}.to_json();
  d["composition"] = CompositionConfig{}.to_json();
  d["synth"] = SynthConfig{}.to_json();
  return d;
}

void apply_override(ordered_json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) config_error("override '" + assignment + "' is not key=value");
  const auto key = assignment.substr(0, eq);
  const auto raw = assignment.substr(eq + 1);
  ordered_json value;
  try {
    value = ordered_json::parse(raw);
  } catch (const nlohmann::json::parse_error&) {
    value = raw;
  }
  ordered_json* cur = &doc;
  const auto parts = text::split(key, '.');
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!cur->is_object() || !cur->contains(parts[i])) config_error("unknown config field '" + key + "'");
    cur = &(*cur)[parts[i]];
  }
  if (!cur->is_object()) config_error("unknown config field '" + key + "'");
  (*cur)[parts.back()] = std::move(value);
}

RunConfig RunConfig::resolve(const std::optional<std::filesystem::path>& file,
                             const std::vector<std::string>& overrides) {
  const auto schema = defaults();
  auto doc = schema;
  if (file) {
    std::string text;
    try {
      text = read_file(*file);
    } catch (const Error& e) {
      config_error("cannot read config " + file->string() + ": " + e.detail());
    }
    ordered_json patch;
    try {
      patch = ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      config_error(file->string() + ": " + line_col(text, e.byte > 0 ? e.byte - 1 : 0) + ": invalid JSON");
    }
    if (!patch.is_object()) config_error(file->string() + ": top level must be an object");
    check_keys(patch, schema, "");
    merge_into(doc, patch);
  }
  for (const auto& o : overrides) {
    apply_override(doc, o);
    check_keys(doc, schema, "");
  }
  return from_json(std::move(doc));
}

RunConfig RunConfig::from_json(ordered_json doc) {
  RunConfig c;
  auto path_opt = [&](const std::string& p) -> std::optional<std::filesystem::path> {
    if (auto s = opt_field<std::string>(doc, p)) return std::filesystem::path(*s);
    return std::nullopt;
  };
  c.store_path = field<std::string>(doc, "store_path");
  c.runs_dir = field<std::string>(doc, "runs_dir");
  c.seed = field<std::uint64_t>(doc, "seed");
  c.workers = field<std::size_t>(doc, "workers");
  if (c.workers < 1) config_error("config field 'workers' must be at least 1");

  auto& b = c.backend;
  b.kind = field<std::string>(doc, "backend.kind");
  if (b.kind != "scripted" && b.kind != "http") config_error("config field 'backend.kind' must be scripted or http");
  b.scripted.transcript = path_opt("backend.scripted.transcript");
  const auto mode = field<std::string>(doc, "backend.scripted.transcript_mode");
  if (mode != "strict" && mode != "fallback") config_error("config field 'backend.scripted.transcript_mode' must be strict or fallback");
  b.scripted.transcript_mode = mode == "strict" ? TranscriptMode::Strict : TranscriptMode::Fallback;
  b.scripted.responder = field<std::string>(doc, "backend.scripted.responder");
  if (b.scripted.responder != "none" && b.scripted.responder != "synth") {
    config_error("config field 'backend.scripted.responder' must be none or synth");
  }
  b.scripted.oracle_key = path_opt("backend.scripted.oracle_key");
  b.scripted.vocabulary = path_opt("backend.scripted.vocabulary");
  b.scripted.normalize = field<bool>(doc, "backend.scripted.normalize");
  b.scripted.embed_dims = field<std::size_t>(doc, "backend.scripted.embed_dims");
  b.http.base_url = field<std::string>(doc, "backend.http.base_url");
  b.http.chat_model = field<std::string>(doc, "backend.http.chat_model");
  b.http.embed_model = field<std::string>(doc, "backend.http.embed_model");
  b.http.embed_dims = field<std::size_t>(doc, "backend.http.embed_dims");
  b.http.max_attempts = field<int>(doc, "backend.http.max_attempts");
  b.http.timeout = std::chrono::seconds(field<int>(doc, "backend.http.timeout_s"));
  b.http.api_key_env = field<std::string>(doc, "backend.http.api_key_env");
  b.requests_per_minute = field<double>(doc, "backend.requests_per_minute");
  b.embedding_cache = path_opt("backend.embedding_cache");
  b.max_in_flight = field<std::size_t>(doc, "backend.max_in_flight");
  if (b.max_in_flight < 1) config_error("config field 'backend.max_in_flight' must be at least 1");

  c.corpus = path_opt("data.corpus");
  c.tasks = path_opt("data.tasks");
  c.synth_out = path_opt("data.synth_out");
  c.prompts_dir = path_opt("prompts.dir");

  c.refine.batch_size = field<std::size_t>(doc, "refine.batch_size");
  c.refine.include_dp = field<bool>(doc, "refine.include_dp");
  c.refine.include_ip = field<bool>(doc, "refine.include_ip");
  c.refine.taxonomy = field<std::vector<std::string>>(doc, "refine.taxonomy");
  c.refine.max_output_tokens = field<int>(doc, "refine.max_output_tokens");
  c.refine.seed = static_cast<std::int64_t>(c.seed);
  c.max_parallel_users = field<std::size_t>(doc, "refine.max_parallel_users");
  if (c.prompts_dir) {
    try {
      c.refine.prompts = PromptSet::load_dir(*c.prompts_dir);
    } catch (const Error& e) {
      config_error("config field 'prompts.dir': " + e.detail());
    }
  }

  c.join.k = field<std::size_t>(doc, "join.k");
  c.join.exclude_self = field<bool>(doc, "join.exclude_self");
  c.join.candidate_set = opt_field<std::vector<std::string>>(doc, "join.candidate_set");
  c.join.min_similarity = opt_field<double>(doc, "join.min_similarity");
  c.join.layers = layer_list(doc, "join.layers");

  c.composition.r = field<std::size_t>(doc, "composition.r");
  c.composition.x = field<double>(doc, "composition.x");
  c.composition.pool_layers = layer_list(doc, "composition.pool_layers");
  c.composition.backfill = field<bool>(doc, "composition.backfill");
  const auto ordering = field<std::string>(doc, "composition.ordering");
  if (ordering != "self_first" && ordering != "interleaved") {
    config_error("config field 'composition.ordering' must be self_first or interleaved");
  }
  c.composition.ordering = ordering == "self_first" ? ItemOrdering::SelfFirst : ItemOrdering::Interleaved;

  try {
    c.method.name = method_from_string(field<std::string>(doc, "method.name"));
  } catch (const Error& e) {
    config_error("config field 'method.name': " + e.detail());
  }
  c.method.composition = c.composition;
  c.method.join = c.join;
  c.method.seed = c.seed;

  c.predict.budget.max_evidence_chars = field<std::size_t>(doc, "predict.max_evidence_chars");
  c.predict.max_output_tokens = field<int>(doc, "predict.max_output_tokens");
  c.predict.temperature = field<double>(doc, "predict.temperature");
  c.predict.seed = static_cast<std::int64_t>(c.seed);

  c.sweep_r = field<std::vector<std::size_t>>(doc, "sweep.r_values");
  c.sweep_x = field<std::vector<double>>(doc, "sweep.x_values");
  c.lurker_max_records = field<std::size_t>(doc, "cohorts.lurker_max_records");
  c.frequent_top_n = field<std::size_t>(doc, "cohorts.frequent_top_n");

  auto& s = c.synth;
  s.n_users = field<std::size_t>(doc, "synth.n_users");
  s.n_clusters = field<std::size_t>(doc, "synth.n_clusters");
  s.n_domains = field<std::size_t>(doc, "synth.n_domains");
  s.value_vocab_size = field<std::size_t>(doc, "synth.value_vocab_size");
  s.domain_vocab_size = field<std::size_t>(doc, "synth.domain_vocab_size");
  s.records_min = field<std::size_t>(doc, "synth.records_min");
  s.records_max = field<std::size_t>(doc, "synth.records_max");
  s.lurker_fraction = field<double>(doc, "synth.lurker_fraction");
  s.lurker_records_min = field<std::size_t>(doc, "synth.lurker_records_min");
  s.lurker_records_max = field<std::size_t>(doc, "synth.lurker_records_max");
  s.domain_coverage = field<std::size_t>(doc, "synth.domain_coverage");
  s.lurker_coverage = field<std::size_t>(doc, "synth.lurker_coverage");
  s.tokens_per_record = field<std::size_t>(doc, "synth.tokens_per_record");
  s.tasks_per_user = field<std::size_t>(doc, "synth.tasks_per_user");
  s.seed = field<std::uint64_t>(doc, "synth.seed");

  try {
    c.refine.validate();
    c.join.validate();
    c.composition.validate();
    c.method.resolved().composition.validate();
    c.method.resolved().join.validate();
  } catch (const Error& e) {
    config_error(e.detail());
  }

  c.resolved = std::move(doc);
  c.digest = sha256_hex(c.resolved.dump());
  return c;
}

}  // namespace personadb
