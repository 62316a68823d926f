#include "personadb/refine.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <set>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "personadb/text.hpp"

namespace personadb {

namespace {

std::string one_line(std::string_view s) {
  std::string out(text::trim(s));
  std::replace(out.begin(), out.end(), '\n', ' ');
  std::replace(out.begin(), out.end(), '\r', ' ');
  return out;
}

std::string padded_id(std::string_view prefix, std::size_t n) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04zu", n);
  return std::string(prefix) + buf;
}

bool is_none_marker(std::string_view s) {
  const auto lower = text::to_lower(text::trim(s));
  return lower == "(none)" || lower == "none";
}

// Splits a trailing "(sources: a, b)" suffix off `body`.
void split_sources(std::string_view body, ParsedLine& line) {
  std::string lower = text::to_lower(body);
  auto trimmed = text::trim(body);
  std::size_t at = std::string::npos;
  for (const char* marker : {"(sources:", "(source:"}) {
    auto pos = lower.rfind(marker);
    if (pos != std::string::npos && (at == std::string::npos || pos > at)) at = pos;
  }
  if (at == std::string::npos || trimmed.empty() || trimmed.back() != ')') {
    line.text = std::string(trimmed);
    return;
  }
  const auto colon = body.find(':', at);
  const auto close = body.rfind(')');
  for (auto& id : text::split(body.substr(colon + 1, close - colon - 1), ',')) {
    auto t = std::string(text::trim(id));
    if (!t.empty()) line.sources.push_back(std::move(t));
  }
  line.text = std::string(text::trim(body.substr(0, at)));
}

std::optional<std::vector<ParsedLine>> parse_lines(std::string_view output, bool cache_grammar) {
  std::vector<ParsedLine> out;
  bool saw_entry = false;
  for (const auto& raw : text::split_lines(output)) {
    auto line = text::trim(raw);
    if (line.empty()) continue;
    if (line.front() != '-' && line.front() != '*') return std::nullopt;
    auto body = text::trim(line.substr(1));
    if (body.empty()) return std::nullopt;
    saw_entry = true;
    if (!cache_grammar && is_none_marker(body)) continue;

    ParsedLine parsed;
    if (cache_grammar) {
      if (body.front() != '[') return std::nullopt;
      const auto close = body.find(']');
      if (close == std::string_view::npos) return std::nullopt;
      parsed.key = std::string(text::trim(body.substr(1, close - 1)));
      body = text::trim(body.substr(close + 1));
      if (!body.empty() && body.front() == ':') body = text::trim(body.substr(1));
      if (parsed.key.empty()) return std::nullopt;
    }
    split_sources(body, parsed);
    if (parsed.text.empty()) return std::nullopt;
    out.push_back(std::move(parsed));
  }
  if (!saw_entry) return std::nullopt;
  return out;
}

std::string render_items(std::span<const std::pair<std::string, std::string>> items) {
  std::string out;
  for (const auto& [id, body] : items) out += "[" + id + "] " + one_line(body) + "\n";
  if (!out.empty()) out.pop_back();
  return out;
}

}  // namespace

std::optional<std::vector<ParsedLine>> parse_fact_lines(std::string_view output) { return parse_lines(output, false); }
std::optional<std::vector<ParsedLine>> parse_cache_lines(std::string_view output) { return parse_lines(output, true); }

void RefineConfig::validate() const {
  if (batch_size < 1) throw Error(ErrorCode::InvalidConfig, "refine.batch_size must be at least 1");
  if (taxonomy.empty()) throw Error(ErrorCode::InvalidConfig, "refine.taxonomy must not be empty");
  std::set<std::string> seen;
  for (const auto& k : taxonomy) {
    if (k.empty() || !seen.insert(k).second) throw Error(ErrorCode::InvalidConfig, "invalid taxonomy key '" + k + "'");
  }
}

Refiner::Refiner(Gateway& gateway, RefineConfig cfg) : gateway_(gateway), cfg_(std::move(cfg)) { cfg_.validate(); }

std::vector<ParsedLine> Refiner::call_parsed(const std::string& prompt_name, std::map<std::string, std::string> vars,
                                             bool cache_grammar, RefineStats* stats) {
  AnalyzerRequest req;
  req.prompt_name = prompt_name;
  req.rendered_prompt = render_template(cfg_.prompts.get(prompt_name), vars);
  req.temperature = cfg_.temperature;
  req.seed = cfg_.seed;
  req.max_output_tokens = cfg_.max_output_tokens;

  if (stats) ++stats->analyzer_calls;
  auto parsed = parse_lines(gateway_.analyze(req), cache_grammar);
  if (parsed) return *parsed;

  AnalyzerRequest retry = req;
  retry.prompt_name = prompt_name + "_repair";
  retry.rendered_prompt = render_template(cfg_.prompts.get("repair"), {{"original", req.rendered_prompt}});
  if (stats) {
    ++stats->analyzer_calls;
    ++stats->repairs;
  }
  parsed = parse_lines(gateway_.analyze(retry), cache_grammar);
  if (!parsed) throw Error(ErrorCode::AnalyzerParseFailure, prompt_name + " output broke the line grammar twice");
  return *parsed;
}

std::vector<Refiner::Draft> Refiner::extract(const std::string& prompt_name, std::span<const SourceItem> items,
                                             RefineStats* stats, bool count_as_extraction) {
  std::vector<Draft> drafts;
  std::size_t batches = 0;
  for (std::size_t start = 0; start < items.size(); start += cfg_.batch_size) {
    const auto batch = items.subspan(start, std::min(cfg_.batch_size, items.size() - start));
    std::vector<std::pair<std::string, std::string>> rendered;
    std::unordered_set<std::string> batch_ids;
    for (const auto& it : batch) {
      rendered.emplace_back(it.id, it.text);
      batch_ids.insert(it.id);
    }
    if (stats && count_as_extraction) ++stats->extraction_calls;
    ++batches;
    for (auto& line : call_parsed(prompt_name, {{"items", render_items(rendered)}}, false, stats)) {
      Draft d{std::move(line.text), {}};
      for (const auto& src : line.sources) {
        if (batch_ids.count(src) && std::find(d.provenance.begin(), d.provenance.end(), src) == d.provenance.end()) {
          d.provenance.push_back(src);
        }
      }
      if (d.provenance.empty()) {
        for (const auto& it : batch) d.provenance.push_back(it.id);
      }
      drafts.push_back(std::move(d));
    }
  }
  if (batches > 1) drafts = merge(std::move(drafts), stats);
  return drafts;
}

std::vector<Refiner::Draft> Refiner::merge(std::vector<Draft> drafts, RefineStats* stats) {
  if (drafts.empty()) return drafts;
  std::vector<std::pair<std::string, std::string>> rendered;
  std::unordered_map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < drafts.size(); ++i) {
    auto id = "f" + std::to_string(i + 1);
    by_id.emplace(id, i);
    rendered.emplace_back(std::move(id), drafts[i].text);
  }
  if (stats) ++stats->merge_calls;
  std::vector<Draft> merged;
  for (auto& line : call_parsed("merge", {{"items", render_items(rendered)}}, false, stats)) {
    Draft d{std::move(line.text), {}};
    auto add_from = [&](const Draft& src) {
      for (const auto& p : src.provenance) {
        if (std::find(d.provenance.begin(), d.provenance.end(), p) == d.provenance.end()) d.provenance.push_back(p);
      }
    };
    for (const auto& src : line.sources) {
      if (auto it = by_id.find(src); it != by_id.end()) add_from(drafts[it->second]);
    }
    if (d.provenance.empty()) {
      for (const auto& src : drafts) add_from(src);
    }
    merged.push_back(std::move(d));
  }
  return merged;
}

std::vector<PersonaEntry> Refiner::finalize(const std::vector<Draft>& drafts, Layer layer, std::string_view id_prefix,
                                            std::span<const SourceItem> items) const {
  std::unordered_map<std::string, std::size_t> order;
  for (std::size_t i = 0; i < items.size(); ++i) order.emplace(items[i].id, i);
  std::vector<PersonaEntry> out;
  for (const auto& d : drafts) {
    PersonaEntry e;
    e.entry_id = padded_id(id_prefix, out.size() + 1);
    e.layer = layer;
    e.text = one_line(d.text);
    e.provenance = d.provenance;
    std::sort(e.provenance.begin(), e.provenance.end(),
              [&](const std::string& a, const std::string& b) { return order.at(a) < order.at(b); });
    for (const auto& p : e.provenance) e.created_at = std::max(e.created_at, items[order.at(p)].created_at);
    out.push_back(std::move(e));
  }
  return out;
}

PersonaDatabase Refiner::distill(PersonaDatabase db, RefineStats* stats) {
  db.template_set = cfg_.prompts.name();
  if (!cfg_.include_dp) {
    db.distilled.clear();
    return db;
  }
  if (db.history.empty()) throw Error(ErrorCode::EmptyHistory, db.user_id);
  std::vector<SourceItem> items;
  for (const auto& r : db.history) items.push_back({r.record_id, r.text, r.timestamp});
  db.distilled = finalize(extract("distill", items, stats, true), Layer::DistilledPersona, "dp-", items);
  return db;
}

PersonaDatabase Refiner::distill_incremental(PersonaDatabase db, std::span<const std::string> new_record_ids,
                                             RefineStats* stats) {
  if (!cfg_.include_dp || db.distilled.empty()) return distill(std::move(db), stats);
  if (new_record_ids.empty()) return db;
  std::unordered_set<std::string> wanted(new_record_ids.begin(), new_record_ids.end());
  std::vector<SourceItem> fresh;
  std::vector<SourceItem> all;
  for (const auto& r : db.history) {
    all.push_back({r.record_id, r.text, r.timestamp});
    if (wanted.count(r.record_id)) fresh.push_back(all.back());
  }
  if (fresh.size() != wanted.size()) throw Error(ErrorCode::PreconditionViolation, "new record ids not in History");

  auto drafts = extract("distill", fresh, stats, true);
  std::vector<Draft> combined;
  for (const auto& e : db.distilled) combined.push_back({e.text, e.provenance});
  combined.insert(combined.end(), drafts.begin(), drafts.end());
  db.distilled = finalize(merge(std::move(combined), stats), Layer::DistilledPersona, "dp-", all);
  return db;
}

PersonaDatabase Refiner::induce(PersonaDatabase db, RefineStats* stats) {
  if (!cfg_.include_ip) {
    db.induced.clear();
    return db;
  }
  if (db.history.empty()) throw Error(ErrorCode::EmptyHistory, db.user_id);
  std::vector<SourceItem> items;
  if (cfg_.include_dp && !db.distilled.empty()) {
    for (const auto& e : db.distilled) items.push_back({e.entry_id, e.text, e.created_at});
  } else {
    for (const auto& r : db.history) items.push_back({r.record_id, r.text, r.timestamp});
  }
  db.induced = finalize(extract("induce", items, stats, false), Layer::InducedPersona, "ip-", items);
  return db;
}

PersonaDatabase Refiner::build_cache(PersonaDatabase db, RefineStats* stats) {
  db.taxonomy = cfg_.taxonomy;
  std::vector<SourceItem> items;
  for (const auto* layer : {&db.distilled, &db.induced}) {
    for (const auto& e : *layer) items.push_back({e.entry_id, e.text, e.created_at});
  }
  db.cache_degraded = items.empty();
  if (items.empty()) {
    if (db.history.empty()) throw Error(ErrorCode::EmptyHistory, db.user_id);
    for (const auto& r : db.history) items.push_back({r.record_id, r.text, r.timestamp});
  }
  std::vector<std::pair<std::string, std::string>> rendered;
  std::unordered_map<std::string, std::int64_t> created;
  for (const auto& it : items) {
    rendered.emplace_back(it.id, it.text);
    created.emplace(it.id, it.created_at);
  }

  auto lines = call_parsed("cache", {{"items", render_items(rendered)}, {"taxonomy", text::join(cfg_.taxonomy, ", ")}},
                           true, stats);

  std::map<std::string, const ParsedLine*> by_key;
  for (const auto& line : lines) {
    const auto key = text::to_lower(line.key);
    if (std::find(cfg_.taxonomy.begin(), cfg_.taxonomy.end(), key) == cfg_.taxonomy.end()) {
      gateway_.journal().warn("CacheKeyUnknown", "analyzer emitted a key outside the taxonomy",
                              {{"user_id", db.user_id}, {"key", line.key}});
      continue;
    }
    by_key.try_emplace(key, &line);
  }

  std::int64_t newest = 0;
  for (const auto& it : items) newest = std::max(newest, it.created_at);

  db.cache.clear();
  for (const auto& key : cfg_.taxonomy) {
    PersonaEntry e;
    e.entry_id = "cache-" + key;
    e.layer = Layer::Cache;
    e.key = key;
    auto it = by_key.find(key);
    if (it == by_key.end()) {
      gateway_.journal().warn("CacheKeyMissing", "taxonomy key absent from analyzer output; set to unknown",
                              {{"user_id", db.user_id}, {"key", key}});
      e.text = std::string(kUnknownValue);
    } else {
      e.text = one_line(it->second->text);
    }
    if (text::to_lower(e.text) != kUnknownValue) {
      if (it != by_key.end()) {
        for (const auto& src : it->second->sources) {
          if (created.count(src) && std::find(e.provenance.begin(), e.provenance.end(), src) == e.provenance.end()) {
            e.provenance.push_back(src);
          }
        }
      }
      if (e.provenance.empty()) {
        for (const auto& item : items) e.provenance.push_back(item.id);
      }
      for (const auto& p : e.provenance) e.created_at = std::max(e.created_at, created.at(p));
    } else {
      e.created_at = newest;
    }
    db.cache.push_back(std::move(e));
  }
  return db;
}

PersonaDatabase Refiner::refine(PersonaDatabase db, RefineStats* stats) {
  db = distill(std::move(db), stats);
  db = induce(std::move(db), stats);
  return build_cache(std::move(db), stats);
}

std::size_t RefineReport::ok_count() const {
  return static_cast<std::size_t>(std::count_if(users.begin(), users.end(), [](const auto& u) { return u.ok(); }));
}

ordered_json RefineReport::to_json() const {
  ordered_json arr = ordered_json::array();
  for (const auto& u : users) {
    ordered_json j;
    j["user_id"] = u.user_id;
    j["status"] = u.ok() ? std::string("ok") : std::string(to_string(*u.error));
    if (!u.ok()) j["message"] = u.message;
    j["analyzer_calls"] = u.stats.analyzer_calls;
    j["extraction_calls"] = u.stats.extraction_calls;
    j["merge_calls"] = u.stats.merge_calls;
    j["repairs"] = u.stats.repairs;
    arr.push_back(std::move(j));
  }
  ordered_json out;
  out["ok"] = ok_count();
  out["failed"] = users.size() - ok_count();
  out["users"] = std::move(arr);
  return out;
}

RefineReport refine_all(PersonaStore& store, Gateway& gateway, std::span<const std::string> user_ids,
                        const RefineConfig& cfg, std::size_t max_parallel_users) {
  if (max_parallel_users == 0) throw Error(ErrorCode::PreconditionViolation, "max_parallel_users must be at least 1");
  Refiner refiner(gateway, cfg);
  RefineReport report;
  report.users.resize(user_ids.size());

  auto run_one = [&](std::size_t i) {
    auto& outcome = report.users[i];
    outcome.user_id = user_ids[i];
    try {
      auto lock = store.lock_user(user_ids[i]);
      auto db = refiner.refine(store.load_database(user_ids[i]), &outcome.stats);
      store.save_persona(db, lock);
    } catch (const Error& e) {
      outcome.error = e.code();
      outcome.message = e.detail();
    }
  };

  if (max_parallel_users == 1) {
    for (std::size_t i = 0; i < user_ids.size(); ++i) run_one(i);
    return report;
  }
  std::atomic<std::size_t> next{0};
  {
    std::vector<std::jthread> workers;
    for (std::size_t w = 0; w < std::min(max_parallel_users, user_ids.size()); ++w) {
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < user_ids.size(); i = next++) run_one(i);
      });
    }
  }
  return report;
}

}  // namespace personadb
