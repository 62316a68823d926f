#include "personadb/intsum.hpp"

#include <algorithm>

#include "personadb/text.hpp"

namespace personadb {

IntSumCache::IntSumCache(Gateway& gateway, PromptSet prompts, std::size_t history_budget_chars)
    : gateway_(gateway), prompts_(std::move(prompts)), budget_(history_budget_chars) {}

std::string IntSumCache::summary(const PersonaDatabase& db, TaskKind kind) {
  if (db.history.empty()) throw Error(ErrorCode::EmptyHistory, db.user_id);
  const auto key = std::make_pair(db.user_id, kind);
  {
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  }

  std::vector<std::string> lines;
  std::size_t used = 0;
  for (auto it = db.history.rbegin(); it != db.history.rend(); ++it) {
    std::string t(text::trim(it->text));
    std::replace(t.begin(), t.end(), '\n', ' ');
    auto line = "[" + it->record_id + "] " + t;
    if (!lines.empty() && used + line.size() + 1 > budget_) break;
    used += line.size() + 1;
    lines.push_back(std::move(line));
  }
  std::reverse(lines.begin(), lines.end());

  AnalyzerRequest req;
  req.prompt_name = "intsum";
  req.rendered_prompt = render_template(prompts_.get("intsum"),
                                        {{"task_kind", std::string(to_string(kind))}, {"items", text::join(lines, "\n")}});
  auto result = std::string(text::trim(gateway_.analyze(req)));

  std::lock_guard lock(mutex_);
  return cache_.try_emplace(key, std::move(result)).first->second;
}

std::size_t IntSumCache::size() const {
  std::lock_guard lock(mutex_);
  return cache_.size();
}

}  // namespace personadb
