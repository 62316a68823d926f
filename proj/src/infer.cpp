#include "personadb/infer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>

#include "personadb/store.hpp"
#include "personadb/text.hpp"

namespace personadb {

std::string_view to_string(TaskKind k) noexcept {
  return k == TaskKind::ResponseForecast ? "response_forecast" : "opinion_choice";
}

TaskKind task_kind_from_string(std::string_view s) {
  if (s == "response_forecast") return TaskKind::ResponseForecast;
  if (s == "opinion_choice") return TaskKind::OpinionChoice;
  throw Error(ErrorCode::MalformedRecord, "unknown task kind '" + std::string(s) + "'");
}

std::string_view to_string(Polarity p) noexcept {
  switch (p) {
    case Polarity::Positive: return "Positive";
    case Polarity::Negative: return "Negative";
    case Polarity::Neutral: return "Neutral";
  }
  return "Neutral";
}

std::optional<Polarity> polarity_from_string(std::string_view s) {
  const auto lower = text::to_lower(text::trim(s));
  if (lower == "positive") return Polarity::Positive;
  if (lower == "negative") return Polarity::Negative;
  if (lower == "neutral") return Polarity::Neutral;
  return std::nullopt;
}

std::string_view to_string(ParseStatus s) noexcept {
  switch (s) {
    case ParseStatus::Clean: return "clean";
    case ParseStatus::Repaired: return "repaired";
    case ParseStatus::Defaulted: return "defaulted";
  }
  return "defaulted";
}

ParseStatus parse_status_from_string(std::string_view s) {
  if (s == "clean") return ParseStatus::Clean;
  if (s == "repaired") return ParseStatus::Repaired;
  if (s == "defaulted") return ParseStatus::Defaulted;
  throw Error(ErrorCode::MalformedRecord, "unknown parse_status '" + std::string(s) + "'");
}

void validate_label(const Label& label, TaskKind kind, std::size_t n_options) {
  if (kind == TaskKind::ResponseForecast) {
    if (!label.intensity || !label.polarity) throw Error(ErrorCode::MalformedRecord, "label needs intensity and polarity");
    if (*label.intensity < 0 || *label.intensity > 3) throw Error(ErrorCode::MalformedRecord, "intensity outside 0..3");
  } else {
    if (!label.choice_index) throw Error(ErrorCode::MalformedRecord, "label needs choice_index");
    if (*label.choice_index >= n_options) throw Error(ErrorCode::MalformedRecord, "choice_index out of range");
  }
}

void validate_task(const QueryTask& task) {
  if (task.task_id.empty()) throw Error(ErrorCode::MalformedRecord, "task_id is empty");
  if (task.user_id.empty()) throw Error(ErrorCode::MalformedRecord, task.task_id + ": user_id is empty");
  if (task.stimulus.empty()) throw Error(ErrorCode::MalformedRecord, task.task_id + ": stimulus is empty");
  if (task.kind == TaskKind::ResponseForecast && !task.options.empty()) {
    throw Error(ErrorCode::MalformedRecord, task.task_id + ": response_forecast takes no options");
  }
  if (task.kind == TaskKind::OpinionChoice && task.options.size() < 2) {
    throw Error(ErrorCode::MalformedRecord, task.task_id + ": opinion_choice needs at least 2 options");
  }
  if (task.gold) validate_label(*task.gold, task.kind, task.options.size());
}

ordered_json to_json(const Label& label) {
  ordered_json j = ordered_json::object();
  if (label.intensity) j["intensity"] = *label.intensity;
  if (label.polarity) j["polarity"] = std::string(to_string(*label.polarity));
  if (label.choice_index) j["choice_index"] = *label.choice_index;
  return j;
}

Label label_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::MalformedRecord, "label must be an object");
  Label l;
  try {
    if (j.contains("intensity")) l.intensity = j.at("intensity").get<int>();
    if (j.contains("polarity")) {
      l.polarity = polarity_from_string(j.at("polarity").get<std::string>());
      if (!l.polarity) throw Error(ErrorCode::MalformedRecord, "unknown polarity");
    }
    if (j.contains("choice_index")) l.choice_index = j.at("choice_index").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedRecord, std::string("label: ") + e.what());
  }
  return l;
}

ordered_json to_json(const QueryTask& task) {
  ordered_json j;
  j["task_id"] = task.task_id;
  j["user_id"] = task.user_id;
  j["kind"] = std::string(to_string(task.kind));
  j["stimulus"] = task.stimulus;
  j["options"] = task.options;
  j["gold"] = task.gold ? to_json(*task.gold) : ordered_json(nullptr);
  j["split"] = task.split;
  return j;
}

QueryTask query_task_from_json(const nlohmann::json& j) {
  QueryTask t;
  try {
    t.task_id = j.at("task_id").get<std::string>();
    t.user_id = j.at("user_id").get<std::string>();
    t.kind = task_kind_from_string(j.at("kind").get<std::string>());
    t.stimulus = j.at("stimulus").get<std::string>();
    if (j.contains("options") && !j.at("options").is_null()) t.options = j.at("options").get<std::vector<std::string>>();
    if (j.contains("gold") && !j.at("gold").is_null()) t.gold = label_from_json(j.at("gold"));
    if (j.contains("split") && !j.at("split").is_null()) t.split = j.at("split").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedRecord, std::string("task: ") + e.what());
  }
  validate_task(t);
  return t;
}

ordered_json to_json(const Prediction& p) {
  ordered_json j;
  j["task_id"] = p.task_id;
  j["user_id"] = p.user_id;
  j["method"] = p.method;
  j["label"] = to_json(p.label);
  j["parse_status"] = std::string(to_string(p.parse_status));
  j["retrieval_digest"] = p.retrieval_digest;
  j["prompt_digest"] = p.prompt_digest;
  j["raw_output"] = p.raw_output;
  return j;
}

Prediction prediction_from_json(const nlohmann::json& j) {
  Prediction p;
  try {
    p.task_id = j.at("task_id").get<std::string>();
    p.user_id = j.at("user_id").get<std::string>();
    p.method = j.at("method").get<std::string>();
    p.label = label_from_json(j.at("label"));
    p.parse_status = parse_status_from_string(j.at("parse_status").get<std::string>());
    p.retrieval_digest = j.value("retrieval_digest", "");
    p.prompt_digest = j.value("prompt_digest", "");
    p.raw_output = j.value("raw_output", "");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedRecord, std::string("prediction: ") + e.what());
  }
  return p;
}

namespace {

template <typename T, typename Parse>
std::vector<T> read_jsonl(const std::filesystem::path& path, Parse parse) {
  std::vector<T> out;
  std::size_t line_no = 0;
  for (const auto& line : text::split_lines(read_file(path))) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(parse(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::MalformedRecord, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(e.code(), path.string() + ":" + std::to_string(line_no) + ": " + e.detail());
    }
  }
  return out;
}

}  // namespace

std::vector<QueryTask> read_tasks_jsonl(const std::filesystem::path& path) {
  return read_jsonl<QueryTask>(path, [](const nlohmann::json& j) { return query_task_from_json(j); });
}

std::string serialize_tasks(const std::vector<QueryTask>& tasks) {
  std::string out;
  for (const auto& t : tasks) out += to_json(t).dump() + "\n";
  return out;
}

std::vector<Prediction> read_predictions_jsonl(const std::filesystem::path& path) {
  return read_jsonl<Prediction>(path, [](const nlohmann::json& j) { return prediction_from_json(j); });
}

std::string serialize_predictions(const std::vector<Prediction>& preds) {
  std::string out;
  for (const auto& p : preds) out += to_json(p).dump() + "\n";
  return out;
}

std::string option_tag(std::size_t i) {
  if (i < 26) return std::string(1, static_cast<char>('A' + i));
  return std::to_string(i);
}

std::string format_label(const Label& label, TaskKind kind, std::size_t n_options) {
  if (kind == TaskKind::ResponseForecast) {
    return "Intensity: " + std::to_string(label.intensity.value_or(0)) + "\nPolarity: " +
           std::string(to_string(label.polarity.value_or(Polarity::Neutral)));
  }
  const auto idx = label.choice_index.value_or(0);
  // Past 26 options letters run out, so every index is written numerically.
  return "Answer: " + (n_options > 26 ? std::to_string(idx) : option_tag(idx));
}

std::string answer_format(TaskKind kind) {
  if (kind == TaskKind::ResponseForecast) {
    return "Answer with exactly two lines:\nIntensity: <0-3>\nPolarity: <Positive|Negative|Neutral>";
  }
  return "Answer with exactly one line:\nAnswer: <option letter>";
}

Label default_label(TaskKind kind) {
  Label l;
  if (kind == TaskKind::ResponseForecast) {
    l.intensity = 0;
    l.polarity = Polarity::Neutral;
  } else {
    l.choice_index = 0;
  }
  return l;
}

namespace {

std::optional<std::size_t> parse_choice(std::string_view token, std::size_t n_options) {
  token = text::trim(token);
  while (!token.empty() && (token.back() == '.' || token.back() == ')' || token.back() == ',')) token.remove_suffix(1);
  while (!token.empty() && token.front() == '(') token.remove_prefix(1);
  if (token.empty()) return std::nullopt;
  if (n_options <= 26 && token.size() == 1 && std::isalpha(static_cast<unsigned char>(token[0]))) {
    const auto idx = static_cast<std::size_t>(std::toupper(static_cast<unsigned char>(token[0])) - 'A');
    if (idx < n_options) return idx;
    return std::nullopt;
  }
  if (std::all_of(token.begin(), token.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }) &&
      token.size() < 6) {
    const auto idx = static_cast<std::size_t>(std::stoul(std::string(token)));
    if (idx < n_options) return idx;
  }
  return std::nullopt;
}

std::optional<std::string_view> field_value(std::string_view line, std::string_view field) {
  line = text::trim(line);
  if (!text::starts_with_ci(line, field)) return std::nullopt;
  auto rest = text::trim(line.substr(field.size()));
  if (rest.empty() || rest.front() != ':') return std::nullopt;
  return text::trim(rest.substr(1));
}

std::optional<Label> parse_strict(std::string_view raw, TaskKind kind, std::size_t n_options) {
  Label l;
  for (const auto& line : text::split_lines(raw)) {
    if (kind == TaskKind::ResponseForecast) {
      if (auto v = field_value(line, "Intensity")) {
        if (v->size() == 1 && (*v)[0] >= '0' && (*v)[0] <= '3' && !l.intensity) l.intensity = (*v)[0] - '0';
      } else if (auto p = field_value(line, "Polarity")) {
        if (!l.polarity) l.polarity = polarity_from_string(*p);
      }
    } else if (auto v = field_value(line, "Answer")) {
      if (!l.choice_index) l.choice_index = parse_choice(*v, n_options);
    }
  }
  if (kind == TaskKind::ResponseForecast && l.intensity && l.polarity) return l;
  if (kind == TaskKind::OpinionChoice && l.choice_index) return l;
  return std::nullopt;
}

// Splits on anything that is not a letter or digit.
std::vector<std::string> words(std::string_view raw) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : raw) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur += c;
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::optional<Label> parse_lenient(std::string_view raw, TaskKind kind, std::size_t n_options) {
  Label l;
  const auto ws = words(raw);
  if (kind == TaskKind::ResponseForecast) {
    for (const auto& w : ws) {
      if (!l.intensity && w.size() == 1 && w[0] >= '0' && w[0] <= '3') l.intensity = w[0] - '0';
      if (!l.polarity) l.polarity = polarity_from_string(w);
    }
    if (!l.intensity && !l.polarity) return std::nullopt;
    const auto d = default_label(kind);
    if (!l.intensity) l.intensity = d.intensity;
    if (!l.polarity) l.polarity = d.polarity;
    return l;
  }
  for (const auto& w : ws) {
    const bool letter = w.size() == 1 && std::isupper(static_cast<unsigned char>(w[0]));
    const bool number = n_options > 26 && std::isdigit(static_cast<unsigned char>(w[0]));
    if (!letter && !number) continue;
    if (auto idx = parse_choice(w, n_options)) {
      l.choice_index = idx;
      return l;
    }
  }
  return std::nullopt;
}

}  // namespace

ParsedLabel parse_prediction(std::string_view raw, TaskKind kind, std::size_t n_options) {
  if (auto l = parse_strict(raw, kind, n_options)) return {*l, ParseStatus::Clean};
  if (auto l = parse_lenient(raw, kind, n_options)) return {*l, ParseStatus::Repaired};
  return {default_label(kind), ParseStatus::Defaulted};
}

namespace {

std::string render_block(const std::vector<const RetrievalItem*>& items) {
  if (items.empty()) return "(none)";
  std::string out;
  for (const auto* it : items) {
    if (!out.empty()) out += '\n';
    std::string line(text::trim(it->text));
    std::replace(line.begin(), line.end(), '\n', ' ');
    out += "- " + line;
  }
  return out;
}

std::string render_options(const QueryTask& task) {
  if (task.options.empty()) return "";
  std::string out = "Options:";
  for (std::size_t i = 0; i < task.options.size(); ++i) out += "\n" + option_tag(i) + ". " + task.options[i];
  return out + "\n";
}

}  // namespace

std::string assemble_prompt(const QueryTask& task, const RetrievalSet& rset, const std::string& tmpl,
                            const PromptBudget& budget, Journal* journal) {
  std::vector<bool> dropped(rset.items.size(), false);
  std::string self_block, collab_block;
  auto render = [&] {
    std::vector<const RetrievalItem*> self, collab;
    for (std::size_t i = 0; i < rset.items.size(); ++i) {
      if (!dropped[i]) (rset.items[i].source == Source::Self ? self : collab).push_back(&rset.items[i]);
    }
    self_block = render_block(self);
    collab_block = render_block(collab);
  };
  auto over = [&] {
    return budget.max_evidence_chars > 0 && self_block.size() + collab_block.size() > budget.max_evidence_chars;
  };
  render();

  if (over()) {
    // Lowest score goes first; among equal scores the later item.
    std::vector<std::size_t> order(rset.items.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const double sa = rset.items[a].score, sb = rset.items[b].score;
      return sa < sb || (sa == sb && a > b);
    });
    std::size_t n_dropped = 0;
    for (auto idx : order) {
      if (!over()) break;
      dropped[idx] = true;
      ++n_dropped;
      render();
    }
    if (journal) {
      journal->note("PromptTruncated", "evidence exceeded the character budget; lowest-scoring items dropped",
                    {{"task_id", task.task_id}, {"dropped", n_dropped}, {"budget", budget.max_evidence_chars}});
    }
  }

  return render_template(tmpl, {{"task_id", task.task_id},
                                {"stimulus", task.stimulus},
                                {"self_block", self_block},
                                {"collab_block", collab_block},
                                {"options", render_options(task)},
                                {"answer_format", answer_format(task.kind)}});
}

}  // namespace personadb
