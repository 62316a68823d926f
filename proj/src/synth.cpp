#include "personadb/synth.hpp"

#include <algorithm>
#include <cmath>
#include <regex>
#include <set>

#include "personadb/digest.hpp"
#include "personadb/store.hpp"
#include "personadb/text.hpp"

namespace personadb {

void SynthConfig::validate() const {
  auto bad = [](const std::string& m) { throw Error(ErrorCode::InvalidConfig, "synth: " + m); };
  if (n_users < 1 || n_clusters < 1 || n_clusters > n_users) bad("need 1 <= n_clusters <= n_users");
  if (n_domains < 2) bad("need at least 2 domains");
  if (value_vocab_size < 1 || domain_vocab_size < 1 || tokens_per_record < 1) bad("vocabulary sizes must be positive");
  if (domain_coverage < 1 || domain_coverage >= n_domains) bad("domain_coverage must lie in [1, n_domains)");
  if (lurker_coverage < 1 || lurker_coverage >= domain_coverage) bad("lurker_coverage must lie in [1, domain_coverage)");
  if (records_min > records_max || records_min < domain_coverage) bad("records range must cover every domain");
  if (lurker_records_min > lurker_records_max || lurker_records_min < lurker_coverage) bad("bad lurker_records range");
  if (!(lurker_fraction >= 0.0 && lurker_fraction <= 1.0)) bad("lurker_fraction must lie in [0, 1]");
  if (tasks_per_user < 1) bad("tasks_per_user must be positive");
}

ordered_json SynthConfig::to_json() const {
  ordered_json j;
  j["n_users"] = n_users;
  j["n_clusters"] = n_clusters;
  j["n_domains"] = n_domains;
  j["value_vocab_size"] = value_vocab_size;
  j["domain_vocab_size"] = domain_vocab_size;
  j["records_min"] = records_min;
  j["records_max"] = records_max;
  j["lurker_fraction"] = lurker_fraction;
  j["lurker_records_min"] = lurker_records_min;
  j["lurker_records_max"] = lurker_records_max;
  j["domain_coverage"] = domain_coverage;
  j["lurker_coverage"] = lurker_coverage;
  j["tokens_per_record"] = tokens_per_record;
  j["tasks_per_user"] = tasks_per_user;
  j["seed"] = seed;
  return j;
}

std::string domain_tag(std::size_t d) { return "dom" + std::to_string(d); }
std::string domain_token(std::size_t d, std::size_t j) { return domain_tag(d) + "_tok" + std::to_string(j); }
std::string value_token(std::size_t c, std::size_t j) { return "val" + std::to_string(c) + "_tok" + std::to_string(j); }

ordered_json oracle_key_to_json(const OracleKey& key) {
  ordered_json j = ordered_json::object();
  for (const auto& [task_id, e] : key) {
    ordered_json ej;
    ej["user_id"] = e.user_id;
    ej["required_domain"] = e.required_domain;
    ej["vocabulary"] = e.vocabulary;
    ej["gold"] = to_json(e.gold);
    ej["n_options"] = e.n_options;
    ej["lurker"] = e.lurker;
    ej["domain_covered"] = e.domain_covered;
    j[task_id] = std::move(ej);
  }
  return j;
}

OracleKey oracle_key_from_json(const nlohmann::json& j) {
  OracleKey key;
  try {
    for (const auto& [task_id, ej] : j.items()) {
      OracleEntry e;
      e.user_id = ej.at("user_id").get<std::string>();
      e.required_domain = ej.at("required_domain").get<std::string>();
      e.vocabulary = ej.at("vocabulary").get<std::vector<std::string>>();
      e.gold = label_from_json(ej.at("gold"));
      e.n_options = ej.value("n_options", std::size_t{0});
      e.lurker = ej.value("lurker", false);
      e.domain_covered = ej.value("domain_covered", false);
      key.emplace(task_id, std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedRecord, std::string("oracle key: ") + e.what());
  }
  return key;
}

void SynthPopulation::write(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  write_file_atomic(dir / "corpus.jsonl", serialize_history(records));
  write_file_atomic(dir / "tasks.jsonl", serialize_tasks(tasks));
  write_file_atomic(dir / "oracle_key.json", oracle_key_to_json(key).dump(2) + "\n");
  write_file_atomic(dir / "vocabulary.json", ordered_json(vocabulary).dump() + "\n");
}

namespace {

std::uint64_t label_hash(std::size_t cluster, std::size_t domain) {
  const auto h = sha256_hex("gold:" + std::to_string(cluster) + ":" + std::to_string(domain));
  return std::stoull(h.substr(0, 12), nullptr, 16);
}

Label gold_for(std::size_t cluster, std::size_t domain) {
  const auto h = label_hash(cluster, domain);
  Label l;
  l.intensity = static_cast<int>(h % 4);
  l.polarity = static_cast<Polarity>((h / 4) % 3);
  return l;
}

}  // namespace

SynthPopulation generate_population(const SynthConfig& cfg) {
  cfg.validate();
  SynthRng rng(cfg.seed);
  SynthPopulation pop;

  const auto n_lurkers = static_cast<std::size_t>(std::llround(cfg.lurker_fraction * static_cast<double>(cfg.n_users)));
  std::vector<std::vector<std::size_t>> members(cfg.n_clusters);
  for (std::size_t i = 0; i < cfg.n_users; ++i) members[i % cfg.n_clusters].push_back(i);

  // Lurkers are taken round-robin over clusters, from the end of each cluster.
  std::vector<bool> is_lurker(cfg.n_users, false);
  {
    std::vector<std::size_t> taken(cfg.n_clusters, 0);
    std::size_t assigned = 0;
    for (std::size_t j = 0; assigned < n_lurkers; ++j) {
      const auto c = j % cfg.n_clusters;
      if (taken[c] < members[c].size()) {
        is_lurker[members[c][members[c].size() - 1 - taken[c]++]] = true;
        ++assigned;
      }
    }
  }
  for (std::size_t c = 0; c < cfg.n_clusters; ++c) {
    const auto regular = static_cast<std::size_t>(
        std::count_if(members[c].begin(), members[c].end(), [&](std::size_t i) { return !is_lurker[i]; }));
    if (regular * cfg.domain_coverage < cfg.n_domains) {
      throw Error(ErrorCode::InvalidConfig,
                  "synth: cluster " + std::to_string(c) + " has too few regular users to cover every domain");
    }
  }

  for (std::size_t d = 0; d < cfg.n_domains; ++d) pop.vocabulary.push_back(domain_tag(d));
  for (std::size_t d = 0; d < cfg.n_domains; ++d) {
    for (std::size_t j = 0; j < cfg.domain_vocab_size; ++j) pop.vocabulary.push_back(domain_token(d, j));
  }
  for (std::size_t c = 0; c < cfg.n_clusters; ++c) {
    for (std::size_t j = 0; j < cfg.value_vocab_size; ++j) pop.vocabulary.push_back(value_token(c, j));
  }

  std::vector<std::size_t> regular_rank(cfg.n_users, 0);
  for (std::size_t c = 0; c < cfg.n_clusters; ++c) {
    std::size_t m = 0;
    for (auto i : members[c]) {
      if (!is_lurker[i]) regular_rank[i] = m++;
    }
  }

  for (std::size_t i = 0; i < cfg.n_users; ++i) {
    SynthUser u;
    char id[16];
    std::snprintf(id, sizeof id, "u%03zu", i);
    u.user_id = id;
    u.cluster = i % cfg.n_clusters;
    u.lurker = is_lurker[i];
    if (u.lurker) {
      std::vector<std::size_t> all(cfg.n_domains);
      for (std::size_t d = 0; d < cfg.n_domains; ++d) all[d] = d;
      rng.shuffle(all);
      u.domains.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(cfg.lurker_coverage));
    } else {
      // Consecutive blocks per regular user so each cluster covers every domain.
      for (std::size_t t = 0; t < cfg.domain_coverage; ++t) {
        u.domains.push_back((regular_rank[i] * cfg.domain_coverage + t + u.cluster) % cfg.n_domains);
      }
    }
    std::sort(u.domains.begin(), u.domains.end());

    const auto n_records = u.lurker ? rng.between(cfg.lurker_records_min, cfg.lurker_records_max)
                                    : rng.between(cfg.records_min, cfg.records_max);
    for (std::size_t k = 0; k < n_records; ++k) {
      const auto d = u.domains[k % u.domains.size()];
      std::string t = domain_tag(d);
      for (std::size_t w = 0; w < cfg.tokens_per_record; ++w) t += " " + domain_token(d, rng.below(cfg.domain_vocab_size));
      for (std::size_t w = 0; w < cfg.tokens_per_record; ++w) {
        t += " " + value_token(u.cluster, rng.below(cfg.value_vocab_size));
      }
      char rid[32];
      std::snprintf(rid, sizeof rid, "%s-r%02zu", id, k);
      pop.records.push_back(UserRecord{rid, u.user_id, static_cast<std::int64_t>(1700000000 + i * 100000 + k * 60),
                                       RecordKind::Post, t, std::nullopt});
    }

    std::vector<std::size_t> task_domains;
    if (u.lurker) {
      for (std::size_t d = 0; d < cfg.n_domains; ++d) {
        if (!std::binary_search(u.domains.begin(), u.domains.end(), d)) task_domains.push_back(d);
      }
    } else {
      for (std::size_t d = 0; d < cfg.n_domains; ++d) task_domains.push_back(d);
    }
    rng.shuffle(task_domains);
    for (std::size_t t = 0; t < cfg.tasks_per_user; ++t) {
      const auto d = task_domains[t % task_domains.size()];
      QueryTask task;
      task.task_id = u.user_id + "-t" + std::to_string(t);
      task.user_id = u.user_id;
      task.kind = TaskKind::ResponseForecast;
      task.stimulus = "News headline about " + domain_tag(d) + ": a new development is announced.";
      task.gold = gold_for(u.cluster, d);

      OracleEntry e;
      e.user_id = u.user_id;
      e.required_domain = domain_tag(d);
      for (std::size_t j = 0; j < cfg.domain_vocab_size; ++j) e.vocabulary.push_back(domain_token(d, j));
      e.gold = *task.gold;
      e.lurker = u.lurker;
      e.domain_covered = std::binary_search(u.domains.begin(), u.domains.end(), d);
      pop.key.emplace(task.task_id, std::move(e));
      pop.tasks.push_back(std::move(task));
    }
    pop.users.push_back(std::move(u));
  }
  return pop;
}

Label rotate_label(const Label& gold, TaskKind kind, std::size_t n_options) {
  Label l = gold;
  if (kind == TaskKind::ResponseForecast) {
    l.intensity = (gold.intensity.value_or(0) + 1) % 4;
    l.polarity = static_cast<Polarity>((static_cast<int>(gold.polarity.value_or(Polarity::Neutral)) + 1) % 3);
  } else {
    l.choice_index = (gold.choice_index.value_or(0) + 1) % std::max<std::size_t>(n_options, 1);
  }
  return l;
}

std::string oracle_respond(std::string_view prompt, const OracleKey& key, const std::string& task_id) {
  auto it = key.find(task_id);
  if (it == key.end()) throw Error(ErrorCode::UnknownTask, task_id);
  const auto& e = it->second;
  const std::set<std::string> vocab(e.vocabulary.begin(), e.vocabulary.end());
  bool evidence = false;
  for (const auto& tok : text::tokenize(prompt)) {
    if (vocab.count(tok)) {
      evidence = true;
      break;
    }
  }
  const auto kind = e.gold.choice_index ? TaskKind::OpinionChoice : TaskKind::ResponseForecast;
  return format_label(evidence ? e.gold : rotate_label(e.gold, kind, e.n_options), kind, e.n_options);
}

namespace {

struct Item {
  std::string id;
  std::string text;
};

std::vector<Item> prompt_items(std::string_view prompt) {
  static const std::regex line_re(R"(^\[([^\]\s]+)\] (.*)$)");
  std::vector<Item> out;
  std::set<std::string> seen;
  for (const auto& line : text::split_lines(prompt)) {
    std::smatch m;
    const std::string s(line);
    if (std::regex_match(s, m, line_re) && seen.insert(m[1]).second) out.push_back({m[1], m[2]});
  }
  return out;
}

std::string value_tokens_of(const std::vector<Item>& items) {
  std::set<std::string> vals;
  for (const auto& it : items) {
    for (const auto& tok : text::tokenize(it.text)) {
      if (tok.rfind("val", 0) == 0) vals.insert(tok);
    }
  }
  std::vector<std::string> v(vals.begin(), vals.end());
  return text::join(v, " ");
}

std::string all_ids(const std::vector<Item>& items) {
  std::vector<std::string> ids;
  for (const auto& it : items) ids.push_back(it.id);
  return text::join(ids, ", ");
}

}  // namespace

Responder synth_responder(std::shared_ptr<const OracleKey> key) {
  return [key = std::move(key)](const AnalyzerRequest& req) -> std::string {
    std::string name = req.prompt_name;
    if (name.size() > 7 && name.ends_with("_repair")) name.resize(name.size() - 7);
    const auto& prompt = req.rendered_prompt;

    if (name.rfind("predict_", 0) == 0) {
      static const std::regex task_re(R"(\[task ([^\]]+)\])");
      std::smatch m;
      const std::string s(prompt);
      if (!std::regex_search(s, m, task_re)) throw Error(ErrorCode::UnknownTask, "prompt carries no task id");
      return oracle_respond(prompt, *key, m[1]);
    }

    const auto items = prompt_items(prompt);
    if (name == "distill" || name == "merge") {
      if (items.empty()) return "- (none)";
      std::string out;
      for (const auto& it : items) out += "- " + it.text + " (sources: " + it.id + ")\n";
      return out;
    }
    if (name == "induce") {
      const auto vals = value_tokens_of(items);
      if (vals.empty()) return "- (none)";
      return "- holds values " + vals + " (sources: " + all_ids(items) + ")\n";
    }
    if (name == "cache") {
      const auto vals = value_tokens_of(items);
      std::vector<std::string> keys = default_taxonomy();
      for (const auto& line : text::split_lines(prompt)) {
        if (text::starts_with_ci(line, "Categories:")) {
          keys.clear();
          for (const auto& k : text::split(line.substr(11), ',')) keys.emplace_back(text::trim(k));
        }
      }
      std::string out;
      for (const auto& k : keys) {
        if (k == "values_and_beliefs" && !vals.empty()) {
          out += "- [" + k + "] " + vals + " (sources: " + all_ids(items) + ")\n";
        } else {
          out += "- [" + k + "] unknown\n";
        }
      }
      return out;
    }
    if (name == "intsum") {
      std::set<std::string> toks;
      for (const auto& it : items) {
        for (const auto& t : text::tokenize(it.text)) toks.insert(t);
      }
      std::vector<std::string> v(toks.begin(), toks.end());
      return "User writes about " + text::join(v, " ");
    }
    throw Error(ErrorCode::TranscriptMiss, "synthetic analyzer has no rule for prompt '" + req.prompt_name + "'");
  };
}

}  // namespace personadb
