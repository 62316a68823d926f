#include "personadb/cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <ctime>
#include <iostream>
#include <optional>

#include "personadb/engine.hpp"
#include "personadb/synth.hpp"

namespace personadb::cli {

namespace {

// Exit statuses.
constexpr int kOk = 0;
constexpr int kFailed = 1;
constexpr int kUsage = 2;
constexpr int kPartial = 3;

struct Args {
  std::optional<std::string> config;
  std::vector<std::string> sets;
  bool dry_run = false;
  std::optional<std::string> user;
  std::optional<std::string> query;
  std::optional<std::string> predictions;
};

std::string utc_stamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

/// Per-run output directory `<runs_dir>/<UTC timestamp>-<digest prefix>`.
class Run {
 public:
  Run(const std::string& command, const RunConfig& cfg) : command_(command), cfg_(cfg) {
    const auto base = utc_stamp() + "-" + cfg.digest.substr(0, 12);
    std::filesystem::create_directories(cfg.runs_dir);
    dir_ = cfg.runs_dir / base;
    for (int n = 1; !std::filesystem::create_directory(dir_); ++n) dir_ = cfg.runs_dir / (base + "-" + std::to_string(n));
    journal_ = std::make_shared<Journal>(dir_ / "journal.jsonl");
    ordered_json c;
    c["kind"] = "config";
    c["command"] = command;
    c["config_digest"] = cfg.digest;
    c["config"] = cfg.resolved;
    journal_->append(c);
    ordered_json doc;
    doc["config_digest"] = cfg.digest;
    doc["config"] = cfg.resolved;
    write("config.json", doc.dump(2) + "\n");
  }

  const std::filesystem::path& dir() const { return dir_; }
  std::shared_ptr<Journal> journal() const { return journal_; }

  void write(const std::string& name, const std::string& contents) {
    const auto p = dir_ / name;
    std::filesystem::create_directories(p.parent_path());
    write_file_atomic(p, contents);
    artifacts_.push_back(name);
  }

  ordered_json finish(const std::string& status, ordered_json summary) {
    summary["status"] = status;
    summary["command"] = command_;
    summary["config_digest"] = cfg_.digest;
    summary["run_dir"] = dir_.string();
    ordered_json manifest = summary;
    manifest["artifacts"] = artifacts_;
    write_file_atomic(dir_ / "manifest.json", manifest.dump(2) + "\n");
    return summary;
  }

 private:
  std::string command_;
  const RunConfig& cfg_;
  std::filesystem::path dir_;
  std::shared_ptr<Journal> journal_;
  std::vector<std::string> artifacts_;
};

std::vector<QueryTask> load_tasks(const RunConfig& cfg) {
  if (!cfg.tasks) throw Error(ErrorCode::ConfigError, "data.tasks is not set");
  return read_tasks_jsonl(*cfg.tasks);
}

std::size_t eval_task_count(const std::vector<QueryTask>& tasks) {
  return static_cast<std::size_t>(
      std::count_if(tasks.begin(), tasks.end(), [](const QueryTask& t) { return t.split != "train"; }));
}

std::size_t ingest_new(PersonaStore& store, const std::filesystem::path& corpus, std::size_t* skipped) {
  std::vector<UserRecord> fresh;
  for (auto& r : read_records_jsonl(corpus)) {
    if (store.has_record(r.record_id)) {
      ++*skipped;
    } else {
      fresh.push_back(std::move(r));
    }
  }
  return store.ingest_records(fresh);
}

ordered_json failures_json(const std::vector<TaskFailure>& failures) {
  ordered_json a = ordered_json::array();
  for (const auto& f : failures) {
    ordered_json j;
    j["task_id"] = f.task_id;
    j["code"] = std::string(to_string(f.code));
    j["message"] = f.message;
    a.push_back(std::move(j));
  }
  return a;
}

std::string jsonl(const ordered_json& arr) {
  std::string out;
  for (const auto& j : arr) out += j.dump() + "\n";
  return out;
}

// ---- commands ----

ordered_json cmd_ingest(const RunConfig& cfg, const Args& a, int& status) {
  if (!cfg.corpus) throw Error(ErrorCode::ConfigError, "data.corpus is not set");
  if (a.dry_run) {
    const auto records = read_records_jsonl(*cfg.corpus);
    return {{"status", "dry_run"}, {"command", "ingest"}, {"records", records.size()}, {"backend_calls", 0}};
  }
  Run run("ingest", cfg);
  PersonaStore store(cfg.store_path, cfg.refine.taxonomy);
  std::size_t skipped = 0;
  const auto users = ingest_new(store, *cfg.corpus, &skipped);
  status = kOk;
  return run.finish("ok", {{"users_touched", users}, {"skipped_existing", skipped}});
}

ordered_json cmd_synth(const RunConfig& cfg, const Args& a, int& status) {
  const auto pop = generate_population(cfg.synth);
  if (a.dry_run) {
    return {{"status", "dry_run"}, {"command", "synth"}, {"users", pop.users.size()},
            {"records", pop.records.size()}, {"tasks", pop.tasks.size()}, {"backend_calls", 0}};
  }
  Run run("synth", cfg);
  pop.write(run.dir() / "data");
  if (cfg.synth_out) pop.write(*cfg.synth_out);
  std::size_t lurkers = 0;
  for (const auto& u : pop.users) lurkers += u.lurker ? 1 : 0;
  status = kOk;
  ordered_json s;
  s["users"] = pop.users.size();
  s["lurkers"] = lurkers;
  s["records"] = pop.records.size();
  s["tasks"] = pop.tasks.size();
  s["data_dir"] = (cfg.synth_out ? *cfg.synth_out : run.dir() / "data").string();
  return run.finish("ok", s);
}

ordered_json cmd_build(const RunConfig& cfg, const Args& a, int& status) {
  if (a.dry_run) {
    PersonaStore store(cfg.store_path, cfg.refine.taxonomy);
    std::map<std::string, std::size_t> lengths;
    for (const auto& id : store.user_ids()) lengths[id] = store.load_database(id).history.size();
    std::size_t pending = 0;
    if (cfg.corpus) {
      for (const auto& r : read_records_jsonl(*cfg.corpus)) {
        if (!store.has_record(r.record_id)) {
          ++lengths[r.user_id];
          ++pending;
        }
      }
    }
    std::size_t calls = 0;
    for (const auto& [id, n] : lengths) {
      if (n == 0) continue;
      const auto batches = cfg.refine.include_dp ? (n + cfg.refine.batch_size - 1) / cfg.refine.batch_size : 0;
      const auto ip_batches = (n + cfg.refine.batch_size - 1) / cfg.refine.batch_size;
      calls += batches + (batches > 1 ? 1 : 0);
      if (cfg.refine.include_ip) calls += ip_batches + (ip_batches > 1 ? 1 : 0);
      calls += 1;
    }
    return {{"status", "dry_run"}, {"command", "build"}, {"users", lengths.size()}, {"records_to_ingest", pending},
            {"estimated_analyzer_calls", calls}, {"backend_calls", 0}};
  }
  Run run("build", cfg);
  Engine engine(cfg, run.journal());
  std::size_t skipped = 0;
  std::size_t touched = 0;
  if (cfg.corpus) touched = ingest_new(engine.store(), *cfg.corpus, &skipped);
  const auto users = engine.store().user_ids();
  const auto report = refine_all(engine.store(), engine.gateway(), users, cfg.refine, cfg.max_parallel_users);
  run.write("refine_report.json", report.to_json().dump(2) + "\n");
  const auto failed = users.size() - report.ok_count();
  status = failed == 0 ? kOk : kPartial;
  return run.finish(failed == 0 ? "ok" : "partial", {{"users", users.size()}, {"ok", report.ok_count()},
                                                     {"failed", failed}, {"ingested_users", touched},
                                                     {"skipped_existing", skipped}});
}

std::vector<std::string> target_users(PersonaStore& store, const Args& a) {
  if (a.user) {
    if (!store.has_user(*a.user)) throw Error(ErrorCode::UnknownUser, *a.user);
    return {*a.user};
  }
  return store.user_ids();
}

ordered_json cmd_embed_cache(const RunConfig& cfg, const Args& a, int& status) {
  if (a.dry_run) {
    PersonaStore store(cfg.store_path, cfg.refine.taxonomy);
    const auto users = target_users(store, a);
    return {{"status", "dry_run"}, {"command", "embed-cache"}, {"users", users.size()},
            {"estimated_embed_calls", users.size()}, {"backend_calls", 0}};
  }
  Run run("embed-cache", cfg);
  Engine engine(cfg, run.journal());
  ordered_json rows = ordered_json::array();
  std::size_t failed = 0;
  for (const auto& id : target_users(engine.store(), a)) {
    ordered_json row;
    row["user_id"] = id;
    try {
      const auto v = engine.joins().cache_embedding(id);
      row["dims"] = engine.gateway().dims();
      row["zero_norm"] = !v.has_value();
    } catch (const Error& e) {
      ++failed;
      row["error"] = std::string(to_string(e.code()));
      row["message"] = e.detail();
    }
    rows.push_back(std::move(row));
  }
  run.write("cache_embeddings.jsonl", jsonl(rows));
  status = failed == 0 ? kOk : kPartial;
  return run.finish(failed == 0 ? "ok" : "partial", {{"users", rows.size()}, {"failed", failed}});
}

ordered_json cmd_join(const RunConfig& cfg, const Args& a, int& status) {
  const auto m = cfg.method.resolved();
  if (a.dry_run) {
    PersonaStore store(cfg.store_path, cfg.refine.taxonomy);
    const auto users = target_users(store, a);
    return {{"status", "dry_run"}, {"command", "join"}, {"users", users.size()}, {"k", m.join.k},
            {"estimated_embed_calls", store.user_ids().size()}, {"backend_calls", 0}};
  }
  Run run("join", cfg);
  Engine engine(cfg, run.journal());
  std::size_t failed = 0, done = 0;
  ordered_json failures = ordered_json::array();
  for (const auto& id : target_users(engine.store(), a)) {
    try {
      const auto cdb = engine.joins().join(id, m.join);
      run.write("collab/" + encode_path_component(id) + ".json", cdb.summary_json().dump(2) + "\n");
      ++done;
    } catch (const Error& e) {
      ++failed;
      failures.push_back({{"user_id", id}, {"code", std::string(to_string(e.code()))}, {"message", e.detail()}});
    }
  }
  if (failed > 0) run.write("join_failures.jsonl", jsonl(failures));
  status = failed == 0 ? kOk : kPartial;
  return run.finish(failed == 0 ? "ok" : "partial", {{"joined", done}, {"failed", failed}});
}

ordered_json cmd_retrieve(const RunConfig& cfg, const Args& a, int& status) {
  if (!a.user || !a.query) throw Error(ErrorCode::ConfigError, "retrieve needs --user and --query");
  const auto m = cfg.method.resolved();
  if (a.dry_run) {
    return {{"status", "dry_run"}, {"command", "retrieve"}, {"r", m.composition.r},
            {"n_collab_quota", collaborative_quota(m.composition.r, m.composition.x)}, {"backend_calls", 0}};
  }
  Run run("retrieve", cfg);
  Engine engine(cfg, run.journal());
  const auto rset = engine.retriever().retrieve_for_query(*a.user, *a.query, m.composition, m.join);
  auto doc = rset.to_json();
  doc["query"] = *a.query;
  doc["user_id"] = *a.user;
  run.write("retrieval.json", doc.dump(2) + "\n");
  status = kOk;
  return run.finish("ok", {{"n_self", rset.n_self}, {"n_collab", rset.n_collab}});
}

ordered_json cmd_predict(const RunConfig& cfg, const Args& a, int& status) {
  const auto tasks = load_tasks(cfg);
  const auto n = eval_task_count(tasks);
  if (a.dry_run) {
    return {{"status", "dry_run"},
            {"command", "predict"},
            {"method", std::string(to_string(cfg.method.name))},
            {"tasks", n},
            {"predicted_analyzer_calls", cfg.method.uses_analyzer() ? n : 0},
            {"backend_calls", 0}};
  }
  Run run("predict", cfg);
  Engine engine(cfg, run.journal());
  const auto res = run_method(engine.predictor(), cfg.method, tasks, engine.journal(), {cfg.workers});
  run.write("predictions.jsonl", serialize_predictions(res.predictions));
  if (!res.failures.empty()) run.write("failures.jsonl", jsonl(failures_json(res.failures)));
  status = res.failures.empty() ? kOk : kPartial;
  return run.finish(res.failures.empty() ? "ok" : "partial",
                    {{"predictions", res.predictions.size()}, {"failed", res.failures.size()}});
}

ordered_json cmd_eval(const RunConfig& cfg, const Args& a, int& status) {
  const auto tasks = load_tasks(cfg);
  if (a.dry_run) {
    const auto n = eval_task_count(tasks);
    const bool calls = !a.predictions && cfg.method.uses_analyzer();
    return {{"status", "dry_run"}, {"command", "eval"}, {"tasks", n},
            {"predicted_analyzer_calls", calls ? n : 0}, {"backend_calls", 0}};
  }
  Run run("eval", cfg);
  std::vector<Prediction> preds;
  EvalReport report;
  std::vector<TaskFailure> failures;
  std::vector<QueryTask> eval_tasks;
  for (const auto& t : tasks) {
    if (t.split != "train") eval_tasks.push_back(t);
  }
  if (a.predictions) {
    preds = read_predictions_jsonl(*a.predictions);
    report = evaluate(eval_tasks, preds);
  } else {
    Engine engine(cfg, run.journal());
    auto res = run_method(engine.predictor(), cfg.method, tasks, engine.journal(), {cfg.workers});
    preds = std::move(res.predictions);
    failures = std::move(res.failures);
    report = std::move(res.report);
    run.write("predictions.jsonl", serialize_predictions(preds));
  }

  const std::string method = preds.empty() ? std::string(to_string(cfg.method.name)) : preds.front().method;
  auto doc = report.to_json();
  doc["method"] = method;
  doc["config_digest"] = cfg.digest;

  PersonaStore store(cfg.store_path, cfg.refine.taxonomy);
  std::map<std::string, std::size_t> lengths;
  for (const auto& id : store.user_ids()) lengths[id] = store.load_database(id).history.size();
  const auto cohorts = slice_cohorts(lengths, cfg.lurker_max_records, cfg.frequent_top_n);
  ordered_json cj;
  for (const auto& [name, rep] : cohort_reports(eval_tasks, preds, cohorts)) cj[name] = rep.to_json();
  doc["cohorts"] = cj;

  run.write("report.json", doc.dump(2) + "\n");
  run.write("report.txt", report.to_table(method));
  if (!failures.empty()) run.write("failures.jsonl", jsonl(failures_json(failures)));
  status = failures.empty() ? kOk : kPartial;
  ordered_json s;
  s["n"] = report.n;
  s["accuracy"] = report.accuracy ? ordered_json(*report.accuracy) : ordered_json(nullptr);
  s["pearson"] = report.pearson ? ordered_json(*report.pearson) : ordered_json(nullptr);
  s["failed"] = failures.size();
  return run.finish(failures.empty() ? "ok" : "partial", s);
}

ordered_json cmd_sweep(const RunConfig& cfg, const Args& a, int& status) {
  const auto tasks = load_tasks(cfg);
  if (a.dry_run) {
    const auto cells = cfg.sweep_r.size() * cfg.sweep_x.size();
    return {{"status", "dry_run"}, {"command", "sweep"}, {"cells", cells},
            {"predicted_analyzer_calls", cells * eval_task_count(tasks)}, {"backend_calls", 0}};
  }
  Run run("sweep", cfg);
  Engine engine(cfg, run.journal());
  const auto cells = sweep(engine.predictor(), cfg.method, tasks, cfg.sweep_r, cfg.sweep_x, engine.journal(),
                           {cfg.workers});
  run.write("sweep.csv", sweep_csv(cells));
  std::size_t failed = 0;
  for (const auto& c : cells) failed += c.reason.empty() ? 0 : 1;
  if (failed > 0) run.write("sweep_failures.csv", sweep_failures_csv(cells));
  status = kOk;
  return run.finish("ok", {{"cells", cells.size()}, {"failed_cells", failed}});
}

ordered_json error_record(const std::string& command, const std::string& code, const std::string& message) {
  ordered_json j;
  j["status"] = "error";
  j["command"] = command;
  j["code"] = code;
  j["message"] = message;
  return j;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"personadb: persona databases, collaborative joins and evaluation"};
  app.require_subcommand(1);
  Args a;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", a.config, "JSON config file");
    sub->add_option("--set", a.sets, "Override a config field, e.g. --set composition.r=8")->take_all();
    sub->add_flag("--dry-run", a.dry_run, "Print the plan without contacting any backend");
  };

  using Handler = ordered_json (*)(const RunConfig&, const Args&, int&);
  std::vector<std::pair<CLI::App*, Handler>> commands;
  auto add = [&](const char* name, const char* help, Handler h) {
    auto* sub = app.add_subcommand(name, help);
    add_common(sub);
    commands.emplace_back(sub, h);
    return sub;
  };
  add("ingest", "Append corpus records to the store", cmd_ingest);
  add("synth", "Generate the synthetic population", cmd_synth);
  add("build", "Ingest the corpus and refine every user's persona database", cmd_build);
  add("embed-cache", "Embed every user's Cache layer", cmd_embed_cache)->add_option("--user", a.user);
  add("join", "Select collaborators and write collab.json per user", cmd_join)->add_option("--user", a.user);
  auto* retr = add("retrieve", "Compose a retrieval set for one query", cmd_retrieve);
  retr->add_option("--user", a.user)->required();
  retr->add_option("--query", a.query)->required();
  add("predict", "Predict every task with the configured method", cmd_predict);
  add("eval", "Score predictions (or run the method) and write the report", cmd_eval)
      ->add_option("--predictions", a.predictions, "Score an existing predictions file");
  add("sweep", "Run the method over the r x composition grid", cmd_sweep);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << error_record("", "UsageError", e.what()).dump() << "\n";
    return kUsage;
  }

  for (const auto& [sub, handler] : commands) {
    if (!sub->parsed()) continue;
    const std::string name = sub->get_name();
    try {
      std::optional<std::filesystem::path> file;
      if (a.config) file = *a.config;
      const auto cfg = RunConfig::resolve(file, a.sets);
      int status = kOk;
      const auto summary = handler(cfg, a, status);
      out << summary.dump() << "\n";
      return status;
    } catch (const Error& e) {
      err << error_record(name, std::string(to_string(e.code())), e.detail()).dump() << "\n";
      return e.code() == ErrorCode::ConfigError ? kUsage : kFailed;
    } catch (const std::exception& e) {
      err << error_record(name, "InternalError", e.what()).dump() << "\n";
      return kFailed;
    }
  }
  return kUsage;
}

}  // namespace personadb::cli
