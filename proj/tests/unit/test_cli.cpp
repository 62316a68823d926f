#include <doctest.h>

#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "personadb/cli.hpp"
#include "personadb/config.hpp"
#include "personadb/infer.hpp"
#include "personadb/store.hpp"
#include "personadb/text.hpp"

using namespace personadb;

namespace {

struct Outcome {
  int status;
  ordered_json out;
  ordered_json err;
};

Outcome invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int status = cli::run(args, out, err);
  auto parse = [](const std::string& s) { return s.empty() ? ordered_json() : ordered_json::parse(s); };
  return {status, parse(out.str()), parse(err.str())};
}

void write_text(const std::filesystem::path& p, const std::string& s) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream(p) << s;
}

// --set flags shared by every pipeline step over a synthetic population in `dir`.
std::vector<std::string> synth_sets(const fixtures::TempDir& dir) {
  const auto data = dir / "data";
  return {"--set",
          "store_path=" + (dir / "store").string(),
          "runs_dir=" + (dir / "runs").string(),
          "data.synth_out=" + data.string(),
          "data.corpus=" + (data / "corpus.jsonl").string(),
          "data.tasks=" + (data / "tasks.jsonl").string(),
          "backend.scripted.responder=synth",
          "backend.scripted.oracle_key=" + (data / "oracle_key.json").string(),
          "backend.scripted.vocabulary=" + (data / "vocabulary.json").string(),
          "synth.n_users=8",
          "synth.n_clusters=2",
          "composition.r=8"};
}

std::vector<std::string> cmd(const std::string& name, std::vector<std::string> rest) {
  rest.insert(rest.begin(), name);
  return rest;
}

}  // namespace

TEST_CASE("overrides beat the file, which beats defaults") {
  fixtures::TempDir dir;
  write_text(dir / "c.json", R"({"composition": {"r": 12, "x": 0.5}, "seed": 3})");
  const auto cfg = RunConfig::resolve(dir / "c.json", {"composition.r=20", "method.name=random"});
  CHECK(cfg.composition.r == 20);
  CHECK(cfg.composition.x == doctest::Approx(0.5));
  CHECK(cfg.seed == 3);
  CHECK(cfg.resolved["composition"]["r"] == 20);
  CHECK(cfg.resolved["join"]["k"] == 5);
  CHECK(cfg.method.name == MethodName::Random);
  CHECK(cfg.digest.size() == 64);
  CHECK(RunConfig::resolve(std::nullopt, {}).digest != cfg.digest);
  CHECK(RunConfig::resolve(std::nullopt, {}).composition.r == 40);
  CHECK(RunConfig::resolve(std::nullopt, {}).composition.x == doctest::Approx(0.25));
}

TEST_CASE("malformed and invalid configs are ConfigErrors with context") {
  fixtures::TempDir dir;
  write_text(dir / "bad.json", "{\n  \"seed\": 1,\n  \"composition\": {\"r\": }\n}\n");
  auto o = invoke({"predict", "-c", (dir / "bad.json").string(), "--dry-run"});
  CHECK(o.status == 2);
  CHECK(o.err["status"] == "error");
  CHECK(o.err["code"] == "ConfigError");
  CHECK(o.err["message"].get<std::string>().find("line 3") != std::string::npos);

  write_text(dir / "unknown.json", R"({"composition": {"rr": 3}})");
  auto u = invoke({"predict", "-c", (dir / "unknown.json").string(), "--dry-run"});
  CHECK(u.status == 2);
  CHECK(u.err["message"].get<std::string>().find("composition.rr") != std::string::npos);

  auto t = invoke({"predict", "--set", "composition.r=\"many\"", "--dry-run"});
  CHECK(t.status == 2);
  CHECK(t.err["message"].get<std::string>().find("composition.r") != std::string::npos);

  auto n = invoke({"predict", "--set", "noequals", "--dry-run"});
  CHECK(n.status == 2);

  auto usage = invoke({"frobnicate"});
  CHECK(usage.status == 2);
  CHECK(usage.err["code"] == "UsageError");
}

TEST_CASE("predict --dry-run on 100 tasks plans 100 calls and contacts nothing") {
  fixtures::TempDir dir;
  std::vector<QueryTask> tasks;
  for (int i = 0; i < 100; ++i) {
    QueryTask t;
    t.task_id = "t" + std::to_string(i);
    t.user_id = "u";
    t.stimulus = "headline";
    tasks.push_back(t);
  }
  write_text(dir / "tasks.jsonl", serialize_tasks(tasks));
  auto o = invoke({"predict", "--dry-run", "--set", "data.tasks=" + (dir / "tasks.jsonl").string(),
                   "runs_dir=" + (dir / "runs").string()});
  CHECK_MESSAGE(o.status == 0, o.err.dump());
  CHECK(o.out["predicted_analyzer_calls"] == 100);
  CHECK(o.out["backend_calls"] == 0);
  CHECK_FALSE(std::filesystem::exists(dir / "runs"));
}

TEST_CASE("synth, build, join, predict and eval end to end") {
  fixtures::TempDir dir;
  const auto sets = synth_sets(dir);

  auto s = invoke(cmd("synth", sets));
  REQUIRE(s.status == 0);
  CHECK(s.out["users"] == 8);
  CHECK(std::filesystem::exists(dir / "data/tasks.jsonl"));
  const std::filesystem::path synth_run = s.out["run_dir"].get<std::string>();
  CHECK(std::filesystem::exists(synth_run / "manifest.json"));
  CHECK(std::filesystem::exists(synth_run / "config.json"));
  const auto first_journal_line = text::split_lines(read_file(synth_run / "journal.jsonl")).front();
  CHECK(ordered_json::parse(first_journal_line)["kind"] == "config");
  CHECK(synth_run.filename().string().find(s.out["config_digest"].get<std::string>().substr(0, 12)) !=
        std::string::npos);

  auto b = invoke(cmd("build", sets));
  REQUIRE(b.status == 0);
  CHECK(b.out["ok"] == 8);
  const auto persona = read_file(PersonaStore(dir / "store").user_dir("u000") / "persona.json");

  auto b2 = invoke(cmd("build", sets));
  REQUIRE(b2.status == 0);
  CHECK(b2.out["skipped_existing"].get<int>() > 0);
  CHECK(read_file(PersonaStore(dir / "store").user_dir("u000") / "persona.json") == persona);

  auto e = invoke(cmd("embed-cache", sets));
  CHECK(e.status == 0);

  auto j = invoke(cmd("join", sets));
  REQUIRE(j.status == 0);
  CHECK(j.out["joined"] == 8);
  const std::filesystem::path join_run = j.out["run_dir"].get<std::string>();
  const auto collab = ordered_json::parse(read_file(join_run / "collab/u000.json"))["collaborators"];
  REQUIRE(collab.size() == 5);
  // Three cluster-mates first; the other cluster's users trail at zero similarity.
  for (int i = 0; i < 3; ++i) CHECK(collab[i]["psi"].get<double>() > 0.0);
  CHECK(collab[3]["psi"].get<double>() == doctest::Approx(0.0));

  auto r = invoke(cmd("retrieve", [&] {
    auto v = sets;
    v.insert(v.begin(), {"--user", "u000", "--query", "dom0 news"});
    return v;
  }()));
  CHECK(r.status == 0);
  CHECK(r.out["n_self"].get<int>() + r.out["n_collab"].get<int>() == 8);

  auto p = invoke(cmd("predict", sets));
  REQUIRE(p.status == 0);
  const std::filesystem::path pred_run = p.out["run_dir"].get<std::string>();
  const auto preds = read_predictions_jsonl(pred_run / "predictions.jsonl");
  CHECK(preds.size() == 24);

  auto v = invoke(cmd("eval", [&] {
    auto x = sets;
    x.insert(x.begin(), {"--predictions", (pred_run / "predictions.jsonl").string()});
    return x;
  }()));
  REQUIRE(v.status == 0);
  const std::filesystem::path eval_run = v.out["run_dir"].get<std::string>();
  const auto report = ordered_json::parse(read_file(eval_run / "report.json"));
  CHECK(report["n"] == 24);
  CHECK(report["method"] == "persona_db");
  CHECK(report["config_digest"] == v.out["config_digest"]);
  CHECK(report["cohorts"].contains("lurkers"));
  CHECK(std::filesystem::exists(eval_run / "report.txt"));

  auto sw = invoke(cmd("sweep", [&] {
    auto x = sets;
    x.push_back("sweep.r_values=[4,8]");
    x.push_back("sweep.x_values=[0,0.5]");
    return x;
  }()));
  REQUIRE(sw.status == 0);
  const auto csv = read_file(std::filesystem::path(sw.out["run_dir"].get<std::string>()) / "sweep.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
}

TEST_CASE("join on an unknown user reports a machine-readable error") {
  fixtures::TempDir dir;
  auto sets = synth_sets(dir);
  REQUIRE(invoke(cmd("synth", sets)).status == 0);
  sets.insert(sets.begin(), {"--user", "ghost"});
  auto o = invoke(cmd("join", sets));
  CHECK(o.status == 1);
  CHECK(o.err["code"] == "UnknownUser");
  CHECK(o.err["command"] == "join");
}
