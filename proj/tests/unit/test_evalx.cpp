#include <doctest.h>

#include <random>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "personadb/evalx.hpp"
#include "personadb/intsum.hpp"
#include "personadb/metrics.hpp"

using namespace personadb;

namespace {

double pr(std::vector<double> x, std::vector<double> y) { return pearson(x, y); }
double sp(std::vector<double> x, std::vector<double> y) { return spearman(x, y); }

F1Scores f1(const std::vector<int>& p, const std::vector<int>& g) {
  return micro_macro_f1<int>(std::span<const int>(p), std::span<const int>(g));
}

QueryTask forecast_task(const std::string& id, int intensity, Polarity pol, const std::string& split = "") {
  QueryTask t;
  t.task_id = id;
  t.user_id = "u000";
  t.stimulus = "headline " + id;
  t.gold = Label{intensity, pol, std::nullopt};
  t.split = split;
  return t;
}

Prediction pred_for(const QueryTask& t, Label l, ParseStatus s = ParseStatus::Clean) {
  return Prediction{t.task_id, t.user_id, "m", std::move(l), "", s, "", ""};
}

MethodConfig method_of(const fixtures::SynthWorld& w, MethodName name) {
  MethodConfig m;
  m.name = name;
  m.composition = w.cfg.composition;
  m.join = w.cfg.join;
  return m;
}

}  // namespace

TEST_CASE("pearson examples") {
  CHECK(pr({1, 2, 3}, {6, 4, 2}) == doctest::Approx(-1.0));
  CHECK(pr({1, 2, 3}, {2, 4, 6}) == doctest::Approx(1.0));
  CHECK(pr({1, 2, 3, 4}, {1, 3, 2, 4}) == doctest::Approx(0.8));
  try {
    pr({1, 1, 1}, {1, 2, 3});
    FAIL("expected DegenerateSeries");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateSeries);
  }
  try {
    pr({}, {});
    FAIL("expected EmptySeries");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptySeries);
  }
  CHECK_THROWS_AS(pr({1, 2}, {1, 2, 3}), Error);
}

TEST_CASE("spearman examples") {
  CHECK(sp({1, 2, 3, 4}, {1, 8, 27, 64}) == doctest::Approx(1.0));
  CHECK(sp({1, 2, 3}, {3, 1, 2}) == doctest::Approx(-0.5));
  CHECK(sp({1, 2, 2}, {1, 2, 3}) == doctest::Approx(1.5 / std::sqrt(3.0)).epsilon(1e-4));
  CHECK(average_ranks(std::vector<double>{10, 20, 20, 5}) == std::vector<double>{2, 3.5, 3.5, 1});
}

TEST_CASE("f1, accuracy and alignment examples") {
  auto same = f1({0, 1, 2}, {0, 1, 2});
  CHECK(same.micro == doctest::Approx(1.0));
  CHECK(same.macro == doctest::Approx(1.0));
  auto skew = f1({0, 0, 0, 0, 0, 0, 0, 0, 0}, {0, 0, 0, 1, 1, 1, 2, 2, 2});
  CHECK(skew.micro == doctest::Approx(1.0 / 3.0));
  CHECK(skew.macro == doctest::Approx(1.0 / 6.0));
  auto one = f1({2}, {2});
  CHECK(one.micro == doctest::Approx(1.0));
  CHECK(one.macro == doctest::Approx(1.0));

  std::vector<int> p = {1, 2, 3, 0}, g = {1, 2, 3, 3};
  CHECK(accuracy<int>(std::span<const int>(p), std::span<const int>(g)) == doctest::Approx(0.75));
  std::vector<int> wrong = {0, 0}, right = {1, 1};
  CHECK(accuracy<int>(std::span<const int>(wrong), std::span<const int>(right)) == 0.0);
  std::vector<int> none;
  CHECK_THROWS_AS(accuracy<int>(std::span<const int>(none), std::span<const int>(none)), Error);

  std::vector<int> a = {0, 3}, b = {1, 1};
  CHECK(alignment_and_mse(a, b).mse == doctest::Approx(2.5));
  std::vector<int> lo = {0}, hi = {3};
  CHECK(alignment_and_mse(lo, hi).alignment == doctest::Approx(0.0));
  CHECK(alignment_and_mse(lo, hi).mse == doctest::Approx(9.0));
  CHECK(alignment_and_mse(a, a).alignment == doctest::Approx(1.0));
}

TEST_CASE("metrics agree with brute-force oracles on random data") {
  std::mt19937 rng(21);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + rng() % 30;
    std::vector<double> x(n), y(n);
    std::vector<int> p(n), g(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = static_cast<double>(rng() % 7);
      y[i] = static_cast<double>(rng() % 5);
      p[i] = static_cast<int>(rng() % 4);
      g[i] = static_cast<int>(rng() % 4);
    }
    bool degenerate = std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; }) ||
                      std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; });
    if (!degenerate) {
      CHECK(pearson(x, y) == doctest::Approx(oracle::pearson(x, y)).epsilon(1e-9));
      CHECK(spearman(x, y) == doctest::Approx(oracle::spearman(x, y)).epsilon(1e-9));
    }
    const auto mine = f1(p, g);
    const auto ref = oracle::f1(p, g);
    CHECK(mine.micro == doctest::Approx(ref.micro).epsilon(1e-12));
    CHECK(mine.macro == doctest::Approx(ref.macro).epsilon(1e-12));
    CHECK(mine.micro == doctest::Approx(oracle::accuracy(p, g)).epsilon(1e-12));
  }
}

TEST_CASE("metric invariances") {
  std::mt19937 rng(8);
  std::normal_distribution<double> d;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(12), y(12);
    for (auto& v : x) v = d(rng);
    for (auto& v : y) v = d(rng);
    const double base = pearson(x, y);
    CHECK(base == doctest::Approx(pearson(y, x)));
    auto affine = x;
    for (auto& v : affine) v = 2.5 * v + 7.0;
    CHECK(base == doctest::Approx(pearson(affine, y)).epsilon(1e-9));
    auto cubed = x;
    for (auto& v : cubed) v = v * v * v;
    CHECK(spearman(x, y) == doctest::Approx(spearman(cubed, y)).epsilon(1e-12));
  }
}

TEST_CASE("evaluate scores forecast tasks and notes degenerate correlations") {
  std::vector<QueryTask> tasks = {forecast_task("a", 0, Polarity::Negative), forecast_task("b", 1, Polarity::Neutral),
                                  forecast_task("c", 3, Polarity::Positive), forecast_task("d", 2, Polarity::Neutral)};
  std::vector<Prediction> preds;
  for (const auto& t : tasks) preds.push_back(pred_for(t, *t.gold));
  preds.pop_back();
  auto r = evaluate(tasks, preds);
  CHECK(r.n == 3);
  CHECK(r.excluded == 1);
  CHECK(*r.accuracy == doctest::Approx(1.0));
  CHECK(*r.pearson == doctest::Approx(1.0));
  CHECK(*r.micro_f1 == doctest::Approx(1.0));
  CHECK(*r.mse == doctest::Approx(0.0));

  std::vector<Prediction> flat;
  for (const auto& t : tasks) flat.push_back(pred_for(t, Label{1, Polarity::Neutral, std::nullopt}, ParseStatus::Defaulted));
  auto f = evaluate(tasks, flat);
  CHECK_FALSE(f.pearson.has_value());
  CHECK_FALSE(f.notes.empty());
  CHECK(f.defaulted_rate == doctest::Approx(1.0));
  CHECK(f.to_table("flat").find("flat") != std::string::npos);
  CHECK(f.to_json()["pearson"].is_null());
}

TEST_CASE("majority label and the 50%-Neutral split") {
  std::vector<QueryTask> tasks;
  for (int i = 0; i < 4; ++i) tasks.push_back(forecast_task("n" + std::to_string(i), 1, Polarity::Neutral));
  tasks.push_back(forecast_task("p0", 2, Polarity::Positive));
  tasks.push_back(forecast_task("p1", 2, Polarity::Positive));
  tasks.push_back(forecast_task("x0", 0, Polarity::Negative));
  tasks.push_back(forecast_task("x1", 2, Polarity::Negative));
  const auto m = majority_label(tasks, TaskKind::ResponseForecast);
  CHECK(m.polarity == Polarity::Neutral);
  CHECK(m.intensity == 1);  // 1 and 2 tie at four; smallest wins

  SynthConfig sc;
  sc.n_users = 8;
  sc.n_clusters = 2;
  fixtures::SynthWorld world(sc);
  Journal journal;
  const auto run = run_method(world.engine->predictor(), method_of(world, MethodName::Majority), tasks, journal);
  CHECK(run.failures.empty());
  CHECK(*run.report.micro_f1 == doctest::Approx(0.5));
  CHECK(journal.count("note") >= 1);

  auto with_train = tasks;
  with_train.push_back(forecast_task("t0", 3, Polarity::Positive, "train"));
  Journal j2;
  const auto trained = run_method(world.engine->predictor(), method_of(world, MethodName::Majority), with_train, j2);
  CHECK(trained.predictions.size() == 8);
  CHECK(trained.predictions[0].label.polarity == Polarity::Positive);
}

TEST_CASE("random baseline is reproducible") {
  SynthConfig sc;
  sc.n_users = 8;
  sc.n_clusters = 2;
  fixtures::SynthWorld world(sc);
  Journal j1, j2;
  auto m = method_of(world, MethodName::Random);
  m.seed = 42;
  const auto a = run_method(world.engine->predictor(), m, world.pop.tasks, j1);
  const auto b = run_method(world.engine->predictor(), m, world.pop.tasks, j2);
  CHECK(serialize_predictions(a.predictions) == serialize_predictions(b.predictions));
  CHECK(world.engine->gateway().backend().analyzer_tag() == "scripted");
}

TEST_CASE("collaborative retrieval beats its ablation on the planted population") {
  SynthConfig sc;
  fixtures::SynthWorld world(sc, {"composition.r=8"});
  Journal j1, j2;
  const auto full = run_method(world.engine->predictor(), method_of(world, MethodName::PersonaDb), world.pop.tasks, j1,
                               {4});
  const auto wo = run_method(world.engine->predictor(), method_of(world, MethodName::PersonaDbWoJoin), world.pop.tasks,
                             j2);
  CHECK(full.failures.empty());
  CHECK(*full.report.accuracy > *wo.report.accuracy);
}

TEST_CASE("sweep grid, CSV rows and a failing cell") {
  SynthConfig sc;
  sc.n_users = 8;
  sc.n_clusters = 2;
  fixtures::SynthWorld world(sc, {R"(join.candidate_set=["u000"])"});
  std::vector<QueryTask> own;
  for (const auto& t : world.pop.tasks) {
    if (t.user_id == "u000") own.push_back(t);
  }
  Journal journal;
  const auto cells = sweep(world.engine->predictor(), method_of(world, MethodName::PersonaDb), own, {10, 40},
                           {0.0, 0.25}, journal);
  REQUIRE(cells.size() == 4);
  CHECK(cells[0].n == own.size());
  CHECK(cells[1].n == 0);
  CHECK(cells[1].reason == "NoCandidates");
  const auto csv = sweep_csv(cells);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
  CHECK(csv.rfind("r,x,pearson,accuracy,n\n", 0) == 0);
  CHECK(csv.find("10,0.25,,,") != std::string::npos);
  CHECK(sweep_failures_csv(cells).find("10,0.25,NoCandidates") != std::string::npos);
}

TEST_CASE("intsum summary is cached per user and task kind") {
  auto rig = fixtures::make_rig({"x"}, [](const AnalyzerRequest&) { return std::string("User supports X"); });
  IntSumCache cache(*rig.gateway, PromptSet::defaults());
  PersonaDatabase db;
  db.user_id = "u";
  db.history = {fixtures::record("r1", "u", 1, "I support X")};
  CHECK(cache.summary(db, TaskKind::ResponseForecast) == "User supports X");
  CHECK(cache.summary(db, TaskKind::ResponseForecast) == "User supports X");
  CHECK(rig.backend->analyzer_calls() == 1);
  cache.summary(db, TaskKind::OpinionChoice);
  CHECK(rig.backend->analyzer_calls() == 2);
  PersonaDatabase empty;
  empty.user_id = "e";
  CHECK_THROWS_AS(cache.summary(empty, TaskKind::ResponseForecast), Error);
}

TEST_CASE("cohort slicing") {
  std::map<std::string, std::size_t> lengths = {{"a", 2}, {"b", 5}, {"c", 40}, {"d", 40}, {"e", 12}, {"f", 6}};
  const auto c = slice_cohorts(lengths, 5, 2);
  CHECK(c.lurkers == std::vector<std::string>{"a", "b"});
  CHECK(c.frequent == std::vector<std::string>{"c", "d"});
  CHECK(c.regular == std::vector<std::string>{"e", "f"});
}
