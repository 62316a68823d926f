#include <doctest.h>

#include <set>

#include "fixtures.hpp"
#include "personadb/collab.hpp"
#include "personadb/store.hpp"
#include "personadb/synth.hpp"
#include "personadb/text.hpp"

using namespace personadb;

namespace {

bool mentions(const std::string& text, std::size_t domain) {
  for (const auto& tok : text::tokenize(text)) {
    if (tok.rfind(domain_tag(domain) + "_tok", 0) == 0) return true;
  }
  return false;
}

std::string dir_bytes(const std::filesystem::path& dir) {
  std::string all;
  for (const auto* name : {"corpus.jsonl", "tasks.jsonl", "oracle_key.json", "vocabulary.json"}) {
    all += read_file(dir / name);
  }
  return all;
}

}  // namespace

TEST_CASE("same seed gives byte-identical files; another seed differs") {
  fixtures::TempDir dir;
  SynthConfig cfg;
  generate_population(cfg).write(dir / "a");
  generate_population(cfg).write(dir / "b");
  CHECK(dir_bytes(dir / "a") == dir_bytes(dir / "b"));
  cfg.seed = 8;
  generate_population(cfg).write(dir / "c");
  CHECK(dir_bytes(dir / "a") != dir_bytes(dir / "c"));
}

TEST_CASE("lurker count, record counts and coverage") {
  SynthConfig cfg;
  const auto pop = generate_population(cfg);
  REQUIRE(pop.users.size() == 20);
  std::map<std::string, std::size_t> records;
  for (const auto& r : pop.records) ++records[r.user_id];
  std::size_t lurkers = 0;
  for (const auto& u : pop.users) {
    if (u.lurker) {
      ++lurkers;
      CHECK(records[u.user_id] >= cfg.lurker_records_min);
      CHECK(records[u.user_id] <= cfg.lurker_records_max);
      CHECK(u.domains.size() == cfg.lurker_coverage);
    } else {
      CHECK(records[u.user_id] >= cfg.records_min);
      CHECK(records[u.user_id] <= cfg.records_max);
      CHECK(u.domains.size() == cfg.domain_coverage);
    }
  }
  CHECK(lurkers == 4);
}

TEST_CASE("every task domain is written about by a regular user in every cluster") {
  SynthConfig cfg;
  const auto pop = generate_population(cfg);
  std::map<std::string, const SynthUser*> by_id;
  for (const auto& u : pop.users) by_id[u.user_id] = &u;
  for (const auto& [task_id, entry] : pop.key) {
    const std::size_t domain = std::stoul(entry.required_domain.substr(3));
    for (std::size_t c = 0; c < cfg.n_clusters; ++c) {
      bool covered = false;
      for (const auto& r : pop.records) {
        const auto* u = by_id.at(r.user_id);
        if (u->cluster == c && !u->lurker && mentions(r.text, domain)) covered = true;
      }
      CHECK_MESSAGE(covered, task_id << " cluster " << c);
    }
    // The flag matches the user's own records.
    bool own = false;
    for (const auto& r : pop.records) {
      if (r.user_id == entry.user_id && mentions(r.text, domain)) own = true;
    }
    CHECK(own == entry.domain_covered);
    if (entry.lurker) CHECK_FALSE(entry.domain_covered);
  }
}

TEST_CASE("oracle answers gold with evidence, rotated without, and rejects unknown tasks") {
  SynthConfig cfg;
  const auto pop = generate_population(cfg);
  const auto& [task_id, entry] = *pop.key.begin();
  const auto with = oracle_respond("[task " + task_id + "] evidence " + entry.vocabulary.front(), pop.key, task_id);
  const auto without = oracle_respond("[task " + task_id + "] nothing relevant " + entry.required_domain, pop.key, task_id);
  const auto kind = entry.n_options ? TaskKind::OpinionChoice : TaskKind::ResponseForecast;
  CHECK(parse_prediction(with, kind, entry.n_options).label == entry.gold);
  const auto wrong = parse_prediction(without, kind, entry.n_options).label;
  CHECK(wrong == rotate_label(entry.gold, kind, entry.n_options));
  CHECK_FALSE(wrong == entry.gold);
  try {
    oracle_respond("x", pop.key, "no-such-task");
    FAIL("expected UnknownTask");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnknownTask);
  }

  Label l{3, Polarity::Neutral, std::nullopt};
  const auto r = rotate_label(l, TaskKind::ResponseForecast, 0);
  CHECK(r.intensity == 0);
  CHECK(r.polarity != Polarity::Neutral);
  CHECK(rotate_label(Label{std::nullopt, std::nullopt, 2}, TaskKind::OpinionChoice, 3).choice_index == 0);
}

TEST_CASE("refined caches separate clusters under bag-of-words") {
  SynthConfig cfg;
  fixtures::SynthWorld world(cfg);
  auto& joins = world.engine->joins();
  for (const auto& a : world.pop.users) {
    const auto va = joins.cache_embedding(a.user_id);
    REQUIRE(va.has_value());
    double min_intra = 2.0, max_inter = -2.0;
    for (const auto& b : world.pop.users) {
      if (a.user_id == b.user_id) continue;
      const double s = similarity(*va, *joins.cache_embedding(b.user_id));
      if (a.cluster == b.cluster) {
        min_intra = std::min(min_intra, s);
      } else {
        max_inter = std::max(max_inter, s);
      }
    }
    CHECK(min_intra > max_inter);
  }
}

TEST_CASE("invalid configurations are rejected") {
  auto expect_invalid = [](SynthConfig cfg) {
    try {
      generate_population(cfg);
      FAIL("expected InvalidConfig");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::InvalidConfig);
    }
  };
  SynthConfig a;
  a.n_clusters = 30;
  expect_invalid(a);
  SynthConfig b;
  b.lurker_fraction = 1.5;
  expect_invalid(b);
  SynthConfig c;
  c.domain_coverage = c.n_domains;
  expect_invalid(c);
  SynthConfig d;
  d.records_min = 30;
  expect_invalid(d);
}

TEST_CASE("oracle key JSON round-trip") {
  const auto pop = generate_population(SynthConfig{});
  const auto back = oracle_key_from_json(oracle_key_to_json(pop.key));
  CHECK(oracle_key_to_json(back).dump() == oracle_key_to_json(pop.key).dump());
}
