#include <doctest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "personadb/collab.hpp"
#include "personadb/store.hpp"

using namespace personadb;
using fixtures::make_rig;
using fixtures::record;

namespace {

EmbeddingVector vec(std::vector<double> v) { return make_embedding(std::move(v), "t"); }

// Saves a user whose Cache carries `cache_text` under values_and_beliefs and
// whose DP, IP and History each hold one entry.
void put_user(PersonaStore& store, const std::string& user, const std::string& cache_text, bool degraded = false) {
  PersonaDatabase db;
  db.user_id = user;
  db.history = {record(user + "-h", user, 1, user + " history")};
  db.distilled = {PersonaEntry{"dp-0001", Layer::DistilledPersona, "", user + " dp", {user + "-h"}, 1}};
  db.induced = {PersonaEntry{"ip-0001", Layer::InducedPersona, "", user + " ip", {"dp-0001"}, 1}};
  for (const auto& key : db.taxonomy) {
    PersonaEntry e{"cache-" + key, Layer::Cache, key, "unknown", {}, 1};
    if (key == "values_and_beliefs") {
      e.text = cache_text;
      e.provenance = {"ip-0001"};
    }
    db.cache.push_back(e);
  }
  db.cache_degraded = degraded;
  store.save_database(db);
}

const std::vector<std::string> kVocab = {"red", "blue", "green", "gold"};

}  // namespace

TEST_CASE("similarity examples") {
  CHECK(similarity(vec({1, 0}), vec({1, 0})) == doctest::Approx(1.0));
  CHECK(similarity(vec({1, 0}), vec({0, 1})) == doctest::Approx(0.0));
  CHECK(similarity(vec({1, 0}), vec({-1, 0})) == doctest::Approx(-1.0));
  CHECK(similarity(vec({1, 1}), vec({1, 0})) == doctest::Approx(1.0 / std::sqrt(2.0)));
  try {
    similarity(vec({1, 0}), vec({1, 0, 0}));
    FAIL("expected DimensionMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DimensionMismatch);
  }
  try {
    similarity(vec({0, 0}), vec({1, 0}));
    FAIL("expected ZeroNormVector");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ZeroNormVector);
  }
}

TEST_CASE("similarity is symmetric, bounded and scale invariant") {
  std::mt19937 rng(3);
  std::normal_distribution<double> d;
  for (int i = 0; i < 200; ++i) {
    std::vector<double> a(6), b(6);
    for (auto& x : a) x = d(rng);
    for (auto& x : b) x = d(rng);
    const double s = similarity(vec(a), vec(b));
    CHECK(s >= -1.0);
    CHECK(s <= 1.0);
    CHECK(s == doctest::Approx(similarity(vec(b), vec(a))).epsilon(1e-9));
    auto scaled = a;
    for (auto& x : scaled) x *= 3.5;
    CHECK(s == doctest::Approx(similarity(vec(scaled), vec(b))).epsilon(1e-6));
    CHECK(similarity(vec(a), vec(a)) == doctest::Approx(1.0));
  }
}

TEST_CASE("top-k ties break by ascending user id") {
  const auto ranked = rank_top_k({{"u3", 0.8}, {"u1", 0.8}, {"u2", 0.9}, {"u0", 0.1}}, 2);
  REQUIRE(ranked.size() == 2);
  CHECK(ranked[0].user_id == "u2");
  CHECK(ranked[1].user_id == "u1");
  CHECK(rank_top_k({{"a", 0.5}}, 5).size() == 1);
}

TEST_CASE("serialized cache is sorted key lines") {
  fixtures::TempDir dir;
  PersonaStore store(dir / "s");
  put_user(store, "a", "red blue");
  const auto s = serialize_cache(store.load_database("a"));
  CHECK(s.find("values_and_beliefs: red blue") != std::string::npos);
  CHECK(s.find("communication_style") < s.find("values_and_beliefs"));
}

TEST_CASE("join ranks by cache similarity and concatenates DP, IP, History") {
  fixtures::TempDir dir;
  PersonaStore store(dir / "s");
  put_user(store, "me", "red");
  put_user(store, "near", "red red blue");
  put_user(store, "mid", "red blue blue");
  put_user(store, "far", "green");
  put_user(store, "zero", "unknown");
  put_user(store, "degraded", "red", true);
  auto rig = make_rig(kVocab);
  JoinEngine joins(store, *rig.gateway);

  JoinConfig cfg;
  cfg.k = 2;
  const auto top = joins.top_k_collaborators("me", cfg);
  REQUIRE(top.size() == 2);
  CHECK(top[0].user_id == "near");
  CHECK(top[0].psi == doctest::Approx(2.0 / std::sqrt(5.0)).epsilon(1e-6));
  CHECK(top[1].user_id == "mid");

  const auto cdb = joins.join("me", cfg);
  REQUIRE(cdb.entries.size() == 6);
  CHECK(cdb.entries[0].source_user == "near");
  CHECK(cdb.entries[0].entry.layer == Layer::DistilledPersona);
  CHECK(cdb.entries[1].entry.layer == Layer::InducedPersona);
  CHECK(cdb.entries[2].entry.layer == Layer::History);
  CHECK(cdb.entries[3].source_user == "mid");
  CHECK(cdb.summary_json()["entry_count"] == 6);
  CHECK(rig.journal->count("warning") >= 1);  // zero-norm "zero" user

  cfg.k = 10;
  const auto all = joins.top_k_collaborators("me", cfg);
  CHECK(all.size() == 3);  // far scores 0 but still counts; zero and degraded excluded
  for (const auto& c : all) CHECK(c.user_id != "me");
}

TEST_CASE("exclude_self, candidate sets, thresholds and NoCandidates") {
  fixtures::TempDir dir;
  PersonaStore store(dir / "s");
  put_user(store, "me", "red");
  put_user(store, "other", "green");
  auto rig = make_rig(kVocab);
  JoinEngine joins(store, *rig.gateway);

  JoinConfig cfg;
  cfg.exclude_self = false;
  CHECK(joins.top_k_collaborators("me", cfg).front().user_id == "me");

  cfg.exclude_self = true;
  cfg.min_similarity = 0.5;
  try {
    joins.join("me", cfg);
    FAIL("expected NoCandidates");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NoCandidates);
  }

  JoinConfig only;
  only.candidate_set = std::vector<std::string>{"me"};
  CHECK_THROWS_AS(joins.top_k_collaborators("me", only), Error);
  only.candidate_set = std::vector<std::string>{"ghost"};
  try {
    joins.top_k_collaborators("me", only);
    FAIL("expected UnknownUser");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnknownUser);
  }
}

TEST_CASE("join results are memoized and invalidated by persona changes") {
  fixtures::TempDir dir;
  PersonaStore store(dir / "s");
  put_user(store, "me", "red");
  put_user(store, "a", "red");
  put_user(store, "b", "blue");
  auto rig = make_rig(kVocab);
  JoinEngine joins(store, *rig.gateway);
  JoinConfig cfg;
  cfg.k = 1;
  CHECK(joins.join("me", cfg).collaborators[0].user_id == "a");
  const auto embeds = rig.journal->count("embed");
  joins.join("me", cfg);
  CHECK(rig.journal->count("embed") == embeds);

  put_user(store, "b", "red red");
  put_user(store, "a", "blue");
  CHECK(joins.join("me", cfg).collaborators[0].user_id == "b");
}

TEST_CASE("empty cache cannot be embedded") {
  auto rig = make_rig(kVocab);
  fixtures::TempDir dir;
  PersonaStore store(dir / "s");
  JoinEngine joins(store, *rig.gateway);
  PersonaDatabase db;
  db.user_id = "x";
  try {
    joins.embed_cache(db);
    FAIL("expected EmptyCache");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyCache);
  }
}

TEST_CASE("planted clusters: every top-k collaborator shares the user's cluster") {
  SynthConfig sc;
  sc.n_users = 24;
  fixtures::SynthWorld world(sc);
  auto& joins = world.engine->joins();
  JoinConfig cfg;
  cfg.k = 3;
  for (const auto& u : world.pop.users) {
    for (const auto& c : joins.top_k_collaborators(u.user_id, cfg)) {
      const auto& other = *std::find_if(world.pop.users.begin(), world.pop.users.end(),
                                        [&](const SynthUser& s) { return s.user_id == c.user_id; });
      CHECK(other.cluster == u.cluster);
      CHECK(c.psi > 0.0);
    }
  }
}
