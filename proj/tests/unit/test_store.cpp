#include <doctest.h>

#include <fstream>
#include <random>
#include <set>

#include "fixtures.hpp"
#include "personadb/digest.hpp"
#include "personadb/embedding_cache.hpp"
#include "personadb/store.hpp"
#include "personadb/text.hpp"

using namespace personadb;
using fixtures::record;
using fixtures::TempDir;

namespace {

PersonaDatabase sample_db(const std::string& user) {
  PersonaDatabase db;
  db.user_id = user;
  db.history = {record("r1", user, 10, "likes solar panels"), record("r2", user, 20, "bikes to work")};
  db.distilled = {PersonaEntry{"dp-0001", Layer::DistilledPersona, "", "supports solar", {"r1"}, 10}};
  db.induced = {PersonaEntry{"ip-0001", Layer::InducedPersona, "", "environmentalist", {"dp-0001", "r2"}, 20}};
  for (const auto& key : db.taxonomy) {
    db.cache.push_back(PersonaEntry{"cache-" + key, Layer::Cache, key, "unknown", {}, 20});
  }
  db.cache[0].text = "green";
  db.cache[0].provenance = {"ip-0001"};
  return db;
}

}  // namespace

TEST_CASE("ingest counts distinct users and keeps timestamp order") {
  TempDir dir;
  PersonaStore store(dir.path());
  std::vector<UserRecord> recs = {record("a", "u1", 30, "x"), record("b", "u2", 5, "y"), record("c", "u1", 10, "z")};
  CHECK(store.ingest_records(recs) == 2);
  CHECK(store.ingest_records({}) == 0);
  const auto db = store.load_database("u1");
  REQUIRE(db.history.size() == 2);
  CHECK(db.history[0].record_id == "c");
  CHECK(db.history[1].record_id == "a");
}

TEST_CASE("ingest rejects malformed and duplicate records without writing") {
  TempDir dir;
  PersonaStore store(dir.path());
  std::vector<UserRecord> bad = {record("a", "u1", 1, "ok"), record("b", "u1", 2, "")};
  CHECK_THROWS_WITH_AS(store.ingest_records(bad), doctest::Contains("MalformedRecord"), Error);
  CHECK_FALSE(store.has_user("u1"));

  std::vector<UserRecord> neg = {record("n", "u1", -1, "text")};
  CHECK_THROWS_AS(store.ingest_records(neg), Error);

  std::vector<UserRecord> first = {record("a", "u1", 1, "ok")};
  store.ingest_records(first);
  std::vector<UserRecord> again = {record("z", "u2", 1, "fine"), record("a", "u3", 2, "dup")};
  try {
    store.ingest_records(again);
    FAIL("expected DuplicateRecordId");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DuplicateRecordId);
  }
  CHECK_FALSE(store.has_user("u2"));
  std::vector<UserRecord> within = {record("q", "u4", 1, "one"), record("q", "u4", 2, "two")};
  CHECK_THROWS_AS(store.ingest_records(within), Error);
}

TEST_CASE("load of unknown user fails; 13 records load back as 13") {
  TempDir dir;
  PersonaStore store(dir.path());
  try {
    store.load_database("ghost");
    FAIL("expected UnknownUser");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnknownUser);
  }
  std::vector<UserRecord> recs;
  for (int i = 0; i < 13; ++i) recs.push_back(record("r" + std::to_string(i), "u", i, "text " + std::to_string(i)));
  store.ingest_records(recs);
  CHECK(store.load_database("u").history.size() == 13);
}

TEST_CASE("save then load is the identity and files are stable") {
  TempDir dir;
  PersonaStore store(dir.path());
  const auto db = sample_db("user/with spaces");
  store.save_database(db);
  const auto loaded = store.load_database(db.user_id);
  CHECK(loaded == db);
  const auto persona = read_file(store.user_dir(db.user_id) / "persona.json");
  store.save_database(loaded);
  CHECK(read_file(store.user_dir(db.user_id) / "persona.json") == persona);
  CHECK(check_provenance(loaded) == std::nullopt);
}

TEST_CASE("on-disk formats carry the documented fields in order") {
  TempDir dir;
  PersonaStore store(dir.path());
  store.save_database(sample_db("u1"));
  const auto first_line = text::split_lines(read_file(store.user_dir("u1") / "history.jsonl")).front();
  const auto j = ordered_json::parse(first_line);
  std::vector<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.push_back(k);
  CHECK(keys == std::vector<std::string>{"record_id", "user_id", "timestamp", "kind", "text", "meta"});

  const auto persona = ordered_json::parse(read_file(store.user_dir("u1") / "persona.json"));
  CHECK(persona.contains("user_id"));
  CHECK(persona["taxonomy"].size() == 7);
  CHECK(persona["layers"].contains("DistilledPersona"));
  CHECK(persona["layers"].contains("Cache"));
}

TEST_CASE("concurrent writers to one user are rejected") {
  TempDir dir;
  PersonaStore store(dir.path());
  auto db = sample_db("u1");
  store.save_database(db);
  auto lock = store.lock_user("u1");
  try {
    auto second = store.lock_user("u1");
    FAIL("expected WriteConflict");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::WriteConflict);
  }
  auto other = store.lock_user("u2");
  CHECK_THROWS_AS(store.save_persona(db, other), Error);
  store.save_persona(db, lock);
}

TEST_CASE("provenance checker finds broken references") {
  auto db = sample_db("u1");
  CHECK_FALSE(check_provenance(db).has_value());
  auto dangling = db;
  dangling.distilled[0].provenance = {"nope"};
  CHECK(check_provenance(dangling).has_value());
  auto upward = db;
  upward.distilled[0].provenance = {"ip-0001"};
  CHECK(check_provenance(upward).has_value());
  auto empty = db;
  empty.induced[0].provenance.clear();
  CHECK(check_provenance(empty).has_value());
  auto bad_key = db;
  bad_key.cache[1].key = "shoe_size";
  CHECK(check_provenance(bad_key).has_value());
}

TEST_CASE("path components round-trip") {
  for (const std::string id : {"plain", "a/b", "..", "x y%z", "ünï"}) {
    const auto enc = encode_path_component(id);
    CHECK(enc.find('/') == std::string::npos);
    CHECK(decode_path_component(enc) == id);
  }
}

TEST_CASE("embedding cache: one producer call per distinct key") {
  EmbeddingCache cache(std::nullopt, 2);
  int calls = 0;
  auto producer = [&] {
    ++calls;
    return make_embedding({1.0, 2.0}, "m");
  };
  const auto k1 = EmbeddingCacheKey::of("m", "prompt", "text");
  cache.get_or_compute(k1, "m", producer);
  cache.get_or_compute(k1, "m", producer);
  CHECK(calls == 1);
  cache.get_or_compute(EmbeddingCacheKey::of("m", "other prompt", "text"), "m", producer);
  CHECK(calls == 2);
}

TEST_CASE("embedding cache rejects wrong dimensions") {
  EmbeddingCache cache(std::nullopt, 16);
  try {
    cache.get_or_compute(EmbeddingCacheKey::of("m", "p", "t"), "m",
                         [] { return make_embedding(std::vector<double>(8, 1.0), "m"); });
    FAIL("expected DimensionMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DimensionMismatch);
  }
}

TEST_CASE("embedding cache persists with a 16-byte header") {
  TempDir dir;
  const auto key = EmbeddingCacheKey::of("m", "p", "t");
  {
    EmbeddingCache cache(dir.path(), 3);
    cache.get_or_compute(key, "m", [] { return make_embedding({0.5, -1.25, 3.0}, "m"); });
  }
  const auto bytes = read_file(dir / (key.digest + ".vec"));
  REQUIRE(bytes.size() == 16 + 3 * 4);
  CHECK(static_cast<unsigned char>(bytes[0]) == 3);
  for (int i = 1; i < 16; ++i) CHECK(bytes[i] == 0);
  EmbeddingCache reopened(dir.path(), 3);
  int calls = 0;
  const auto v = reopened.get_or_compute(key, "m", [&] {
    ++calls;
    return make_embedding({0, 0, 0}, "m");
  });
  CHECK(calls == 0);
  CHECK(v.values == std::vector<double>{0.5, -1.25, 3.0});
  CHECK_THROWS_AS(EmbeddingCache(dir.path(), 4), Error);
}

TEST_CASE("embedding cache key is deterministic and field-boundary safe") {
  CHECK(EmbeddingCacheKey::of("m", "p", "t") == EmbeddingCacheKey::of("m", "p", "t"));
  CHECK_FALSE(EmbeddingCacheKey::of("m", "a\n", "b") == EmbeddingCacheKey::of("m", "a", "\nb"));
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("property: producer invocations equal distinct keys") {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    EmbeddingCache cache(std::nullopt, 1);
    std::set<std::string> distinct;
    int calls = 0;
    for (int i = 0; i < 40; ++i) {
      const auto text = "t" + std::to_string(rng() % 12);
      distinct.insert(text);
      cache.get_or_compute(EmbeddingCacheKey::of("m", "p", text), "m", [&] {
        ++calls;
        return make_embedding({1.0}, "m");
      });
    }
    CHECK(calls == static_cast<int>(distinct.size()));
  }
}
