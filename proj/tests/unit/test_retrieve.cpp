#include <doctest.h>

#include <cmath>
#include <set>

#include "fixtures.hpp"
#include "personadb/retrieve.hpp"
#include "personadb/text.hpp"

using namespace personadb;
using fixtures::make_rig;

namespace {

std::vector<RetrievalItem> pool(Source src, std::size_t n, const std::string& prefix) {
  std::vector<RetrievalItem> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({prefix + std::to_string(i), src, prefix, Layer::DistilledPersona, prefix + std::to_string(i),
                   1.0 - 0.01 * static_cast<double>(i)});
  }
  return out;
}

CompositionConfig comp(std::size_t r, double x, bool backfill = true) {
  CompositionConfig c;
  c.r = r;
  c.x = x;
  c.backfill = backfill;
  return c;
}

}  // namespace

TEST_CASE("compose examples") {
  const auto self = pool(Source::Self, 100, "s");
  const auto collab = pool(Source::Collaborative, 100, "c");
  auto a = compose(self, collab, comp(40, 0.25));
  CHECK(a.n_collab == 10);
  CHECK(a.n_self == 30);
  CHECK(a.items.size() == 40);
  CHECK(a.items[0].source == Source::Self);
  CHECK(a.items[30].source == Source::Collaborative);

  auto b = compose(self, collab, comp(7, 0.5));
  CHECK(b.n_collab == 4);
  CHECK(b.n_self == 3);

  auto c = compose(self, pool(Source::Collaborative, 2, "c"), comp(10, 0.5));
  CHECK(c.n_collab == 2);
  CHECK(c.n_self == 8);

  auto d = compose({}, {}, comp(5, 0.5));
  CHECK(d.items.empty());
}

TEST_CASE("quota is a ceiling robust to binary fractions") {
  CHECK(collaborative_quota(40, 0.25) == 10);
  CHECK(collaborative_quota(7, 0.5) == 4);
  CHECK(collaborative_quota(20, 0.15) == 3);
  CHECK(collaborative_quota(10, 0.3) == 3);
  CHECK(collaborative_quota(10, 0.0) == 0);
  CHECK(collaborative_quota(10, 1.0) == 10);
  CHECK(collaborative_quota(3, 0.01) == 1);
}

TEST_CASE("exhaustive quota and capacity law") {
  const auto self_all = pool(Source::Self, 120, "s");
  const auto collab_all = pool(Source::Collaborative, 120, "c");
  for (std::size_t r = 1; r <= 100; ++r) {
    for (int xi = 0; xi <= 20; ++xi) {
      const double x = xi * 0.05;
      // Independent ceiling: smallest q with q >= x*r, computed on integers.
      const std::size_t q = static_cast<std::size_t>((xi * r + 19) / 20);
      for (std::size_t supply : {0ul, 3ul, r / 2, r, 120ul}) {
        const std::vector<RetrievalItem> s(self_all.begin(), self_all.begin() + supply);
        const std::vector<RetrievalItem> c(collab_all.begin(), collab_all.begin() + supply);
        const auto strict = compose(s, c, comp(r, x, false));
        CHECK(strict.n_collab == std::min(q, supply));
        CHECK(strict.n_self == std::min(r - q, supply));
        const auto filled = compose(s, c, comp(r, x, true));
        CHECK(filled.items.size() == std::min(r, 2 * supply));
        CHECK(filled.n_collab + filled.n_self == filled.items.size());
        CHECK(filled.n_collab >= strict.n_collab);
        CHECK(filled.n_self >= strict.n_self);
      }
    }
  }
}

TEST_CASE("raising r never drops an item") {
  const auto self = pool(Source::Self, 30, "s");
  const auto collab = pool(Source::Collaborative, 30, "c");
  for (double x : {0.0, 0.25, 0.5, 1.0}) {
    std::set<std::string> prev;
    for (std::size_t r = 1; r <= 50; ++r) {
      const auto set = compose(self, collab, comp(r, x, false));
      std::set<std::string> now;
      for (const auto& it : set.items) now.insert(it.entry_id);
      for (const auto& id : prev) CHECK(now.count(id) == 1);
      prev = now;
    }
  }
}

TEST_CASE("interleaved ordering merges by score") {
  auto self = pool(Source::Self, 3, "s");
  auto collab = pool(Source::Collaborative, 3, "c");
  collab[0].score = 5.0;
  auto cfg = comp(4, 0.5);
  cfg.ordering = ItemOrdering::Interleaved;
  const auto set = compose(self, collab, cfg);
  CHECK(set.items[0].entry_id == "c0");
  CHECK(set.items[1].entry_id == "s0");
}

TEST_CASE("score_pool examples") {
  auto rig = make_rig({"solar", "energy", "project", "cooking", "recipes"});
  const auto s = score_pool(*rig.gateway, "solar energy", {"solar energy project", "cooking recipes"});
  REQUIRE(s.size() == 2);
  CHECK(s[0] > s[1]);
  CHECK(score_pool(*rig.gateway, "solar energy", {"solar energy"})[0] == doctest::Approx(1.0));
  const auto z = score_pool(*rig.gateway, "solar", {"nothing known", "solar"});
  CHECK(std::isinf(z[0]));
  CHECK(z[0] < 0);
  CHECK(rig.journal->count("warning") >= 1);
}

TEST_CASE("retrieval over a synthetic population") {
  SynthConfig sc;
  fixtures::SynthWorld world(sc);
  auto& retriever = world.engine->retriever();
  const JoinConfig join;

  SUBCASE("x = 0 performs no join and returns only self items") {
    const auto& user = world.pop.users.front().user_id;
    const auto before = world.journal->count("embed");
    const auto set = retriever.retrieve_for_query(user, "dom0 news", comp(8, 0.0), join);
    for (const auto& it : set.items) {
      CHECK(it.source == Source::Self);
      CHECK(it.source_user == user);
    }
    // Only the query and self pool are embedded; no cache embeddings.
    for (const auto& e : world.journal->entries()) {
      if (e["kind"] == "embed" && e["seq"].get<std::size_t>() > before) CHECK(e["prompt_name"] == "retrieval");
    }
  }

  SUBCASE("x = 1 takes every slot from collaborators") {
    const auto& user = world.pop.users.front().user_id;
    auto cfg = comp(5, 1.0);
    const auto set = retriever.retrieve_for_query(user, "dom0 news", cfg, join);
    REQUIRE(set.items.size() == 5);
    const auto cdb = world.engine->joins().join(user, join);
    std::set<std::string> collaborators;
    for (const auto& c : cdb.collaborators) collaborators.insert(c.user_id);
    for (const auto& it : set.items) {
      CHECK(it.source == Source::Collaborative);
      CHECK(collaborators.count(it.source_user) == 1);
    }
  }

  SUBCASE("a lurker receives collaborative items from the missing domain") {
    const auto tasks = world.lurker_uncovered_tasks();
    REQUIRE_FALSE(tasks.empty());
    for (const auto& t : tasks) {
      const auto& key = world.pop.key.at(t.task_id);
      const auto set = retriever.retrieve_for_query(t.user_id, t.stimulus, comp(8, 0.25), join);
      CHECK(set.n_collab >= 2);  // small self pool backfills from collaborators
      CHECK(set.items.size() == 8);
      bool found = false;
      for (const auto& it : set.items) {
        if (it.source != Source::Collaborative) continue;
        for (const auto& tok : text::tokenize(it.text)) {
          if (std::find(key.vocabulary.begin(), key.vocabulary.end(), tok) != key.vocabulary.end()) found = true;
        }
      }
      CHECK_MESSAGE(found, t.task_id);
    }
  }

  SUBCASE("identical inputs give identical sets") {
    const auto& user = world.pop.users[1].user_id;
    const auto a = retriever.retrieve_for_query(user, "dom1 story", comp(8, 0.25), join);
    const auto b = retriever.retrieve_for_query(user, "dom1 story", comp(8, 0.25), join);
    CHECK(a.to_json().dump() == b.to_json().dump());
    CHECK(a.digest() == b.digest());
  }

  SUBCASE("unknown user") {
    try {
      retriever.retrieve_for_query("nobody", "q", comp(8, 0.25), join);
      FAIL("expected UnknownUser");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::UnknownUser);
    }
  }
}
