#include "fixtures.hpp"

#include <random>

#include "personadb/refine.hpp"
#include "personadb/store.hpp"

namespace fixtures {

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  std::random_device rd;
  path_ = std::filesystem::temp_directory_path() /
          ("personadb-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

Rig make_rig(std::vector<std::string> vocabulary, personadb::Responder responder, personadb::Transcript transcript) {
  using namespace personadb;
  Rig rig;
  auto bow = std::make_shared<const BagOfWordsEmbedder>(std::move(vocabulary));
  rig.backend = std::make_shared<ScriptedBackend>(std::move(transcript), std::move(responder), bow);
  rig.journal = std::make_shared<Journal>();
  rig.cache = std::make_shared<EmbeddingCache>(std::nullopt, rig.backend->embed_dims());
  rig.gateway = std::make_unique<Gateway>(rig.backend, rig.cache, rig.journal);
  return rig;
}

personadb::UserRecord record(const std::string& id, const std::string& user, std::int64_t ts, const std::string& text) {
  return personadb::UserRecord{id, user, ts, personadb::RecordKind::Post, text, std::nullopt};
}

SynthWorld::SynthWorld(const personadb::SynthConfig& synth, std::vector<std::string> extra_overrides) {
  using namespace personadb;
  pop = generate_population(synth);
  pop.write(dir / "data");
  std::vector<std::string> sets = {
      "store_path=" + (dir / "store").string(),
      "runs_dir=" + (dir / "runs").string(),
      "backend.scripted.responder=synth",
      "backend.scripted.oracle_key=" + (dir / "data/oracle_key.json").string(),
      "backend.scripted.vocabulary=" + (dir / "data/vocabulary.json").string(),
      "data.tasks=" + (dir / "data/tasks.jsonl").string(),
  };
  sets.insert(sets.end(), extra_overrides.begin(), extra_overrides.end());
  cfg = RunConfig::resolve(std::nullopt, sets);
  journal = std::make_shared<Journal>();
  engine = std::make_unique<Engine>(cfg, journal);
  engine->store().ingest_records(pop.records);
  const auto users = engine->store().user_ids();
  const auto report = refine_all(engine->store(), engine->gateway(), users, cfg.refine, 1);
  if (report.ok_count() != users.size()) throw std::runtime_error("synthetic refinement failed");
}

std::vector<personadb::QueryTask> SynthWorld::lurker_uncovered_tasks() const {
  std::vector<personadb::QueryTask> out;
  for (const auto& t : pop.tasks) {
    const auto& e = pop.key.at(t.task_id);
    if (e.lurker && !e.domain_covered) out.push_back(t);
  }
  return out;
}

}  // namespace fixtures
