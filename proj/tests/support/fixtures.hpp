#pragma once

#include <atomic>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "personadb/config.hpp"
#include "personadb/engine.hpp"
#include "personadb/gateway.hpp"
#include "personadb/synth.hpp"

namespace fixtures {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

/// Scripted backend plus a memory-only cache and journal.
struct Rig {
  std::shared_ptr<personadb::ScriptedBackend> backend;
  std::shared_ptr<personadb::Journal> journal;
  std::shared_ptr<personadb::EmbeddingCache> cache;
  std::unique_ptr<personadb::Gateway> gateway;
};

Rig make_rig(std::vector<std::string> vocabulary, personadb::Responder responder = {},
             personadb::Transcript transcript = personadb::Transcript());

personadb::UserRecord record(const std::string& id, const std::string& user, std::int64_t ts, const std::string& text);

/// A generated population ingested and refined in a temp store, with an
/// Engine wired to the synthetic analyzer and bag-of-words embedder.
struct SynthWorld {
  TempDir dir;
  personadb::SynthPopulation pop;
  personadb::RunConfig cfg;
  std::shared_ptr<personadb::Journal> journal;
  std::unique_ptr<personadb::Engine> engine;

  explicit SynthWorld(const personadb::SynthConfig& synth, std::vector<std::string> extra_overrides = {});
  std::vector<personadb::QueryTask> lurker_uncovered_tasks() const;
};

}  // namespace fixtures
