#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "personadb/types.hpp"

namespace personadb {

class PersonaStore;

/// Exclusive write access to one user's database. Obtained from
/// PersonaStore::lock_user; a second concurrent writer gets WriteConflict.
class WriteLock {
 public:
  WriteLock(WriteLock&&) noexcept = default;
  WriteLock& operator=(WriteLock&&) noexcept = default;
  const std::string& user_id() const noexcept { return user_id_; }

 private:
  friend class PersonaStore;
  WriteLock(std::string user_id, std::unique_lock<std::mutex> lock)
      : user_id_(std::move(user_id)), lock_(std::move(lock)) {}

  std::string user_id_;
  std::unique_lock<std::mutex> lock_;
};

/// Directory-per-user persona store:
///
///   <root>/users/<user>/history.jsonl   one UserRecord per line, timestamp order
///   <root>/users/<user>/persona.json    DP / IP / Cache layers with provenance
///
/// History is append-only through ingest_records; refinement only ever
/// rewrites persona.json.
class PersonaStore {
 public:
  explicit PersonaStore(std::filesystem::path root, std::vector<std::string> taxonomy = default_taxonomy());

  PersonaStore(const PersonaStore&) = delete;
  PersonaStore& operator=(const PersonaStore&) = delete;

  const std::filesystem::path& root() const noexcept { return root_; }
  const std::vector<std::string>& taxonomy() const noexcept { return taxonomy_; }

  /// Appends records to their users' histories. All records are validated
  /// before anything is written. Returns the number of distinct users touched.
  std::size_t ingest_records(std::span<const UserRecord> records);

  PersonaDatabase load_database(const std::string& user_id) const;

  void save_database(const PersonaDatabase& db);
  void save_database(const PersonaDatabase& db, const WriteLock& lock);
  void save_persona(const PersonaDatabase& db);
  void save_persona(const PersonaDatabase& db, const WriteLock& lock);

  WriteLock lock_user(const std::string& user_id);

  bool has_user(const std::string& user_id) const;
  std::vector<std::string> user_ids() const;  // sorted ascending
  bool has_record(const std::string& record_id) const;

  /// Content digest of persona.json; changes whenever the file does.
  std::string persona_fingerprint(const std::string& user_id) const;

  std::filesystem::path user_dir(const std::string& user_id) const;

 private:
  void write_history(const std::string& user_id, const std::vector<UserRecord>& history) const;
  void write_persona(const PersonaDatabase& db) const;
  std::vector<UserRecord> read_history(const std::string& user_id) const;
  void ensure_index() const;

  std::filesystem::path root_;
  std::vector<std::string> taxonomy_;

  mutable std::mutex index_mutex_;
  mutable std::optional<std::unordered_set<std::string>> record_ids_;

  std::mutex locks_mutex_;
  std::map<std::string, std::unique_ptr<std::mutex>> user_locks_;
};

std::string serialize_persona(const PersonaDatabase& db);
std::string serialize_history(const std::vector<UserRecord>& history);

/// Reversible filesystem-safe encoding of a user id ([A-Za-z0-9._-] kept, rest %XX).
std::string encode_path_component(std::string_view id);
std::string decode_path_component(std::string_view name);

/// Writes via a temporary file and rename so readers never see partial files.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

std::vector<UserRecord> read_records_jsonl(const std::filesystem::path& path);

}  // namespace personadb
