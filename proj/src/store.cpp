#include "personadb/store.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "personadb/digest.hpp"
#include "personadb/error.hpp"
#include "personadb/text.hpp"

namespace fs = std::filesystem;

namespace personadb {

namespace {

bool is_safe_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '.' || c == '_' ||
         c == '-';
}

}  // namespace

std::string encode_path_component(std::string_view id) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (char c : id) {
    if (is_safe_char(c) && !(out.empty() && c == '.')) {
      out.push_back(c);
    } else {
      auto u = static_cast<unsigned char>(c);
      out.push_back('%');
      out.push_back(kHex[u >> 4]);
      out.push_back(kHex[u & 0xF]);
    }
  }
  return out;
}

std::string decode_path_component(std::string_view name) {
  std::string out;
  for (std::size_t i = 0; i < name.size(); ++i) {
    if (name[i] == '%' && i + 2 < name.size()) {
      out.push_back(static_cast<char>(std::stoi(std::string(name.substr(i + 1, 2)), nullptr, 16)));
      i += 2;
    } else {
      out.push_back(name[i]);
    }
  }
  return out;
}

void write_file_atomic(const fs::path& path, std::string_view contents) {
  static std::atomic<unsigned long> counter{0};
  fs::create_directories(path.parent_path());
  std::ostringstream suffix;
  suffix << ".tmp." << std::this_thread::get_id() << "." << counter++;
  fs::path tmp = path;
  tmp += suffix.str();
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error(ErrorCode::IoError, "short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error(ErrorCode::IoError, "cannot rename into " + path.string());
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<UserRecord> read_records_jsonl(const fs::path& path) {
  std::vector<UserRecord> out;
  const auto lines = text::split_lines(read_file(path));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (text::trim(lines[i]).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(lines[i]);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::MalformedRecord, path.string() + ":" + std::to_string(i + 1) + ": " + e.what());
    }
    try {
      out.push_back(user_record_from_json(j));
    } catch (const Error& e) {
      throw Error(e.code(), path.string() + ":" + std::to_string(i + 1) + ": " + e.detail());
    }
  }
  return out;
}

std::string serialize_history(const std::vector<UserRecord>& history) {
  std::string out;
  for (const auto& r : history) {
    out += to_json(r).dump();
    out += '\n';
  }
  return out;
}

std::string serialize_persona(const PersonaDatabase& db) {
  ordered_json j;
  j["user_id"] = db.user_id;
  j["taxonomy"] = db.taxonomy;
  j["template_set"] = db.template_set;
  j["cache_degraded"] = db.cache_degraded;
  ordered_json layers = ordered_json::object();
  for (Layer layer : {Layer::DistilledPersona, Layer::InducedPersona, Layer::Cache}) {
    ordered_json arr = ordered_json::array();
    for (const auto& e : db.entries(layer)) arr.push_back(to_json(e));
    layers[std::string(to_string(layer))] = std::move(arr);
  }
  j["layers"] = std::move(layers);
  return j.dump(2) + "\n";
}

PersonaStore::PersonaStore(fs::path root, std::vector<std::string> taxonomy)
    : root_(std::move(root)), taxonomy_(std::move(taxonomy)) {
  if (taxonomy_.empty()) throw Error(ErrorCode::InvalidConfig, "taxonomy must not be empty");
  fs::create_directories(root_ / "users");
}

fs::path PersonaStore::user_dir(const std::string& user_id) const {
  return root_ / "users" / encode_path_component(user_id);
}

bool PersonaStore::has_user(const std::string& user_id) const {
  return fs::exists(user_dir(user_id) / "history.jsonl");
}

std::vector<std::string> PersonaStore::user_ids() const {
  std::vector<std::string> out;
  for (const auto& entry : fs::directory_iterator(root_ / "users")) {
    if (entry.is_directory() && fs::exists(entry.path() / "history.jsonl")) {
      out.push_back(decode_path_component(entry.path().filename().string()));
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

void PersonaStore::ensure_index() const {
  if (record_ids_) return;
  std::unordered_set<std::string> ids;
  for (const auto& user : user_ids()) {
    for (const auto& r : read_history(user)) ids.insert(r.record_id);
  }
  record_ids_ = std::move(ids);
}

bool PersonaStore::has_record(const std::string& record_id) const {
  std::lock_guard guard(index_mutex_);
  ensure_index();
  return record_ids_->count(record_id) > 0;
}

std::vector<UserRecord> PersonaStore::read_history(const std::string& user_id) const {
  const auto path = user_dir(user_id) / "history.jsonl";
  if (!fs::exists(path)) return {};
  return read_records_jsonl(path);
}

std::size_t PersonaStore::ingest_records(std::span<const UserRecord> records) {
  if (records.empty()) return 0;
  std::lock_guard guard(index_mutex_);
  ensure_index();

  std::unordered_set<std::string> batch_ids;
  std::map<std::string, std::vector<UserRecord>> by_user;
  for (const auto& r : records) {
    validate_record(r);
    if (record_ids_->count(r.record_id) || !batch_ids.insert(r.record_id).second) {
      throw Error(ErrorCode::DuplicateRecordId, r.record_id);
    }
    by_user[r.user_id].push_back(r);
  }

  for (auto& [user, fresh] : by_user) {
    auto lock = lock_user(user);
    auto history = read_history(user);
    history.insert(history.end(), fresh.begin(), fresh.end());
    std::stable_sort(history.begin(), history.end(),
                     [](const UserRecord& a, const UserRecord& b) { return a.timestamp < b.timestamp; });
    write_history(user, history);
    if (!fs::exists(user_dir(user) / "persona.json")) {
      PersonaDatabase db;
      db.user_id = user;
      db.taxonomy = taxonomy_;
      write_persona(db);
    }
    for (const auto& r : fresh) record_ids_->insert(r.record_id);
  }
  return by_user.size();
}

PersonaDatabase PersonaStore::load_database(const std::string& user_id) const {
  if (!has_user(user_id)) throw Error(ErrorCode::UnknownUser, user_id);
  PersonaDatabase db;
  db.user_id = user_id;
  db.history = read_history(user_id);
  db.taxonomy = taxonomy_;
  const auto persona_path = user_dir(user_id) / "persona.json";
  if (fs::exists(persona_path)) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_file(persona_path));
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::IoError, persona_path.string() + ": " + e.what());
    }
    db.taxonomy = j.value("taxonomy", taxonomy_);
    db.template_set = j.value("template_set", std::string("default"));
    db.cache_degraded = j.value("cache_degraded", false);
    const auto& layers = j.at("layers");
    for (Layer layer : {Layer::DistilledPersona, Layer::InducedPersona, Layer::Cache}) {
      const auto name = std::string(to_string(layer));
      if (!layers.contains(name)) continue;
      for (const auto& e : layers.at(name)) db.entries(layer).push_back(persona_entry_from_json(e, layer));
    }
  }
  return db;
}

WriteLock PersonaStore::lock_user(const std::string& user_id) {
  std::mutex* m = nullptr;
  {
    std::lock_guard guard(locks_mutex_);
    auto& slot = user_locks_[user_id];
    if (!slot) slot = std::make_unique<std::mutex>();
    m = slot.get();
  }
  std::unique_lock<std::mutex> lock(*m, std::try_to_lock);
  if (!lock.owns_lock()) throw Error(ErrorCode::WriteConflict, "user " + user_id + " is being written by another task");
  return WriteLock(user_id, std::move(lock));
}

void PersonaStore::write_history(const std::string& user_id, const std::vector<UserRecord>& history) const {
  write_file_atomic(user_dir(user_id) / "history.jsonl", serialize_history(history));
}

void PersonaStore::write_persona(const PersonaDatabase& db) const {
  write_file_atomic(user_dir(db.user_id) / "persona.json", serialize_persona(db));
}

void PersonaStore::save_database(const PersonaDatabase& db) {
  auto lock = lock_user(db.user_id);
  save_database(db, lock);
}

void PersonaStore::save_database(const PersonaDatabase& db, const WriteLock& lock) {
  if (lock.user_id() != db.user_id) throw Error(ErrorCode::WriteConflict, "lock held for a different user");
  {
    std::lock_guard guard(index_mutex_);
    if (record_ids_) {
      for (const auto& r : db.history) record_ids_->insert(r.record_id);
    }
  }
  write_history(db.user_id, db.history);
  write_persona(db);
}

void PersonaStore::save_persona(const PersonaDatabase& db) {
  auto lock = lock_user(db.user_id);
  save_persona(db, lock);
}

void PersonaStore::save_persona(const PersonaDatabase& db, const WriteLock& lock) {
  if (lock.user_id() != db.user_id) throw Error(ErrorCode::WriteConflict, "lock held for a different user");
  if (!has_user(db.user_id)) throw Error(ErrorCode::UnknownUser, db.user_id);
  write_persona(db);
}

std::string PersonaStore::persona_fingerprint(const std::string& user_id) const {
  const auto path = user_dir(user_id) / "persona.json";
  if (!fs::exists(path)) return "absent";
  return sha256_hex(read_file(path));
}

}  // namespace personadb
