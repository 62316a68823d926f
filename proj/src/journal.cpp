#include "personadb/journal.hpp"

#include "personadb/error.hpp"

namespace personadb {

Journal::Journal(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  out_.emplace(path, std::ios::binary | std::ios::app);
  if (!*out_) throw Error(ErrorCode::IoError, "cannot open journal " + path.string());
}

void Journal::append(const ordered_json& entry) {
  std::lock_guard lock(mutex_);
  ordered_json line;
  line["seq"] = seq_++;
  for (auto it = entry.begin(); it != entry.end(); ++it) line[it.key()] = it.value();
  if (out_) {
    *out_ << line.dump() << '\n';
    out_->flush();
  }
  entries_.push_back(std::move(line));
}

void Journal::warn(std::string_view code, std::string_view message, const ordered_json& detail) {
  ordered_json e;
  e["kind"] = "warning";
  e["code"] = code;
  e["message"] = message;
  if (!detail.is_null()) e["detail"] = detail;
  append(e);
}

void Journal::note(std::string_view code, std::string_view message, const ordered_json& detail) {
  ordered_json e;
  e["kind"] = "note";
  e["code"] = code;
  e["message"] = message;
  if (!detail.is_null()) e["detail"] = detail;
  append(e);
}

std::vector<ordered_json> Journal::entries() const {
  std::lock_guard lock(mutex_);
  return entries_;
}

std::size_t Journal::count(std::string_view kind, std::string_view prompt_name) const {
  std::lock_guard lock(mutex_);
  std::size_t n = 0;
  for (const auto& e : entries_) {
    if (e.value("kind", "") != kind) continue;
    if (!prompt_name.empty() && e.value("prompt_name", "") != prompt_name) continue;
    ++n;
  }
  return n;
}

std::size_t Journal::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

}  // namespace personadb
