#pragma once

#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "personadb/types.hpp"

namespace personadb {

/// Append-only JSONL run journal. Every line carries a monotonically
/// increasing `seq`. Entries are also retained in memory for inspection.
class Journal {
 public:
  Journal() = default;
  explicit Journal(const std::filesystem::path& path);

  Journal(const Journal&) = delete;
  Journal& operator=(const Journal&) = delete;

  void append(const ordered_json& entry);
  void warn(std::string_view code, std::string_view message, const ordered_json& detail = nullptr);
  void note(std::string_view code, std::string_view message, const ordered_json& detail = nullptr);

  std::vector<ordered_json> entries() const;
  std::size_t count(std::string_view kind, std::string_view prompt_name = {}) const;
  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::optional<std::ofstream> out_;
  std::vector<ordered_json> entries_;
  std::size_t seq_ = 0;
};

}  // namespace personadb
