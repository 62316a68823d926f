#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>

#include "personadb/types.hpp"

namespace personadb {

struct EmbeddingCacheKey {
  std::string digest;  // hex sha256 of the canonical (model_tag, prompt, text) triple

  static EmbeddingCacheKey of(std::string_view model_tag, std::string_view prompt, std::string_view text);
  bool operator==(const EmbeddingCacheKey&) const = default;
};

/// Content-addressed store of embedding vectors. Entries live in memory and,
/// when a directory is configured, as `<dir>/<digest>.vec`:
///
///   bytes 0..3   dims, uint32 little-endian
///   bytes 4..15  zero
///   bytes 16..   dims x float32 little-endian
///
/// Concurrent get_or_compute calls are safe. Two racing computations of the
/// same key both run the producer, but the first stored value wins and both
/// callers receive it.
class EmbeddingCache {
 public:
  EmbeddingCache(std::optional<std::filesystem::path> dir, std::size_t dims);

  std::size_t dims() const noexcept { return dims_; }

  EmbeddingVector get_or_compute(const EmbeddingCacheKey& key, std::string_view model_tag,
                                 const std::function<EmbeddingVector()>& producer);

  std::optional<EmbeddingVector> find(const EmbeddingCacheKey& key, std::string_view model_tag) const;
  std::size_t size() const;

  static std::string encode_entry(const EmbeddingVector& v);
  static std::vector<double> decode_entry(std::string_view bytes);

 private:
  std::optional<std::filesystem::path> dir_;
  std::size_t dims_;
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, std::vector<double>> entries_;
};

}  // namespace personadb
