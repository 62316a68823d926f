#include "personadb/embedding_cache.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <mutex>

#include "personadb/digest.hpp"
#include "personadb/error.hpp"
#include "personadb/store.hpp"

namespace fs = std::filesystem;

namespace personadb {

namespace {

constexpr std::size_t kHeaderBytes = 16;

void put_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32_le(std::string_view in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

}  // namespace

EmbeddingCacheKey EmbeddingCacheKey::of(std::string_view model_tag, std::string_view prompt, std::string_view text) {
  return EmbeddingCacheKey{sha256_hex(canonical_fields({model_tag, prompt, text}))};
}

EmbeddingCache::EmbeddingCache(std::optional<fs::path> dir, std::size_t dims) : dir_(std::move(dir)), dims_(dims) {
  if (dims_ == 0) throw Error(ErrorCode::InvalidConfig, "embedding dims must be positive");
  if (!dir_) return;
  fs::create_directories(*dir_);
  const auto meta_path = *dir_ / "meta.json";
  if (fs::exists(meta_path)) {
    auto meta = nlohmann::json::parse(read_file(meta_path));
    const auto stored = meta.value("dims", std::size_t{0});
    if (stored != dims_) {
      throw Error(ErrorCode::DimensionMismatch, "cache at " + dir_->string() + " holds dims " +
                                                    std::to_string(stored) + ", configured " + std::to_string(dims_));
    }
  } else {
    ordered_json meta;
    meta["digest"] = kDigestAlgorithm;
    meta["canonical_form"] = "length-prefixed model_tag, prompt, text";
    meta["dims"] = dims_;
    meta["entry_format"] = "u32le dims, 12 zero bytes, f32le values";
    write_file_atomic(meta_path, meta.dump(2) + "\n");
  }
}

std::string EmbeddingCache::encode_entry(const EmbeddingVector& v) {
  std::string out;
  out.reserve(kHeaderBytes + 4 * v.dims());
  put_u32_le(out, static_cast<std::uint32_t>(v.dims()));
  out.append(kHeaderBytes - 4, '\0');
  for (double d : v.values) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(d));
    put_u32_le(out, bits);
  }
  return out;
}

std::vector<double> EmbeddingCache::decode_entry(std::string_view bytes) {
  if (bytes.size() < kHeaderBytes) throw Error(ErrorCode::IoError, "truncated embedding entry");
  const auto dims = get_u32_le(bytes, 0);
  if (bytes.size() != kHeaderBytes + 4ull * dims) throw Error(ErrorCode::IoError, "embedding entry size mismatch");
  std::vector<double> out(dims);
  for (std::uint32_t i = 0; i < dims; ++i) {
    out[i] = static_cast<double>(std::bit_cast<float>(get_u32_le(bytes, kHeaderBytes + 4 * i)));
  }
  return out;
}

std::optional<EmbeddingVector> EmbeddingCache::find(const EmbeddingCacheKey& key, std::string_view model_tag) const {
  {
    std::shared_lock lock(mutex_);
    if (auto it = entries_.find(key.digest); it != entries_.end()) {
      return EmbeddingVector{it->second, std::string(model_tag)};
    }
  }
  if (!dir_) return std::nullopt;
  const auto path = *dir_ / (key.digest + ".vec");
  if (!fs::exists(path)) return std::nullopt;
  auto values = decode_entry(read_file(path));
  if (values.size() != dims_) {
    throw Error(ErrorCode::DimensionMismatch, "cached entry " + key.digest + " has dims " + std::to_string(values.size()));
  }
  return EmbeddingVector{std::move(values), std::string(model_tag)};
}

EmbeddingVector EmbeddingCache::get_or_compute(const EmbeddingCacheKey& key, std::string_view model_tag,
                                               const std::function<EmbeddingVector()>& producer) {
  if (auto hit = find(key, model_tag)) {
    std::unique_lock lock(mutex_);
    entries_.try_emplace(key.digest, hit->values);
    return *hit;
  }
  auto fresh = producer();
  if (fresh.dims() != dims_) {
    throw Error(ErrorCode::DimensionMismatch,
                "producer returned dims " + std::to_string(fresh.dims()) + ", cache expects " + std::to_string(dims_));
  }
  fresh = make_embedding(std::move(fresh.values), std::string(model_tag));

  std::unique_lock lock(mutex_);
  auto [it, inserted] = entries_.try_emplace(key.digest, fresh.values);
  if (inserted && dir_) {
    const auto path = *dir_ / (key.digest + ".vec");
    if (!fs::exists(path)) write_file_atomic(path, encode_entry(fresh));
  }
  return EmbeddingVector{it->second, std::string(model_tag)};
}

std::size_t EmbeddingCache::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

}  // namespace personadb
