#pragma once

#include <array>
#include <filesystem>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "finexl/linalg.hpp"

namespace finexl::backends {

class CacheConflict : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Content-addressed text-embedding cache: one JSON file per
/// (encoder_id, text) under root/<sha256>.json. Readers run concurrently;
/// writers to the same key are serialized and files are replaced atomically.
class EmbeddingCache {
 public:
  explicit EmbeddingCache(std::filesystem::path root);

  static std::string key(std::string_view encoder_id, std::string_view text);
  std::filesystem::path path_for(std::string_view encoder_id, std::string_view text) const;

  std::optional<EmbeddingVector> get(std::string_view encoder_id, std::string_view text) const;

  /// Stores a vector. Storing a different vector under an existing key throws
  /// CacheConflict; storing the identical vector is a no-op.
  void put(std::string_view encoder_id, std::string_view text, const EmbeddingVector& vector);

  const std::filesystem::path& root() const { return root_; }

 private:
  std::mutex& lock_for(const std::string& key);

  std::filesystem::path root_;
  mutable std::array<std::mutex, 64> locks_;
};

}  // namespace finexl::backends
