#include "finexl/backends/cache.hpp"

#include <atomic>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "finexl/backends/http.hpp"
#include "finexl/backends/records.hpp"

namespace finexl::backends {

namespace {

struct Entry {
  std::string encoder_id;
  std::string text;
  EmbeddingVector vector;
};

std::optional<Entry> read_entry(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    const auto j = nlohmann::json::parse(ss.str());
    Entry e{j.at("encoder_id").get<std::string>(), j.at("text").get<std::string>(), {}};
    const auto& v = j.at("vector");
    e.vector.resize(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) e.vector(static_cast<Eigen::Index>(i)) = v[i].get<double>();
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw IoError("corrupt cache entry " + path.string() + ": " + ex.what());
  }
}

}  // namespace

EmbeddingCache::EmbeddingCache(std::filesystem::path root) : root_(std::move(root)) {
  std::error_code ec;
  std::filesystem::create_directories(root_, ec);
  if (ec) throw IoError("cannot create cache directory " + root_.string() + ": " + ec.message());
}

std::string EmbeddingCache::key(std::string_view encoder_id, std::string_view text) {
  std::string material(encoder_id);
  material += '\0';
  material += text;
  return sha256_hex(material);
}

std::filesystem::path EmbeddingCache::path_for(std::string_view encoder_id,
                                               std::string_view text) const {
  return root_ / (key(encoder_id, text) + ".json");
}

std::mutex& EmbeddingCache::lock_for(const std::string& k) {
  return locks_[std::stoul(k.substr(0, 2), nullptr, 16) % locks_.size()];
}

std::optional<EmbeddingVector> EmbeddingCache::get(std::string_view encoder_id,
                                                   std::string_view text) const {
  const auto path = path_for(encoder_id, text);
  auto e = read_entry(path);
  if (!e) return std::nullopt;
  if (e->encoder_id != encoder_id || e->text != text) {
    throw CacheConflict("cache entry " + path.string() + " does not match its key");
  }
  return std::move(e->vector);
}

void EmbeddingCache::put(std::string_view encoder_id, std::string_view text,
                         const EmbeddingVector& vector) {
  if (!all_finite(vector) || vector.size() == 0) {
    throw ValidationError("cache: refusing to store an empty or non-finite vector");
  }
  const auto k = key(encoder_id, text);
  const auto path = root_ / (k + ".json");
  std::lock_guard guard(lock_for(k));

  if (auto existing = read_entry(path)) {
    if (existing->encoder_id != encoder_id || existing->text != text ||
        existing->vector.size() != vector.size() || existing->vector != vector) {
      throw CacheConflict("conflicting embedding for cached text under encoder '" +
                          std::string(encoder_id) + "'");
    }
    return;
  }

  std::string body = "{\"encoder_id\":" + nlohmann::json(std::string(encoder_id)).dump() +
                     ",\"text\":" + nlohmann::json(std::string(text)).dump() +
                     ",\"vector\":" + format_vector(vector) + "}\n";
  std::ostringstream tmp_name;
  tmp_name << k << ".tmp." << std::this_thread::get_id();
  const auto tmp = root_ / tmp_name.str();
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write cache file " + tmp.string());
    out << body;
    if (!out) throw IoError("write error in " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot commit cache file " + path.string() + ": " + ec.message());
}

}  // namespace finexl::backends
