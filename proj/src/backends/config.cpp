#include "finexl/backends/config.hpp"

#include <fstream>

#include "finexl/errors.hpp"

namespace finexl::backends {

void BackendConfig::validate() const {
  if (!(timeout_seconds > 0)) throw ValidationError("backend: timeout_seconds must be > 0");
  if (max_retries < 0) throw ValidationError("backend: max_retries must be >= 0");
  if (max_in_flight < 1) throw ValidationError("backend: max_in_flight must be >= 1");
  if (embed_batch_size < 1) throw ValidationError("backend: embed_batch_size must be >= 1");
  if (backoff_initial_ms < 0 || backoff_max_ms < backoff_initial_ms) {
    throw ValidationError("backend: invalid backoff bounds");
  }
}

BackendConfig BackendConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("backend config must be an object");
  BackendConfig c;
  try {
    c.vlm_base_url = j.value("vlm_base_url", c.vlm_base_url);
    c.vlm_model_id = j.value("vlm_model_id", c.vlm_model_id);
    c.vlm_api_key_env = j.value("vlm_api_key_env", c.vlm_api_key_env);
    c.embed_base_url = j.value("embed_base_url", c.embed_base_url);
    c.embed_model_id = j.value("embed_model_id", c.embed_model_id);
    c.embed_api_key_env = j.value("embed_api_key_env", c.embed_api_key_env);
    c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
    c.max_retries = j.value("max_retries", c.max_retries);
    c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
    c.embed_batch_size = j.value("embed_batch_size", c.embed_batch_size);
    c.backoff_initial_ms = j.value("backoff_initial_ms", c.backoff_initial_ms);
    c.backoff_max_ms = j.value("backoff_max_ms", c.backoff_max_ms);
    c.vlm_temperature = j.value("vlm_temperature", c.vlm_temperature);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("backend config: ") + e.what());
  }
  for (const char* secret : {"api_key", "vlm_api_key", "embed_api_key"}) {
    if (j.contains(secret)) {
      throw ValidationError(std::string("backend config: '") + secret +
                            "' not allowed; name an environment variable instead");
    }
  }
  c.validate();
  return c;
}

BackendConfig BackendConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open backend config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("backend config " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

}  // namespace finexl::backends
