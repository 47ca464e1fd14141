#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

namespace finexl::backends {

/// Endpoints and transport limits. Credentials are never stored here, only
/// the names of the environment variables holding them.
struct BackendConfig {
  std::string vlm_base_url;
  std::string vlm_model_id;
  std::string vlm_api_key_env = "FINEXL_VLM_API_KEY";
  std::string embed_base_url;
  std::string embed_model_id;
  std::string embed_api_key_env = "FINEXL_EMBED_API_KEY";
  double timeout_seconds = 60;
  int max_retries = 3;
  int max_in_flight = 4;
  int embed_batch_size = 32;
  int backoff_initial_ms = 500;
  int backoff_max_ms = 8000;
  double vlm_temperature = 0;

  void validate() const;
  static BackendConfig from_json(const nlohmann::json& j);
  static BackendConfig load(const std::filesystem::path& path);
};

}  // namespace finexl::backends
