#pragma once

// JSON-over-HTTP POST with bounded concurrency and exponential backoff.

#include <chrono>
#include <memory>
#include <semaphore>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace finexl::backends {

enum class BackendErrorKind {
  auth,       // 401/403; never retried
  transient,  // timeout, connection failure, 429, 5xx
  client,     // other 4xx
  parse,      // response body is not the expected JSON shape
  exhausted,  // transient failures outlasted max retries
};

std::string_view to_string(BackendErrorKind kind);

class BackendError : public std::runtime_error {
 public:
  BackendError(BackendErrorKind kind, const std::string& what, int status = 0)
      : std::runtime_error(what), kind_(kind), status_(status) {}

  BackendErrorKind kind() const { return kind_; }
  int status() const { return status_; }
  bool retryable() const { return kind_ == BackendErrorKind::transient; }

 private:
  BackendErrorKind kind_;
  int status_;
};

struct EndpointOptions {
  std::string base_url;  // scheme://host[:port][/prefix]
  std::string api_key_env;
  std::chrono::milliseconds timeout{60000};
  int max_retries = 3;
  int max_in_flight = 4;
  std::chrono::milliseconds backoff_initial{500};
  std::chrono::milliseconds backoff_max{8000};
};

class JsonEndpoint {
 public:
  explicit JsonEndpoint(EndpointOptions options);
  ~JsonEndpoint();
  JsonEndpoint(const JsonEndpoint&) = delete;
  JsonEndpoint& operator=(const JsonEndpoint&) = delete;

  /// POSTs `body` to base_url + path and returns the parsed JSON reply.
  /// Thread-safe; at most max_in_flight requests run at once.
  nlohmann::json post(const std::string& path, const nlohmann::json& body);

  /// Number of HTTP attempts made so far, retries included.
  long attempts() const;

 private:
  struct State;
  std::unique_ptr<State> state_;
};

/// Standard base64 of raw bytes.
std::string base64_encode(std::string_view bytes);

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);

}  // namespace finexl::backends
