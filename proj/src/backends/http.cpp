#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "finexl/backends/http.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <openssl/evp.h>

#include "finexl/errors.hpp"

namespace finexl::backends {

std::string_view to_string(BackendErrorKind kind) {
  switch (kind) {
    case BackendErrorKind::auth: return "auth";
    case BackendErrorKind::transient: return "transient";
    case BackendErrorKind::client: return "client";
    case BackendErrorKind::parse: return "parse";
    case BackendErrorKind::exhausted: return "exhausted";
  }
  return "unknown";
}

namespace {

constexpr std::ptrdiff_t kMaxInFlight = 256;

struct SplitUrl {
  std::string scheme_host_port;
  std::string prefix;
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ValidationError("base url lacks a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, ""};
  std::string prefix = url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {url.substr(0, path_start), prefix};
}

}  // namespace

struct JsonEndpoint::State {
  EndpointOptions options;
  SplitUrl url;
  std::counting_semaphore<kMaxInFlight> slots;
  std::atomic<long> attempts{0};

  explicit State(EndpointOptions o)
      : options(std::move(o)),
        url(split_url(options.base_url)),
        slots(std::clamp<std::ptrdiff_t>(options.max_in_flight, 1, kMaxInFlight)) {}
};

JsonEndpoint::JsonEndpoint(EndpointOptions options)
    : state_(std::make_unique<State>(std::move(options))) {}

JsonEndpoint::~JsonEndpoint() = default;

long JsonEndpoint::attempts() const { return state_->attempts.load(); }

nlohmann::json JsonEndpoint::post(const std::string& path, const nlohmann::json& body) {
  const auto& opt = state_->options;
  const std::string payload = body.dump();
  const std::string full_path = state_->url.prefix + path;

  httplib::Headers headers;
  if (!opt.api_key_env.empty()) {
    if (const char* key = std::getenv(opt.api_key_env.c_str()); key && *key) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
  }

  auto backoff = opt.backoff_initial;
  std::string last_error;
  for (int attempt = 0; attempt <= opt.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff = std::min(backoff * 2, opt.backoff_max);
    }

    httplib::Result res;
    {
      state_->slots.acquire();
      struct Release {
        State* s;
        ~Release() { s->slots.release(); }
      } release{state_.get()};
      ++state_->attempts;
      httplib::Client client(state_->url.scheme_host_port);
      const auto secs = std::chrono::duration_cast<std::chrono::seconds>(opt.timeout);
      const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(opt.timeout - secs);
      client.set_connection_timeout(secs.count(), usecs.count());
      client.set_read_timeout(secs.count(), usecs.count());
      client.set_write_timeout(secs.count(), usecs.count());
      res = client.Post(full_path, headers, payload, "application/json");
    }

    if (!res) {
      last_error = "request to " + opt.base_url + full_path + " failed: " + httplib::to_string(res.error());
      continue;
    }
    const int status = res->status;
    if (status == 401 || status == 403) {
      throw BackendError(BackendErrorKind::auth,
                         "authentication failed (" + std::to_string(status) + ") for " + opt.base_url,
                         status);
    }
    if (status == 429 || status >= 500) {
      last_error = "HTTP " + std::to_string(status) + " from " + opt.base_url + full_path;
      continue;
    }
    if (status < 200 || status >= 300) {
      throw BackendError(BackendErrorKind::client,
                         "HTTP " + std::to_string(status) + " from " + opt.base_url + full_path +
                             ": " + res->body.substr(0, 200),
                         status);
    }
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error& e) {
      throw BackendError(BackendErrorKind::parse, std::string("unparseable response body: ") + e.what(),
                         status);
    }
  }
  throw BackendError(BackendErrorKind::exhausted,
                     "giving up after " + std::to_string(opt.max_retries + 1) + " attempts: " + last_error);
}

std::string base64_encode(std::string_view bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(bytes.data()),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw IoError("sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xF];
  }
  return out;
}

}  // namespace finexl::backends
