#include "finexl/backends/clients.hpp"

#include <algorithm>
#include <fstream>
#include <future>
#include <map>
#include <sstream>

#include "finexl/errors.hpp"

namespace finexl::backends {

namespace {

EndpointOptions options_for(const BackendConfig& c, const std::string& url, const std::string& env) {
  c.validate();
  EndpointOptions o;
  o.base_url = url;
  o.api_key_env = env;
  o.timeout = std::chrono::milliseconds(static_cast<long>(c.timeout_seconds * 1000));
  o.max_retries = c.max_retries;
  o.max_in_flight = c.max_in_flight;
  o.backoff_initial = std::chrono::milliseconds(c.backoff_initial_ms);
  o.backoff_max = std::chrono::milliseconds(c.backoff_max_ms);
  return o;
}

std::string image_mime(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".webp") return "image/webp";
  if (ext == ".gif") return "image/gif";
  return "image/png";
}

nlohmann::json image_part(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read image " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return {{"type", "image_url"},
          {"image_url", {{"url", "data:" + image_mime(path) + ";base64," + base64_encode(ss.str())}}}};
}

}  // namespace

EndpointOptions vlm_endpoint_options(const BackendConfig& config) {
  return options_for(config, config.vlm_base_url, config.vlm_api_key_env);
}

EndpointOptions embed_endpoint_options(const BackendConfig& config) {
  return options_for(config, config.embed_base_url, config.embed_api_key_env);
}

nlohmann::json build_chat_request(const std::string& model, const ImagePair& pair,
                                  const PromptTemplate& prompt, double temperature) {
  prompt.validate();
  nlohmann::json content = nlohmann::json::array();
  const std::string& t = prompt.text;
  std::size_t pos = 0;
  auto push_text = [&](std::size_t end) {
    if (end > pos) content.push_back({{"type", "text"}, {"text", t.substr(pos, end - pos)}});
  };
  for (;;) {
    const auto a = t.find("{image_a}", pos);
    const auto b = t.find("{image_b}", pos);
    const auto next = std::min(a, b);
    if (next == std::string::npos) break;
    push_text(next);
    content.push_back(image_part(next == a ? pair.first : pair.second));
    pos = next + 9;  // both placeholders are nine characters
  }
  push_text(t.size());

  return {{"model", model},
          {"temperature", temperature},
          {"messages", nlohmann::json::array({{{"role", "user"}, {"content", content}}})}};
}

std::string parse_chat_response(const nlohmann::json& reply) {
  try {
    const auto& content = reply.at("choices").at(0).at("message").at("content");
    if (content.is_string()) return content.get<std::string>();
    // Some servers return content as a list of typed parts.
    std::string out;
    for (const auto& part : content) {
      if (part.value("type", "") == "text") out += part.at("text").get<std::string>();
    }
    if (out.empty()) throw BackendError(BackendErrorKind::parse, "chat response has no text content");
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw BackendError(BackendErrorKind::parse, std::string("malformed chat response: ") + e.what());
  }
}

ChatCompletionVlm::ChatCompletionVlm(const BackendConfig& config)
    : model_(config.vlm_model_id),
      temperature_(config.vlm_temperature),
      endpoint_(vlm_endpoint_options(config)) {
  if (model_.empty()) throw ValidationError("backend: vlm_model_id is required");
}

std::string ChatCompletionVlm::describe(const ImagePair& pair, const PromptTemplate& prompt) {
  return parse_chat_response(
      endpoint_.post("/chat/completions", build_chat_request(model_, pair, prompt, temperature_)));
}

HttpTextEncoder::HttpTextEncoder(const BackendConfig& config, std::shared_ptr<EmbeddingCache> cache)
    : model_(config.embed_model_id),
      batch_size_(static_cast<std::size_t>(config.embed_batch_size)),
      max_in_flight_(config.max_in_flight),
      cache_(std::move(cache)) {
  if (model_.empty()) throw ValidationError("backend: embed_model_id is required");
  if (!cache_) throw ValidationError("HttpTextEncoder: cache is required");
  if (!config.embed_base_url.empty()) {
    endpoint_ = std::make_unique<JsonEndpoint>(embed_endpoint_options(config));
  }
}

std::vector<EmbeddingVector> HttpTextEncoder::fetch(std::span<const std::string> batch) {
  if (!endpoint_) {
    throw BackendError(BackendErrorKind::exhausted,
                       "texts missing from cache and no embed_base_url configured");
  }
  nlohmann::json body = {{"model", model_}, {"input", std::vector<std::string>(batch.begin(), batch.end())}};
  const auto reply = endpoint_->post("/embeddings", body);
  std::vector<EmbeddingVector> out(batch.size());
  std::vector<bool> filled(batch.size(), false);
  try {
    const auto& data = reply.at("data");
    if (data.size() != batch.size()) {
      throw BackendError(BackendErrorKind::parse, "embedding response has " +
                                                      std::to_string(data.size()) + " items for " +
                                                      std::to_string(batch.size()) + " inputs");
    }
    for (std::size_t k = 0; k < data.size(); ++k) {
      const auto& item = data[k];
      const auto idx = item.contains("index") ? item.at("index").get<std::size_t>() : k;
      if (idx >= batch.size() || filled[idx]) {
        throw BackendError(BackendErrorKind::parse, "embedding response has a bad index");
      }
      const auto& e = item.at("embedding");
      EmbeddingVector v(static_cast<Eigen::Index>(e.size()));
      for (std::size_t i = 0; i < e.size(); ++i) v(static_cast<Eigen::Index>(i)) = e[i].get<double>();
      if (v.size() == 0 || !all_finite(v)) {
        throw BackendError(BackendErrorKind::parse, "embedding response has an empty or non-finite vector");
      }
      out[idx] = std::move(v);
      filled[idx] = true;
    }
  } catch (const nlohmann::json::exception& e) {
    throw BackendError(BackendErrorKind::parse, std::string("malformed embedding response: ") + e.what());
  }
  return out;
}

std::vector<EmbeddingVector> HttpTextEncoder::embed(std::span<const std::string> texts) {
  if (texts.empty()) throw ValidationError("embed: empty batch");

  std::map<std::string, EmbeddingVector> resolved;
  std::vector<std::string> missing;
  for (const auto& t : texts) {
    if (resolved.count(t)) continue;
    if (auto hit = cache_->get(model_, t)) {
      resolved.emplace(t, std::move(*hit));
    } else if (std::find(missing.begin(), missing.end(), t) == missing.end()) {
      missing.push_back(t);
    }
  }

  if (!missing.empty()) {
    std::vector<std::future<std::vector<EmbeddingVector>>> jobs;
    std::vector<std::span<const std::string>> batches;
    for (std::size_t start = 0; start < missing.size(); start += batch_size_) {
      batches.emplace_back(missing.data() + start, std::min(batch_size_, missing.size() - start));
    }
    // The endpoint itself bounds concurrent requests.
    for (const auto& b : batches) {
      jobs.push_back(std::async(max_in_flight_ > 1 ? std::launch::async : std::launch::deferred,
                                [this, b] { return fetch(b); }));
    }
    std::vector<std::vector<EmbeddingVector>> results;
    std::exception_ptr first_error;
    for (auto& j : jobs) {
      try {
        results.push_back(j.get());
      } catch (...) {
        if (!first_error) first_error = std::current_exception();
        results.emplace_back();
      }
    }
    if (first_error) std::rethrow_exception(first_error);

    Eigen::Index dim = -1;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      for (std::size_t i = 0; i < batches[b].size(); ++i) {
        auto& v = results[b][i];
        if (dim < 0) dim = v.size();
        require_same_dim(v.size(), dim, "embed");
        cache_->put(model_, batches[b][i], v);
        resolved.emplace(batches[b][i], std::move(v));
      }
    }
  }

  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(resolved.at(t));
  const auto dim = out.front().size();
  for (const auto& v : out) require_same_dim(v.size(), dim, "embed");
  return out;
}

}  // namespace finexl::backends
