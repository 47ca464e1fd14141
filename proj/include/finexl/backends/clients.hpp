#pragma once

// HTTP clients for the chat-completion VLM and the text-embedding endpoint.

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "finexl/backends/cache.hpp"
#include "finexl/backends/config.hpp"
#include "finexl/backends/http.hpp"
#include "finexl/concepts.hpp"

namespace finexl::backends {

EndpointOptions vlm_endpoint_options(const BackendConfig& config);
EndpointOptions embed_endpoint_options(const BackendConfig& config);

/// Builds the chat-completion request: one user message whose content
/// interleaves the template's text segments with the two images, attached as
/// base64 data URLs at the {image_a} / {image_b} placeholders.
nlohmann::json build_chat_request(const std::string& model, const ImagePair& pair,
                                  const PromptTemplate& prompt, double temperature = 0);

/// choices[0].message.content, or a parse BackendError.
std::string parse_chat_response(const nlohmann::json& reply);

class ChatCompletionVlm : public VisionLanguageModel {
 public:
  explicit ChatCompletionVlm(const BackendConfig& config);

  std::string describe(const ImagePair& pair, const PromptTemplate& prompt) override;
  const JsonEndpoint& endpoint() const { return endpoint_; }

 private:
  std::string model_;
  double temperature_;
  JsonEndpoint endpoint_;
};

/// Text encoder over an embeddings endpoint ({"model", "input": [...]} ->
/// {"data": [{"index", "embedding"}]}), consulting the cache first. Distinct
/// uncached texts are fetched in batches of embed_batch_size; any failed batch
/// fails the whole call.
class HttpTextEncoder : public TextEncoder {
 public:
  HttpTextEncoder(const BackendConfig& config, std::shared_ptr<EmbeddingCache> cache);

  std::string encoder_id() const override { return model_; }
  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override;
  const JsonEndpoint& endpoint() const { return *endpoint_; }

 private:
  std::vector<EmbeddingVector> fetch(std::span<const std::string> batch);

  std::string model_;
  std::size_t batch_size_;
  int max_in_flight_;
  std::shared_ptr<EmbeddingCache> cache_;
  std::unique_ptr<JsonEndpoint> endpoint_;
};

}  // namespace finexl::backends
