#pragma once

#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "guirerank/model_gateway.hpp"
#include "guirerank/stub_provider.hpp"

namespace guirerank {

// Reads `<PROVIDER>_API_KEY` (e.g. OPENAI_API_KEY); empty when unset.
std::string api_key_from_env(const std::string& provider_id);

std::string base64_encode(std::span<const std::uint8_t> bytes);

// Wire formats, exposed for testing. Each *_body builds the request JSON and
// each parse_* turns the provider response JSON into a reply (throwing
// SchemaError when the response lacks the expected fields).
namespace wire {

nlohmann::json openai_chat_body(const ModelConfig& config, const ChatRequest& request);
ChatReply parse_openai_chat(const nlohmann::json& response);
nlohmann::json openai_embed_body(const ModelConfig& config, const std::vector<std::string>& texts);
EmbedReply parse_openai_embed(const nlohmann::json& response);

nlohmann::json anthropic_body(const ModelConfig& config, const ChatRequest& request);
ChatReply parse_anthropic(const nlohmann::json& response);

nlohmann::json gemini_body(const ModelConfig& config, const ChatRequest& request);
ChatReply parse_gemini(const nlohmann::json& response);
nlohmann::json gemini_embed_body(const ModelConfig& config, const std::vector<std::string>& texts);
EmbedReply parse_gemini_embed(const nlohmann::json& response);

}  // namespace wire

// Shared HTTP plumbing: POSTs JSON, maps failures onto the gateway error
// taxonomy (connection errors, 429 and 5xx are retryable).
class HttpProvider : public Provider {
 public:
  HttpProvider(std::string id, std::string default_base_url, std::string api_key);

  std::string id() const override { return id_; }

 protected:
  nlohmann::json post_json(const ModelConfig& config, const std::string& path,
                           const nlohmann::json& body,
                           const std::vector<std::pair<std::string, std::string>>& headers) const;
  const std::string& api_key() const { return api_key_; }

 private:
  std::string id_;
  std::string default_base_url_;
  std::string api_key_;
};

class OpenAIProvider : public HttpProvider {
 public:
  explicit OpenAIProvider(std::string api_key = api_key_from_env("openai"),
                          std::string base_url = "https://api.openai.com");
  bool supports_images(const std::string& model) const override;
  ChatReply chat(const ModelConfig& config, const ChatRequest& request) override;
  EmbedReply embed(const ModelConfig& config, const std::vector<std::string>& texts) override;
};

class AnthropicProvider : public HttpProvider {
 public:
  explicit AnthropicProvider(std::string api_key = api_key_from_env("anthropic"),
                             std::string base_url = "https://api.anthropic.com");
  bool supports_images(const std::string&) const override { return true; }
  bool supports_embeddings() const override { return false; }
  ChatReply chat(const ModelConfig& config, const ChatRequest& request) override;
  EmbedReply embed(const ModelConfig& config, const std::vector<std::string>& texts) override;
};

class GeminiProvider : public HttpProvider {
 public:
  explicit GeminiProvider(std::string api_key = api_key_from_env("google"),
                          std::string base_url = "https://generativelanguage.googleapis.com");
  bool supports_images(const std::string& model) const override;
  ChatReply chat(const ModelConfig& config, const ChatRequest& request) override;
  EmbedReply embed(const ModelConfig& config, const std::vector<std::string>& texts) override;
};

// Gateway with stub, openai, anthropic and google providers registered.
std::shared_ptr<ModelGateway> make_gateway(GatewayOptions options = {}, StubOptions stub = {},
                                           bool force_stub = false);

}  // namespace guirerank
