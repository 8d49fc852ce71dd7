#include "guirerank/http_providers.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>

#include <httplib.h>
#include <openssl/evp.h>

#include "guirerank/errors.hpp"

namespace guirerank {

using nlohmann::json;

std::string api_key_from_env(const std::string& provider_id) {
  std::string var = provider_id;
  std::transform(var.begin(), var.end(), var.begin(), [](unsigned char c) { return std::toupper(c); });
  var += "_API_KEY";
  const char* value = std::getenv(var.c_str());
  return value ? value : "";
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

namespace wire {

namespace {

const json& require(const json& doc, const json::json_pointer& ptr) {
  if (!doc.contains(ptr)) throw SchemaError("provider response lacks " + ptr.to_string(), doc.dump());
  return doc.at(ptr);
}

std::string data_url(const ChatRequest& request) {
  return "data:" + request.image_mime + ";base64," + base64_encode(request.image);
}

}  // namespace

json openai_chat_body(const ModelConfig& config, const ChatRequest& request) {
  json content = json::array({{{"type", "text"}, {"text", request.full_prompt()}}});
  if (request.has_image()) {
    content.push_back({{"type", "image_url"}, {"image_url", {{"url", data_url(request)}}}});
  }
  json body = {{"model", config.model},
               {"temperature", config.temperature},
               {"messages", json::array({{{"role", "user"}, {"content", std::move(content)}}})}};
  if (request.schema != nullptr && request.schema->kind() == Schema::Kind::Object) {
    body["response_format"] = {{"type", "json_object"}};
  }
  return body;
}

ChatReply parse_openai_chat(const json& response) {
  ChatReply reply;
  const json& content = require(response, "/choices/0/message/content"_json_pointer);
  if (!content.is_string()) throw SchemaError("choices[0].message.content is not a string", response.dump());
  reply.text = content.get<std::string>();
  reply.input_tokens = response.value("/usage/prompt_tokens"_json_pointer, std::uint64_t{0});
  reply.output_tokens = response.value("/usage/completion_tokens"_json_pointer, std::uint64_t{0});
  return reply;
}

json openai_embed_body(const ModelConfig& config, const std::vector<std::string>& texts) {
  return {{"model", config.model}, {"input", texts}};
}

EmbedReply parse_openai_embed(const json& response) {
  EmbedReply reply;
  const json& data = require(response, "/data"_json_pointer);
  if (!data.is_array()) throw SchemaError("embedding response 'data' is not an array", response.dump());
  std::vector<std::pair<std::size_t, Vector>> indexed;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::size_t idx = data[i].value("index", i);
    indexed.emplace_back(idx, data[i].at("embedding").get<Vector>());
  }
  std::sort(indexed.begin(), indexed.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (auto& [idx, v] : indexed) reply.vectors.push_back(std::move(v));
  reply.input_tokens = response.value("/usage/prompt_tokens"_json_pointer, std::uint64_t{0});
  return reply;
}

json anthropic_body(const ModelConfig& config, const ChatRequest& request) {
  json content = json::array();
  if (request.has_image()) {
    content.push_back({{"type", "image"},
                       {"source",
                        {{"type", "base64"},
                         {"media_type", request.image_mime},
                         {"data", base64_encode(request.image)}}}});
  }
  content.push_back({{"type", "text"}, {"text", request.full_prompt()}});
  return {{"model", config.model},
          {"max_tokens", 1024},
          {"temperature", std::min(config.temperature, 1.0)},
          {"messages", json::array({{{"role", "user"}, {"content", std::move(content)}}})}};
}

ChatReply parse_anthropic(const json& response) {
  ChatReply reply;
  const json& blocks = require(response, "/content"_json_pointer);
  for (const auto& b : blocks) {
    if (b.value("type", "") == "text") reply.text += b.value("text", "");
  }
  if (reply.text.empty()) throw SchemaError("response has no text content block", response.dump());
  reply.input_tokens = response.value("/usage/input_tokens"_json_pointer, std::uint64_t{0});
  reply.output_tokens = response.value("/usage/output_tokens"_json_pointer, std::uint64_t{0});
  return reply;
}

json gemini_body(const ModelConfig& config, const ChatRequest& request) {
  json parts = json::array({{{"text", request.full_prompt()}}});
  if (request.has_image()) {
    parts.push_back({{"inline_data", {{"mime_type", request.image_mime}, {"data", base64_encode(request.image)}}}});
  }
  json body = {{"contents", json::array({{{"role", "user"}, {"parts", std::move(parts)}}})},
               {"generationConfig", {{"temperature", config.temperature}}}};
  if (request.schema != nullptr && request.schema->kind() == Schema::Kind::Object) {
    body["generationConfig"]["responseMimeType"] = "application/json";
  }
  return body;
}

ChatReply parse_gemini(const json& response) {
  ChatReply reply;
  const json& parts = require(response, "/candidates/0/content/parts"_json_pointer);
  for (const auto& p : parts) reply.text += p.value("text", "");
  if (reply.text.empty()) throw SchemaError("response has no text parts", response.dump());
  reply.input_tokens = response.value("/usageMetadata/promptTokenCount"_json_pointer, std::uint64_t{0});
  reply.output_tokens = response.value("/usageMetadata/candidatesTokenCount"_json_pointer, std::uint64_t{0});
  return reply;
}

json gemini_embed_body(const ModelConfig& config, const std::vector<std::string>& texts) {
  json requests = json::array();
  for (const auto& t : texts) {
    requests.push_back({{"model", "models/" + config.model}, {"content", {{"parts", json::array({{{"text", t}}})}}}});
  }
  return {{"requests", std::move(requests)}};
}

EmbedReply parse_gemini_embed(const json& response) {
  EmbedReply reply;
  const json& embeddings = require(response, "/embeddings"_json_pointer);
  for (const auto& e : embeddings) reply.vectors.push_back(e.at("values").get<Vector>());
  return reply;
}

}  // namespace wire

HttpProvider::HttpProvider(std::string id, std::string default_base_url, std::string api_key)
    : id_(std::move(id)), default_base_url_(std::move(default_base_url)), api_key_(std::move(api_key)) {}

json HttpProvider::post_json(const ModelConfig& config, const std::string& path, const json& body,
                             const std::vector<std::pair<std::string, std::string>>& headers) const {
  std::string base = config.base_url.empty() ? default_base_url_ : config.base_url;
  while (!base.empty() && base.back() == '/') base.pop_back();
  // scheme://host[:port] goes to the client, any path is a prefix
  std::string origin = base;
  std::string prefix;
  const auto scheme_end = base.find("://");
  const auto slash = base.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  if (slash != std::string::npos) {
    origin = base.substr(0, slash);
    prefix = base.substr(slash);
  }
  httplib::Client client(origin);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config.timeout).count();
  client.set_connection_timeout(std::max<long>(1, static_cast<long>(secs)), 0);
  client.set_read_timeout(std::max<long>(1, static_cast<long>(secs)), 0);
  client.set_write_timeout(std::max<long>(1, static_cast<long>(secs)), 0);

  httplib::Headers h;
  for (const auto& [k, v] : headers) h.emplace(k, v);
  auto res = client.Post(prefix + path, h, body.dump(), "application/json");
  if (!res) {
    throw TransportError(id_ + " request to " + base + path + " failed: " + httplib::to_string(res.error()));
  }
  if (res->status == 429 || res->status >= 500) {
    throw TransportError(id_ + " returned HTTP " + std::to_string(res->status), res->body);
  }
  if (res->status >= 400) {
    throw ProviderRequestError(id_ + " rejected request with HTTP " + std::to_string(res->status), res->body);
  }
  json doc = json::parse(res->body, nullptr, false);
  if (doc.is_discarded()) throw TransportError(id_ + " returned a non-JSON body", res->body);
  return doc;
}

namespace {

void require_key(const std::string& provider, const std::string& key) {
  if (key.empty()) {
    std::string var = provider;
    std::transform(var.begin(), var.end(), var.begin(), [](unsigned char c) { return std::toupper(c); });
    throw ProviderRequestError("missing API key: set " + var + "_API_KEY");
  }
}

}  // namespace

OpenAIProvider::OpenAIProvider(std::string api_key, std::string base_url)
    : HttpProvider("openai", std::move(base_url), std::move(api_key)) {}

bool OpenAIProvider::supports_images(const std::string& model) const {
  return model.find("gpt-3.5") == std::string::npos && model.find("embedding") == std::string::npos;
}

ChatReply OpenAIProvider::chat(const ModelConfig& config, const ChatRequest& request) {
  require_key(id(), api_key());
  json doc = post_json(config, "/v1/chat/completions", wire::openai_chat_body(config, request),
                       {{"Authorization", "Bearer " + api_key()}});
  try {
    return wire::parse_openai_chat(doc);
  } catch (const SchemaError& e) {
    throw TransportError(e.what(), doc.dump());
  }
}

EmbedReply OpenAIProvider::embed(const ModelConfig& config, const std::vector<std::string>& texts) {
  require_key(id(), api_key());
  json doc = post_json(config, "/v1/embeddings", wire::openai_embed_body(config, texts),
                       {{"Authorization", "Bearer " + api_key()}});
  try {
    return wire::parse_openai_embed(doc);
  } catch (const std::exception& e) {
    throw TransportError(e.what(), doc.dump());
  }
}

AnthropicProvider::AnthropicProvider(std::string api_key, std::string base_url)
    : HttpProvider("anthropic", std::move(base_url), std::move(api_key)) {}

ChatReply AnthropicProvider::chat(const ModelConfig& config, const ChatRequest& request) {
  require_key(id(), api_key());
  json doc = post_json(config, "/v1/messages", wire::anthropic_body(config, request),
                       {{"x-api-key", api_key()}, {"anthropic-version", "2023-06-01"}});
  try {
    return wire::parse_anthropic(doc);
  } catch (const SchemaError& e) {
    throw TransportError(e.what(), doc.dump());
  }
}

EmbedReply AnthropicProvider::embed(const ModelConfig&, const std::vector<std::string>&) {
  throw CapabilityError("anthropic offers no embedding models");
}

GeminiProvider::GeminiProvider(std::string api_key, std::string base_url)
    : HttpProvider("google", std::move(base_url), std::move(api_key)) {}

bool GeminiProvider::supports_images(const std::string& model) const {
  return model.find("embedding") == std::string::npos;
}

ChatReply GeminiProvider::chat(const ModelConfig& config, const ChatRequest& request) {
  require_key(id(), api_key());
  json doc = post_json(config, "/v1beta/models/" + config.model + ":generateContent",
                       wire::gemini_body(config, request), {{"x-goog-api-key", api_key()}});
  try {
    return wire::parse_gemini(doc);
  } catch (const SchemaError& e) {
    throw TransportError(e.what(), doc.dump());
  }
}

EmbedReply GeminiProvider::embed(const ModelConfig& config, const std::vector<std::string>& texts) {
  require_key(id(), api_key());
  json doc = post_json(config, "/v1beta/models/" + config.model + ":batchEmbedContents",
                       wire::gemini_embed_body(config, texts), {{"x-goog-api-key", api_key()}});
  try {
    return wire::parse_gemini_embed(doc);
  } catch (const std::exception& e) {
    throw TransportError(e.what(), doc.dump());
  }
}

std::shared_ptr<ModelGateway> make_gateway(GatewayOptions options, StubOptions stub, bool force_stub) {
  auto gateway = std::make_shared<ModelGateway>(std::move(options));
  gateway->register_provider(std::make_shared<StubProvider>(std::move(stub)));
  gateway->register_provider(std::make_shared<OpenAIProvider>());
  gateway->register_provider(std::make_shared<AnthropicProvider>());
  gateway->register_provider(std::make_shared<GeminiProvider>());
  gateway->set_force_stub(force_stub);
  return gateway;
}

}  // namespace guirerank
