#include "guirerank/model_gateway.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <thread>

#include "guirerank/errors.hpp"

namespace guirerank {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

void validate(const ModelConfig& config) {
  if (!(config.temperature >= 0.0 && config.temperature <= 2.0)) {
    throw PreconditionError("temperature must lie in [0, 2]");
  }
  if (config.max_retries < 0) throw PreconditionError("max_retries must be >= 0");
  if (config.model.empty()) throw PreconditionError("model name must be non-empty");
}

json model_config_to_json(const ModelConfig& c) {
  json doc = {{"provider", c.provider},
              {"model", c.model},
              {"temperature", c.temperature},
              {"max_retries", c.max_retries},
              {"timeout_s", std::chrono::duration<double>(c.timeout).count()}};
  if (!c.base_url.empty()) doc["base_url"] = c.base_url;
  return doc;
}

ModelConfig model_config_from_json(const json& doc, ModelConfig base) {
  if (!doc.is_object()) return base;
  base.provider = doc.value("provider", base.provider);
  base.model = doc.value("model", base.model);
  base.temperature = doc.value("temperature", base.temperature);
  base.max_retries = doc.value("max_retries", base.max_retries);
  if (doc.contains("timeout_s")) {
    base.timeout = std::chrono::milliseconds(
        static_cast<std::int64_t>(doc["timeout_s"].get<double>() * 1000.0));
  }
  base.base_url = doc.value("base_url", base.base_url);
  validate(base);
  return base;
}

std::chrono::milliseconds backoff_delay(const RetryPolicy& policy, int retry_index) {
  auto delay = policy.initial;
  for (int i = 0; i < retry_index && delay < policy.cap; ++i) delay *= 2;
  return std::min(delay, policy.cap);
}

std::string format_instructions_for(const Schema& schema) {
  return "Respond with only a JSON value (no prose, no code fences) matching this schema: " +
         schema.describe();
}

void normalize(Vector& v) {
  double sq = 0.0;
  for (float x : v) sq += static_cast<double>(x) * x;
  const double norm = std::sqrt(sq);
  if (!(norm > 0.0) || !std::isfinite(norm)) throw SchemaError("embedding has zero or non-finite norm");
  for (float& x : v) x = static_cast<float>(x / norm);
}

std::string image_mime_for(const std::string& path) {
  std::string ext;
  if (auto dot = path.find_last_of('.'); dot != std::string::npos) ext = path.substr(dot + 1);
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == "png") return "image/png";
  if (ext == "jpg" || ext == "jpeg") return "image/jpeg";
  if (ext == "webp") return "image/webp";
  if (ext == "gif") return "image/gif";
  return "application/octet-stream";
}

ModelGateway::ModelGateway(GatewayOptions options)
    : options_(std::move(options)), limiter_(options_.max_in_flight) {}

void ModelGateway::register_provider(std::shared_ptr<Provider> provider) {
  providers_[provider->id()] = std::move(provider);
}

Provider& ModelGateway::provider_for(const ModelConfig& config) const {
  const std::string id = force_stub_ ? "stub" : config.provider;
  auto it = providers_.find(id);
  if (it == providers_.end()) throw CapabilityError("no provider registered for '" + id + "'");
  return *it->second;
}

void ModelGateway::pause(int retry_index) const {
  const auto delay = backoff_delay(options_.retry, retry_index);
  if (options_.sleep) {
    options_.sleep(delay);
  } else {
    std::this_thread::sleep_for(delay);
  }
}

Completion ModelGateway::complete_text(const ModelConfig& config, const std::string& prompt,
                                       const Schema& schema) {
  ChatRequest request;
  request.prompt = prompt;
  return complete(config, std::move(request), schema);
}

Completion ModelGateway::complete_with_image(const ModelConfig& config, const std::string& prompt,
                                             std::span<const std::uint8_t> image,
                                             const Schema& schema, const std::string& image_mime) {
  if (image.empty()) throw PreconditionError("image must be non-empty");
  Provider& provider = provider_for(config);
  if (!provider.supports_images(config.model)) {
    throw CapabilityError("provider '" + provider.id() + "' model '" + config.model +
                          "' does not accept images");
  }
  ChatRequest request;
  request.prompt = prompt;
  request.image = image;
  request.image_mime = image_mime;
  return complete(config, std::move(request), schema);
}

Completion ModelGateway::complete(const ModelConfig& config, ChatRequest request, const Schema& schema) {
  if (request.prompt.empty()) throw PreconditionError("prompt must be non-empty");
  validate(config);
  Provider& provider = provider_for(config);
  request.schema = &schema;
  request.format_instructions = format_instructions_for(schema);

  UsageMeter usage;
  const int attempts = 1 + config.max_retries;
  std::string last_raw;
  std::string last_what;
  bool last_was_schema = false;

  for (int attempt = 0; attempt < attempts; ++attempt) {
    if (attempt > 0) pause(attempt - 1);
    ChatReply reply;
    try {
      ConcurrencyLimiter::Slot slot(limiter_);
      const auto start = Clock::now();
      ++usage.request_count;
      try {
        reply = provider.chat(config, request);
      } catch (...) {
        usage.wall_time += Clock::now() - start;
        throw;
      }
      usage.wall_time += reply.latency.value_or(Clock::now() - start);
    } catch (TransportError& e) {
      last_raw = e.raw_response();
      last_what = e.what();
      last_was_schema = false;
      continue;
    } catch (GatewayError& e) {
      e.set_usage(merge(usage, e.usage()));
      throw;
    }
    usage.input_tokens += reply.input_tokens;
    usage.output_tokens += reply.output_tokens;

    try {
      json value = extract_json(reply.text);
      schema.validate(value);
      return {std::move(value), usage, std::move(reply.text)};
    } catch (const SchemaError& e) {
      last_raw = reply.text;
      last_what = e.what();
      last_was_schema = true;
      request.format_instructions = format_instructions_for(schema) +
                                    "\nYour previous reply was rejected (" + e.what() +
                                    "). Reply again with only the JSON value.";
    }
  }

  const std::string what = "giving up after " + std::to_string(attempts) + " attempt(s): " + last_what;
  if (last_was_schema) throw SchemaError(what, last_raw, usage);
  throw TransportError(what, last_raw, usage);
}

EmbeddingBatch ModelGateway::embed_text(const ModelConfig& config, const std::vector<std::string>& texts) {
  if (texts.empty()) throw PreconditionError("embed_text needs at least one text");
  for (const auto& t : texts) {
    if (t.empty()) throw PreconditionError("embed_text inputs must be non-empty");
  }
  validate(config);
  Provider& provider = provider_for(config);
  if (!provider.supports_embeddings()) {
    throw CapabilityError("provider '" + provider.id() + "' offers no embedding models");
  }

  UsageMeter usage;
  const int attempts = 1 + config.max_retries;
  std::string last_what;
  for (int attempt = 0; attempt < attempts; ++attempt) {
    if (attempt > 0) pause(attempt - 1);
    EmbedReply reply;
    try {
      ConcurrencyLimiter::Slot slot(limiter_);
      const auto start = Clock::now();
      ++usage.request_count;
      try {
        reply = provider.embed(config, texts);
      } catch (...) {
        usage.wall_time += Clock::now() - start;
        throw;
      }
      usage.wall_time += reply.latency.value_or(Clock::now() - start);
    } catch (TransportError& e) {
      last_what = e.what();
      continue;
    } catch (GatewayError& e) {
      e.set_usage(merge(usage, e.usage()));
      throw;
    }
    usage.input_tokens += reply.input_tokens;

    if (reply.vectors.size() != texts.size()) {
      throw SchemaError("provider returned " + std::to_string(reply.vectors.size()) +
                            " embeddings for " + std::to_string(texts.size()) + " inputs",
                        {}, usage);
    }
    for (auto& v : reply.vectors) {
      if (v.empty() || v.size() != reply.vectors.front().size()) {
        throw SchemaError("provider returned embeddings of inconsistent width", {}, usage);
      }
      normalize(v);
    }
    return {std::move(reply.vectors), usage};
  }
  throw TransportError("giving up after " + std::to_string(attempts) + " attempt(s): " + last_what,
                       {}, usage);
}

}  // namespace guirerank
