#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "guirerank/concurrency.hpp"
#include "guirerank/schema.hpp"
#include "guirerank/usage.hpp"

namespace guirerank {

using Bytes = std::vector<std::uint8_t>;
using Vector = std::vector<float>;

inline constexpr double kDefaultTemperature = 0.05;

struct ModelConfig {
  std::string provider = "stub";  // "openai" | "anthropic" | "google" | "stub"
  std::string model = "gpt-4.1";
  double temperature = kDefaultTemperature;
  int max_retries = 2;
  std::chrono::milliseconds timeout{120'000};
  std::string base_url;  // empty: provider default endpoint
};

// Throws PreconditionError on out-of-range temperature or negative retries.
void validate(const ModelConfig& config);

nlohmann::json model_config_to_json(const ModelConfig& config);
// Missing fields keep the values from `base`.
ModelConfig model_config_from_json(const nlohmann::json& doc, ModelConfig base = {});

struct ChatRequest {
  std::string prompt;               // caller prompt
  std::string format_instructions;  // appended by the gateway: schema + corrections
  std::span<const std::uint8_t> image;
  std::string image_mime = "image/png";
  const Schema* schema = nullptr;

  bool has_image() const noexcept { return !image.empty(); }
  std::string full_prompt() const {
    return format_instructions.empty() ? prompt : prompt + "\n\n" + format_instructions;
  }
};

struct ChatReply {
  std::string text;
  std::uint64_t input_tokens = 0;
  std::uint64_t output_tokens = 0;
  // Providers with synthetic timing report it here; otherwise the gateway
  // measures the call.
  std::optional<std::chrono::nanoseconds> latency;
};

struct EmbedReply {
  std::vector<Vector> vectors;
  std::uint64_t input_tokens = 0;
  std::optional<std::chrono::nanoseconds> latency;
};

// A model backend. Implementations throw TransportError for retryable
// failures and ProviderRequestError / CapabilityError for permanent ones.
class Provider {
 public:
  virtual ~Provider() = default;
  virtual std::string id() const = 0;
  virtual bool supports_images(const std::string& model) const = 0;
  virtual bool supports_embeddings() const { return true; }
  virtual ChatReply chat(const ModelConfig& config, const ChatRequest& request) = 0;
  virtual EmbedReply embed(const ModelConfig& config, const std::vector<std::string>& texts) = 0;
};

struct RetryPolicy {
  std::chrono::milliseconds initial{500};
  std::chrono::milliseconds cap{8'000};
};

// Delay before retry number `retry_index` (0-based): initial * 2^i, capped.
std::chrono::milliseconds backoff_delay(const RetryPolicy& policy, int retry_index);

struct GatewayOptions {
  std::size_t max_in_flight = 10;
  RetryPolicy retry;
  std::function<void(std::chrono::milliseconds)> sleep;  // empty: std::this_thread::sleep_for
};

struct Completion {
  nlohmann::json value;
  UsageMeter usage;
  std::string raw;
};

struct EmbeddingBatch {
  std::vector<Vector> vectors;
  UsageMeter usage;
};

// Entry point for every model call. Thread-safe; bounds in-flight requests
// across all callers with one shared limiter.
class ModelGateway {
 public:
  explicit ModelGateway(GatewayOptions options = {});

  void register_provider(std::shared_ptr<Provider> provider);
  // When set, every request is routed to the "stub" provider.
  void set_force_stub(bool force) { force_stub_ = force; }
  bool force_stub() const noexcept { return force_stub_; }

  Provider& provider_for(const ModelConfig& config) const;

  Completion complete_text(const ModelConfig& config, const std::string& prompt, const Schema& schema);
  Completion complete_with_image(const ModelConfig& config, const std::string& prompt,
                                 std::span<const std::uint8_t> image, const Schema& schema,
                                 const std::string& image_mime = "image/png");
  EmbeddingBatch embed_text(const ModelConfig& config, const std::vector<std::string>& texts);

  const ConcurrencyLimiter& limiter() const noexcept { return limiter_; }

 private:
  Completion complete(const ModelConfig& config, ChatRequest request, const Schema& schema);
  void pause(int retry_index) const;

  GatewayOptions options_;
  ConcurrencyLimiter limiter_;
  std::map<std::string, std::shared_ptr<Provider>> providers_;
  bool force_stub_ = false;
};

std::string format_instructions_for(const Schema& schema);

// Scales `v` to unit L2 norm. Throws SchemaError for a zero vector.
void normalize(Vector& v);

std::string image_mime_for(const std::string& path);

}  // namespace guirerank
