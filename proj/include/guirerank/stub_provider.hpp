#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "guirerank/model_gateway.hpp"

namespace guirerank {

inline constexpr std::uint64_t kFnvOffset = 14695981039346656037ULL;
inline constexpr std::uint64_t kFnvPrime = 1099511628211ULL;
inline constexpr std::size_t kStubEmbeddingWidth = 64;

// 64-bit FNV-1a. `state` lets callers continue a running hash.
std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t state = kFnvOffset);
std::uint64_t fnv1a64(std::string_view text, std::uint64_t state = kFnvOffset);

// Canned reply used when the prompt contains `match` and `reply` validates
// against the requested schema.
struct CannedReply {
  std::string match;
  nlohmann::json reply;
};

std::vector<CannedReply> canned_replies_from_json(const nlohmann::json& doc);
std::vector<CannedReply> load_canned_replies(const std::string& path);

struct StubOptions {
  bool images = true;
  std::vector<CannedReply> canned;
};

// Deterministic offline provider. Output depends only on the request:
//  - seed = FNV-1a(prompt), continued over the image bytes when present;
//  - integer schema [lo, hi]: lo + seed mod (hi - lo + 1);
//  - object fields: the value for key k uses FNV-1a continued from seed over
//    "/" + k;
//  - strings: "stub <k> <16 hex digits>", lists hold one such string;
//  - embeddings: stub_embedding(text).
// Token counts are ceil(bytes / 4) for text plus 85 + ceil(bytes / 1024) per
// image; reported latency is zero.
class StubProvider : public Provider {
 public:
  explicit StubProvider(StubOptions options = {});

  std::string id() const override { return "stub"; }
  bool supports_images(const std::string&) const override { return options_.images; }
  ChatReply chat(const ModelConfig& config, const ChatRequest& request) override;
  EmbedReply embed(const ModelConfig& config, const std::vector<std::string>& texts) override;

  static nlohmann::json synthesize(const Schema& schema, std::uint64_t seed, const std::string& key = "value");
  static std::uint64_t request_seed(const ChatRequest& request);

 private:
  StubOptions options_;
};

// FNV-1a(text) seeds a splitmix64 stream; 64 draws mapped to [-1, 1) are
// normalized to unit length.
Vector stub_embedding(std::string_view text);

std::uint64_t approx_tokens(std::size_t bytes);

}  // namespace guirerank
