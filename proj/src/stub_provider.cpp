#include "guirerank/stub_provider.hpp"

#include <cstdio>
#include <fstream>

#include "guirerank/errors.hpp"

namespace guirerank {

using nlohmann::json;

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t state) {
  for (std::uint8_t b : bytes) {
    state ^= b;
    state *= kFnvPrime;
  }
  return state;
}

std::uint64_t fnv1a64(std::string_view text, std::uint64_t state) {
  return fnv1a64(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()), state);
}

std::uint64_t approx_tokens(std::size_t bytes) { return (bytes + 3) / 4; }

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::string hex16(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

Vector stub_embedding(std::string_view text) {
  std::uint64_t state = fnv1a64(text);
  Vector v(kStubEmbeddingWidth);
  for (auto& x : v) {
    // top 53 bits -> [0, 1) -> [-1, 1)
    const double u = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
    x = static_cast<float>(2.0 * u - 1.0);
  }
  normalize(v);
  return v;
}

std::vector<CannedReply> canned_replies_from_json(const json& doc) {
  if (!doc.is_array()) throw FormatError("stub fixtures must be an array of {match, reply}");
  std::vector<CannedReply> out;
  for (const auto& item : doc) {
    if (!item.is_object() || !item.contains("match") || !item["match"].is_string() ||
        !item.contains("reply")) {
      throw FormatError("stub fixture entries need 'match' (string) and 'reply'");
    }
    out.push_back({item["match"].get<std::string>(), item["reply"]});
  }
  return out;
}

std::vector<CannedReply> load_canned_replies(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open stub fixtures '" + path + "'");
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw FormatError("stub fixtures '" + path + "' are not valid JSON");
  return canned_replies_from_json(doc);
}

StubProvider::StubProvider(StubOptions options) : options_(std::move(options)) {}

std::uint64_t StubProvider::request_seed(const ChatRequest& request) {
  std::uint64_t seed = fnv1a64(request.prompt);
  if (request.has_image()) seed = fnv1a64(request.image, seed);
  return seed;
}

json StubProvider::synthesize(const Schema& schema, std::uint64_t seed, const std::string& key) {
  switch (schema.kind()) {
    case Schema::Kind::Integer: {
      const auto span = static_cast<std::uint64_t>(schema.hi() - schema.lo()) + 1;
      return schema.lo() + static_cast<std::int64_t>(seed % span);
    }
    case Schema::Kind::String:
      return "stub " + key + " " + hex16(seed);
    case Schema::Kind::StringList:
      return json::array({"stub " + key + " " + hex16(seed)});
    case Schema::Kind::Object: {
      json obj = json::object();
      for (const auto& f : schema.fields()) {
        obj[f.key] = synthesize(*f.schema, fnv1a64("/" + f.key, seed), f.key);
      }
      return obj;
    }
  }
  return nullptr;
}

ChatReply StubProvider::chat(const ModelConfig&, const ChatRequest& request) {
  if (request.has_image() && !options_.images) {
    throw CapabilityError("stub provider configured without image support");
  }
  std::string text;
  if (request.schema != nullptr) {
    for (const auto& c : options_.canned) {
      if (request.prompt.find(c.match) == std::string::npos) continue;
      try {
        request.schema->validate(c.reply);
      } catch (const SchemaError&) {
        continue;
      }
      text = c.reply.dump();
      break;
    }
    if (text.empty()) text = synthesize(*request.schema, request_seed(request)).dump();
  } else {
    text = "\"stub " + hex16(request_seed(request)) + "\"";
  }

  ChatReply reply;
  reply.input_tokens = approx_tokens(request.prompt.size());
  if (request.has_image()) reply.input_tokens += 85 + (request.image.size() + 1023) / 1024;
  reply.output_tokens = approx_tokens(text.size());
  reply.text = std::move(text);
  reply.latency = std::chrono::nanoseconds{0};
  return reply;
}

EmbedReply StubProvider::embed(const ModelConfig&, const std::vector<std::string>& texts) {
  EmbedReply reply;
  reply.vectors.reserve(texts.size());
  for (const auto& t : texts) {
    reply.vectors.push_back(stub_embedding(t));
    reply.input_tokens += approx_tokens(t.size());
  }
  reply.latency = std::chrono::nanoseconds{0};
  return reply;
}

}  // namespace guirerank
