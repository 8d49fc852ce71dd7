#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <thread>

#include <httplib.h>

#include "fixtures.hpp"
#include "guirerank/concurrency.hpp"
#include "guirerank/errors.hpp"
#include "guirerank/http_providers.hpp"
#include "guirerank/schema.hpp"
#include "guirerank/stub_provider.hpp"

using namespace guirerank;
namespace t = guirerank::testing;
using nlohmann::json;

namespace {

// Independent FNV-1a 64 and splitmix64 for recomputing stub output.
std::uint64_t ref_fnv(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<float> ref_embedding(const std::string& text) {
  std::uint64_t x = ref_fnv(text);
  std::vector<double> v;
  for (int i = 0; i < 64; ++i) {
    x += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    z ^= z >> 31;
    v.push_back(2.0 * (static_cast<double>(z >> 11) / 9007199254740992.0) - 1.0);
  }
  std::vector<float> f(v.begin(), v.end());
  double n = 0.0;
  for (float x2 : f) n += static_cast<double>(x2) * x2;
  n = std::sqrt(n);
  for (float& x2 : f) x2 = static_cast<float>(x2 / n);
  return f;
}

Schema scores_schema() {
  auto i = std::make_shared<const Schema>(Schema::integer(0, 100));
  return Schema::object({{"design", i, true}});
}

// Provider that replays a script of outcomes.
class ScriptedProvider : public Provider {
 public:
  enum class Step { Transport, BadJson, Good, Reject };
  explicit ScriptedProvider(std::vector<Step> script) : script_(std::move(script)) {}

  std::string id() const override { return "scripted"; }
  bool supports_images(const std::string&) const override { return false; }
  ChatReply chat(const ModelConfig&, const ChatRequest& request) override {
    const std::size_t n = calls_.fetch_add(1);
    prompts_.push_back(request.full_prompt());
    const Step s = script_[std::min(n, script_.size() - 1)];
    if (s == Step::Transport) throw TransportError("HTTP 503");
    if (s == Step::Reject) throw ProviderRequestError("HTTP 401");
    ChatReply r;
    r.text = s == Step::Good ? R"({"design": 42})" : "I think the design is nice";
    r.input_tokens = 10;
    r.output_tokens = 3;
    r.latency = std::chrono::milliseconds(5);
    return r;
  }
  EmbedReply embed(const ModelConfig&, const std::vector<std::string>&) override { throw TransportError("down"); }

  std::size_t calls() const { return calls_; }
  const std::vector<std::string>& prompts() const { return prompts_; }

 private:
  std::vector<Step> script_;
  std::atomic<std::size_t> calls_{0};
  std::vector<std::string> prompts_;
};

struct RecordingGateway {
  std::vector<std::chrono::milliseconds> sleeps;
  std::shared_ptr<ScriptedProvider> provider;
  std::unique_ptr<ModelGateway> gateway;

  explicit RecordingGateway(std::vector<ScriptedProvider::Step> script) {
    GatewayOptions o;
    o.sleep = [this](std::chrono::milliseconds d) { sleeps.push_back(d); };
    gateway = std::make_unique<ModelGateway>(o);
    provider = std::make_shared<ScriptedProvider>(std::move(script));
    gateway->register_provider(provider);
  }
};

ModelConfig scripted(int retries = 2) {
  ModelConfig m;
  m.provider = "scripted";
  m.model = "m";
  m.max_retries = retries;
  return m;
}

}  // namespace

TEST(Fnv, KnownVectors) {
  EXPECT_EQ(fnv1a64(std::string_view("")), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64(std::string_view("a")), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64(std::string_view("foobar")), 0x85944171f73967e8ULL);
  EXPECT_EQ(fnv1a64(std::string_view("bar"), fnv1a64(std::string_view("foo"))), fnv1a64(std::string_view("foobar")));
}

TEST(Stub, EmbeddingMatchesIndependentRecomputation) {
  for (const std::string text : {"modern", "dark themed banking app", "x"}) {
    const Vector got = stub_embedding(text);
    const auto want = ref_embedding(text);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-7);
  }
  EXPECT_EQ(stub_embedding("same"), stub_embedding("same"));
  EXPECT_NE(stub_embedding("same"), stub_embedding("other"));
}

TEST(Stub, ChatScoresAreHashOfPrompt) {
  StubProvider stub;
  const Schema schema = scores_schema();
  ChatRequest req;
  req.prompt = "rate this GUI";
  req.format_instructions = "ignored by the seed";
  req.schema = &schema;
  const ChatReply reply = stub.chat(t::stub_model(), req);
  const json v = json::parse(reply.text);
  const std::uint64_t field_seed = ref_fnv("/design", ref_fnv("rate this GUI"));
  EXPECT_EQ(v["design"].get<std::uint64_t>(), field_seed % 101);
  EXPECT_EQ(reply.input_tokens, (req.prompt.size() + 3) / 4);
  EXPECT_EQ(reply.output_tokens, (reply.text.size() + 3) / 4);
  EXPECT_EQ(reply.latency, std::chrono::nanoseconds(0));

  const Bytes img = t::fake_png(1, 3000);
  req.image = img;
  const ChatReply with_image = stub.chat(t::stub_model(), req);
  EXPECT_EQ(with_image.input_tokens, (req.prompt.size() + 3) / 4 + 85 + 3);
  std::string bytes(img.begin(), img.end());
  const std::uint64_t image_seed = ref_fnv("/design", ref_fnv(bytes, ref_fnv("rate this GUI")));
  EXPECT_EQ(json::parse(with_image.text)["design"].get<std::uint64_t>(), image_seed % 101);
}

TEST(Stub, CannedRepliesMatchBySubstringAndSchema) {
  StubOptions o;
  o.canned = canned_replies_from_json(json::parse(R"([
    {"match": "wrong schema", "reply": {"other": 1}},
    {"match": "login", "reply": {"design": 7}}
  ])"));
  StubProvider stub(o);
  const Schema schema = scores_schema();
  ChatRequest req;
  req.schema = &schema;
  req.prompt = "a login screen, wrong schema";
  EXPECT_EQ(json::parse(stub.chat(t::stub_model(), req).text)["design"], 7);
}

TEST(Gateway, BackoffSchedule) {
  RetryPolicy p;
  EXPECT_EQ(backoff_delay(p, 0), std::chrono::milliseconds(500));
  EXPECT_EQ(backoff_delay(p, 1), std::chrono::milliseconds(1000));
  EXPECT_EQ(backoff_delay(p, 3), std::chrono::milliseconds(4000));
  EXPECT_EQ(backoff_delay(p, 4), std::chrono::milliseconds(8000));
  EXPECT_EQ(backoff_delay(p, 9), std::chrono::milliseconds(8000));
}

TEST(Gateway, RetriesTransportFailuresThenSucceeds) {
  using S = ScriptedProvider::Step;
  RecordingGateway g({S::Transport, S::Transport, S::Good});
  const Completion c = g.gateway->complete_text(scripted(), "rate", scores_schema());
  EXPECT_EQ(c.value["design"], 42);
  EXPECT_EQ(g.provider->calls(), 3u);
  EXPECT_EQ(c.usage.request_count, 3u);
  EXPECT_EQ(g.sleeps, (std::vector<std::chrono::milliseconds>{std::chrono::milliseconds(500),
                                                               std::chrono::milliseconds(1000)}));
}

TEST(Gateway, GivesUpAfterMaxRetries) {
  using S = ScriptedProvider::Step;
  RecordingGateway g({S::Transport});
  EXPECT_THROW(g.gateway->complete_text(scripted(2), "rate", scores_schema()), TransportError);
  EXPECT_EQ(g.provider->calls(), 3u);
}

TEST(Gateway, SchemaFailureAddsCorrectiveInstruction) {
  using S = ScriptedProvider::Step;
  RecordingGateway g({S::BadJson, S::Good});
  const Completion c = g.gateway->complete_text(scripted(), "rate", scores_schema());
  EXPECT_EQ(c.value["design"], 42);
  ASSERT_EQ(g.provider->prompts().size(), 2u);
  EXPECT_EQ(g.provider->prompts()[0].find("rejected"), std::string::npos);
  EXPECT_NE(g.provider->prompts()[1].find("rejected"), std::string::npos);
  // tokens of both attempts are metered
  EXPECT_EQ(c.usage.input_tokens, 20u);

  RecordingGateway bad({S::BadJson});
  try {
    bad.gateway->complete_text(scripted(1), "rate", scores_schema());
    FAIL();
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.raw_response(), "I think the design is nice");
    EXPECT_EQ(e.usage().request_count, 2u);
  }
}

TEST(Gateway, PermanentErrorsAreNotRetried) {
  using S = ScriptedProvider::Step;
  RecordingGateway g({S::Reject, S::Good});
  EXPECT_THROW(g.gateway->complete_text(scripted(), "rate", scores_schema()), ProviderRequestError);
  EXPECT_EQ(g.provider->calls(), 1u);
  EXPECT_TRUE(g.sleeps.empty());
}

TEST(Gateway, PreconditionsAndCapabilities) {
  auto gw = t::stub_gateway(StubOptions{.images = false});
  EXPECT_THROW(gw->complete_text(t::stub_model(), "", scores_schema()), PreconditionError);
  EXPECT_THROW(gw->complete_with_image(t::stub_model(), "rate", {}, scores_schema()), PreconditionError);
  const Bytes img = t::fake_png(2);
  EXPECT_THROW(gw->complete_with_image(t::stub_model(), "rate", img, scores_schema()), CapabilityError);
  ModelConfig bad = t::stub_model();
  bad.temperature = -1.0;
  EXPECT_THROW(gw->complete_text(bad, "rate", scores_schema()), PreconditionError);

  ModelGateway plain;
  ModelConfig unknown = t::stub_model();
  unknown.provider = "nobody";
  EXPECT_THROW(plain.complete_text(unknown, "rate", scores_schema()), CapabilityError);
}

TEST(Gateway, ForceStubOverridesProvider) {
  auto gw = t::stub_gateway();
  ModelConfig m;
  m.provider = "openai";
  m.model = "gpt-4.1";
  const Completion c = gw->complete_text(m, "rate", scores_schema());
  EXPECT_TRUE(c.value.contains("design"));
}

TEST(Concurrency, LimiterBoundsInFlightAcrossThreads) {
  ConcurrencyLimiter limiter(3);
  std::atomic<int> active{0};
  std::atomic<int> worst{0};
  parallel_for(40, 16, [&](std::size_t) {
    ConcurrencyLimiter::Slot slot(limiter);
    const int now = ++active;
    int prev = worst.load();
    while (now > prev && !worst.compare_exchange_weak(prev, now)) {}
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
    --active;
  });
  EXPECT_LE(worst.load(), 3);
  EXPECT_LE(limiter.peak(), 3u);
  EXPECT_EQ(limiter.in_flight(), 0u);
}

TEST(Concurrency, ParallelForVisitsEveryIndexAndRethrows) {
  std::vector<std::atomic<int>> seen(100);
  parallel_for(100, 7, [&](std::size_t i) { seen[i]++; });
  for (auto& s : seen) EXPECT_EQ(s.load(), 1);
  EXPECT_THROW(parallel_for(10, 3, [](std::size_t i) { if (i == 5) throw Error("boom"); }), Error);
}

TEST(Gateway, SharedCeilingAcrossConcurrentCallers) {
  auto gw = t::stub_gateway({}, 4);
  parallel_for(64, 16, [&](std::size_t i) {
    gw->complete_text(t::stub_model(), "rate " + std::to_string(i), scores_schema());
  });
  EXPECT_LE(gw->limiter().peak(), 4u);
}

TEST(Gateway, EmbeddingsAreNormalized) {
  auto gw = t::stub_gateway();
  const EmbeddingBatch b = gw->embed_text(t::stub_model(), {"a", "bb"});
  ASSERT_EQ(b.vectors.size(), 2u);
  double n = 0.0;
  for (float x : b.vectors[1]) n += static_cast<double>(x) * x;
  EXPECT_NEAR(n, 1.0, 1e-6);
  EXPECT_EQ(b.usage.input_tokens, 2u);
  EXPECT_THROW(gw->embed_text(t::stub_model(), {}), PreconditionError);
}

TEST(Wire, OpenAIChatBodyCarriesImageAndTemperature) {
  ModelConfig m;
  m.model = "gpt-4.1";
  const Bytes img = {1, 2, 3};
  ChatRequest r;
  r.prompt = "rate";
  r.format_instructions = "JSON only";
  r.image = img;
  const json body = wire::openai_chat_body(m, r);
  EXPECT_EQ(body["model"], "gpt-4.1");
  EXPECT_DOUBLE_EQ(body["temperature"].get<double>(), kDefaultTemperature);
  const json& content = body["messages"][0]["content"];
  EXPECT_EQ(content[0]["type"], "text");
  EXPECT_NE(content[0]["text"].get<std::string>().find("JSON only"), std::string::npos);
  EXPECT_EQ(content[1]["image_url"]["url"], "data:image/png;base64,AQID");
  EXPECT_EQ(base64_encode(std::vector<std::uint8_t>{'f', 'o', 'o', 'b'}), "Zm9vYg==");

  const json anth = wire::anthropic_body(m, r);
  EXPECT_EQ(anth["messages"][0]["content"][0]["type"], "image");
  const json gem = wire::gemini_body(m, r);
  EXPECT_EQ(gem["contents"][0]["parts"][1]["inline_data"]["data"], "AQID");
}

TEST(Wire, ParsesProviderResponses) {
  const ChatReply o = wire::parse_openai_chat(json::parse(
      R"({"choices":[{"message":{"content":"{\"a\":1}"}}],"usage":{"prompt_tokens":12,"completion_tokens":4}})"));
  EXPECT_EQ(o.text, "{\"a\":1}");
  EXPECT_EQ(o.input_tokens, 12u);
  EXPECT_EQ(o.output_tokens, 4u);
  const ChatReply a = wire::parse_anthropic(
      json::parse(R"({"content":[{"type":"text","text":"hi"}],"usage":{"input_tokens":5,"output_tokens":2}})"));
  EXPECT_EQ(a.text, "hi");
  EXPECT_EQ(a.output_tokens, 2u);
  const ChatReply g = wire::parse_gemini(json::parse(
      R"({"candidates":[{"content":{"parts":[{"text":"yo"}]}}],"usageMetadata":{"promptTokenCount":3,"candidatesTokenCount":1}})"));
  EXPECT_EQ(g.text, "yo");
  EXPECT_EQ(g.input_tokens, 3u);
  EXPECT_THROW(wire::parse_openai_chat(json::parse(R"({"choices":[]})")), SchemaError);
  const EmbedReply e = wire::parse_openai_embed(
      json::parse(R"({"data":[{"index":1,"embedding":[0,1]},{"index":0,"embedding":[1,0]}],"usage":{"prompt_tokens":7}})"));
  ASSERT_EQ(e.vectors.size(), 2u);
  EXPECT_EQ(e.vectors[0][0], 1.0f);
  EXPECT_EQ(e.input_tokens, 7u);
}

TEST(HttpProvider, TalksToOpenAICompatibleServer) {
  httplib::Server server;
  std::atomic<int> chat_calls{0};
  std::string auth;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    auth = req.get_header_value("Authorization");
    if (chat_calls++ == 0) {
      res.status = 429;
      res.set_content(R"({"error":"slow down"})", "application/json");
      return;
    }
    res.set_content(R"({"choices":[{"message":{"content":"{\"design\": 77}"}}],)"
                    R"("usage":{"prompt_tokens":50,"completion_tokens":6}})",
                    "application/json");
  });
  server.Post("/v1/embeddings", [&](const httplib::Request& req, httplib::Response& res) {
    const json body = json::parse(req.body);
    json data = json::array();
    for (std::size_t i = 0; i < body["input"].size(); ++i) data.push_back({{"index", i}, {"embedding", {3.0, 4.0}}});
    res.set_content(json{{"data", data}, {"usage", {{"prompt_tokens", 9}}}}.dump(), "application/json");
  });
  server.Post("/bad/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    res.status = 400;
    res.set_content(R"({"error":"bad"})", "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  GatewayOptions o;
  o.sleep = [](std::chrono::milliseconds) {};
  ModelGateway gw(o);
  gw.register_provider(std::make_shared<OpenAIProvider>("sk-test"));
  ModelConfig m;
  m.provider = "openai";
  m.model = "gpt-4.1";
  m.base_url = "http://127.0.0.1:" + std::to_string(port);

  const Completion c = gw.complete_text(m, "rate", scores_schema());
  EXPECT_EQ(c.value["design"], 77);
  EXPECT_EQ(chat_calls.load(), 2);
  EXPECT_EQ(c.usage.input_tokens, 50u);
  EXPECT_EQ(c.usage.request_count, 2u);
  EXPECT_EQ(auth, "Bearer sk-test");

  const EmbeddingBatch e = gw.embed_text(m, {"x", "y"});
  ASSERT_EQ(e.vectors.size(), 2u);
  EXPECT_FLOAT_EQ(e.vectors[0][0], 0.6f);
  EXPECT_FLOAT_EQ(e.vectors[0][1], 0.8f);

  m.base_url += "/bad";
  EXPECT_THROW(gw.complete_text(m, "rate", scores_schema()), ProviderRequestError);
  m.base_url = "http://127.0.0.1:1";
  m.max_retries = 0;
  EXPECT_THROW(gw.complete_text(m, "rate", scores_schema()), TransportError);

  server.stop();
  th.join();
}
