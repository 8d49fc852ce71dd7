#include "fixtures.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "guirerank/embed_index.hpp"
#include "guirerank/http_providers.hpp"

namespace guirerank::testing {

using nlohmann::json;

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = fs::temp_directory_path() /
          (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter.fetch_add(1)));
  fs::remove_all(path_);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

Bytes fake_png(std::uint32_t seed, std::size_t size) {
  Bytes b = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::mt19937 rng(seed);
  while (b.size() < size) b.push_back(static_cast<std::uint8_t>(rng() & 0xff));
  return b;
}

namespace {

const std::vector<std::string> kDomains = {"banking", "fitness tracking", "recipe sharing", "travel booking",
                                           "music streaming", "weather", "news reading", "food delivery",
                                           "messaging", "note taking", "shopping", "language learning"};
const std::vector<std::string> kFunctions = {"log in with email and password", "browse a product list",
                                             "compose and send a message", "edit profile settings",
                                             "view a weekly chart", "search by keyword",
                                             "check out a cart", "play a song", "book a seat",
                                             "record a workout"};
const std::vector<std::string> kStyles = {"modern flat", "dark themed", "minimal white", "colorful playful",
                                          "material card based", "gradient heavy", "high contrast",
                                          "pastel soft"};
const std::vector<std::string> kComponents = {"top app bar", "bottom navigation", "floating action button",
                                              "list of cards", "text input fields", "toggle switches",
                                              "image carousel", "tab bar", "progress ring", "search field"};
const std::vector<std::string> kTexts = {"Sign in", "Welcome back", "Your cart", "Today", "Settings",
                                         "Create account", "Top picks", "Recent orders", "Messages",
                                         "Start workout"};

template <typename T>
const T& pick(const std::vector<T>& v, std::mt19937& rng) {
  return v[rng() % v.size()];
}

}  // namespace

std::string gui_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "gui_%03zu", i);
  return buf;
}

Annotations synthetic_annotations(std::size_t gui_index, std::uint32_t seed) {
  std::mt19937 rng(seed * 7919u + static_cast<std::uint32_t>(gui_index));
  const std::string tag = " (screen " + std::to_string(gui_index) + ")";
  return {
      {"domain", "A " + pick(kDomains, rng) + " app" + tag},
      {"functionality", "Lets the user " + pick(kFunctions, rng) + " and " + pick(kFunctions, rng) + tag},
      {"design", "A " + pick(kStyles, rng) + " look with " + pick(kStyles, rng) + " accents" + tag},
      {"gui_components", "Shows a " + pick(kComponents, rng) + ", a " + pick(kComponents, rng) + tag},
      {"displayed_text", "\"" + pick(kTexts, rng) + "\", \"" + pick(kTexts, rng) + "\"" + tag},
  };
}

void write_json(const fs::path& path, const json& doc) {
  std::ofstream out(path);
  out << doc.dump(2) << "\n";
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

FixtureDataset write_dataset(const fs::path& dir, const std::string& name, std::size_t guis, std::uint32_t seed) {
  fs::create_directories(dir / "images");
  json list = json::array();
  for (std::size_t i = 0; i < guis; ++i) {
    const std::string id = gui_name(i);
    const Bytes png = fake_png(seed * 1000u + static_cast<std::uint32_t>(i), 1200 + 37 * i);
    std::ofstream img(dir / "images" / (id + ".png"), std::ios::binary);
    img.write(reinterpret_cast<const char*>(png.data()), static_cast<std::streamsize>(png.size()));
    list.push_back({{"gui_id", id}, {"image_path", id + ".png"}});
  }
  FixtureDataset f;
  f.name = name;
  f.dir = dir;
  f.manifest = dir / (name + ".json");
  f.store = default_store_path(dir, name);
  f.index = default_index_path(dir, name);
  write_json(f.manifest, {{"name", name}, {"image_dir", "images"}, {"guis", list}});
  return f;
}

FixtureDataset write_indexed_dataset(const fs::path& dir, const std::string& name, std::size_t guis,
                                     std::uint32_t seed) {
  FixtureDataset f = write_dataset(dir, name, guis, seed);
  const DatasetManifest manifest = load_manifest(f.manifest);
  AnnotationStore store;
  for (std::size_t i = 0; i < guis; ++i) store.set(gui_name(i), synthetic_annotations(i, seed));
  save_annotation_store(store, f.store);
  auto gw = stub_gateway();
  IndexBuild build = build_index(name, store, manifest.dimensions, stub_model("text-embedding-3-small"), *gw);
  save_index(build.index, f.index);
  return f;
}

std::shared_ptr<ModelGateway> stub_gateway(StubOptions stub, std::size_t max_in_flight) {
  GatewayOptions options;
  options.max_in_flight = max_in_flight;
  options.sleep = [](std::chrono::milliseconds) {};
  return make_gateway(std::move(options), std::move(stub), /*force_stub=*/true);
}

ModelConfig stub_model(const std::string& name) {
  ModelConfig m;
  m.provider = "stub";
  m.model = name;
  return m;
}

GoldStandard synthetic_gold(std::size_t queries, std::size_t candidates, std::uint32_t seed) {
  std::mt19937 rng(seed);
  std::uniform_int_distribution<int> grade(0, 3);
  GoldStandard gold;
  for (std::size_t q = 0; q < queries; ++q) {
    GoldQuery gq;
    gq.query_id = "q" + std::to_string(q);
    gq.text = "synthetic query " + std::to_string(q);
    bool relevant = false;
    for (std::size_t c = 0; c < candidates; ++c) {
      const int g = grade(rng);
      relevant = relevant || g >= 2;
      gq.candidates.push_back({"c" + std::to_string(q) + "_" + std::to_string(c), g});
    }
    if (!relevant) gq.candidates.front().grade = 3;
    gold.queries.push_back(std::move(gq));
  }
  return gold;
}

RankingSet oracle_rankings(const GoldStandard& gold) {
  RankingSet out;
  for (const auto& q : gold.queries) {
    auto c = q.candidates;
    std::stable_sort(c.begin(), c.end(), [](const GoldCandidate& a, const GoldCandidate& b) {
      if (a.grade != b.grade) return a.grade > b.grade;
      return a.gui_id < b.gui_id;
    });
    Ranking r;
    for (const auto& x : c) r.push_back(x.gui_id);
    out[q.query_id] = std::move(r);
  }
  return out;
}

RankingSet reversed_rankings(const GoldStandard& gold) {
  RankingSet out = oracle_rankings(gold);
  for (auto& [_, r] : out) std::reverse(r.begin(), r.end());
  return out;
}

}  // namespace guirerank::testing
