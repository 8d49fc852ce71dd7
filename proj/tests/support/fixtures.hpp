#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "guirerank/app_config.hpp"
#include "guirerank/dataset.hpp"
#include "guirerank/eval.hpp"
#include "guirerank/model_gateway.hpp"
#include "guirerank/stub_provider.hpp"

namespace guirerank::testing {

namespace fs = std::filesystem;

class TempDir {
 public:
  explicit TempDir(const std::string& tag = "grr");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

// PNG signature followed by deterministic filler bytes.
Bytes fake_png(std::uint32_t seed, std::size_t size = 1500);

// Distinct, human-looking annotation text per (gui, dimension).
Annotations synthetic_annotations(std::size_t gui_index, std::uint32_t seed);

struct FixtureDataset {
  std::string name;
  fs::path dir;
  fs::path manifest;
  fs::path store;
  fs::path index;
};

// Writes `<dir>/<name>.json` and `<dir>/images/gui_NNN.png`.
FixtureDataset write_dataset(const fs::path& dir, const std::string& name, std::size_t guis,
                             std::uint32_t seed = 7);
// Same, plus a synthetic annotation store and a stub-embedded index.
FixtureDataset write_indexed_dataset(const fs::path& dir, const std::string& name, std::size_t guis,
                                     std::uint32_t seed = 7);

std::string gui_name(std::size_t i);

// Gateway that routes everything to the stub and never sleeps.
std::shared_ptr<ModelGateway> stub_gateway(StubOptions stub = {}, std::size_t max_in_flight = 10);

ModelConfig stub_model(const std::string& name = "gpt-4.1");

// `queries` x `candidates` pools with grades uniform in 0..3; every query has
// at least one candidate graded >= 2.
GoldStandard synthetic_gold(std::size_t queries, std::size_t candidates, std::uint32_t seed);
// Candidates sorted by grade desc (ties by id), i.e. an ideal ranking.
RankingSet oracle_rankings(const GoldStandard& gold);
RankingSet reversed_rankings(const GoldStandard& gold);

void write_json(const fs::path& path, const nlohmann::json& doc);
std::string read_text(const fs::path& path);

}  // namespace guirerank::testing
