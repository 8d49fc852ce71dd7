#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "guirerank/dataset.hpp"
#include "guirerank/embed_index.hpp"
#include "guirerank/model_gateway.hpp"
#include "guirerank/usage.hpp"

namespace guirerank {

struct DatasetPaths {
  std::filesystem::path manifest;
  std::filesystem::path store;  // empty: <manifest dir>/<name>.annotations.jsonl
  std::filesystem::path index;  // empty: <manifest dir>/<name>.index
};

// Shared by the CLI and the service. JSON layout:
// {
//   "models": {"annotate": ModelConfig, "decompose": ..., "embed": ..., "rerank": ...},
//   "prices": "prices.json", "concurrency": 10, "negative_emphasis": 1.0,
//   "stub_fixtures": "fixtures.json",
//   "service": {"host": "127.0.0.1", "port": 8080, "cors_origin": "*",
//               "datasets": {"<name>": {"manifest": "...", "store": "...", "index": "..."}}}
// }
// Relative paths resolve against the config file's directory.
struct AppConfig {
  ModelConfig annotate_model;
  ModelConfig decompose_model;
  ModelConfig embed_model;
  ModelConfig rerank_model;
  std::optional<std::filesystem::path> prices_path;
  std::optional<std::filesystem::path> stub_fixtures;
  std::size_t concurrency = 10;
  double negative_emphasis = 1.0;

  std::string host = "127.0.0.1";
  int port = 8080;
  std::string cors_origin = "*";
  std::map<std::string, DatasetPaths> datasets;

  AppConfig();
};

AppConfig app_config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);
AppConfig load_app_config(const std::filesystem::path& path);

// Prices used when no price file is configured (USD per 1M tokens, 2025 list
// prices of the GPT-4.1 family).
PriceTable builtin_prices();
PriceTable resolve_prices(const AppConfig& config);

std::shared_ptr<ModelGateway> make_app_gateway(const AppConfig& config, bool force_stub);

// Manifest, annotations and index of one dataset, cross-checked: the index
// rows are exactly the store's GUIs and its dimensions are the manifest's.
struct DatasetBundle {
  DatasetManifest manifest;
  AnnotationStore store;
  EmbeddingIndex index;
  std::filesystem::path manifest_path;
};

DatasetBundle load_bundle(const DatasetPaths& paths);
// Locates manifest and store next to the index (by the dataset name in the
// index header).
DatasetBundle open_bundle_from_index(const std::filesystem::path& index_path);

}  // namespace guirerank
