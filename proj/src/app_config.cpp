#include "guirerank/app_config.hpp"

#include <fstream>

#include "guirerank/errors.hpp"
#include "guirerank/http_providers.hpp"

namespace guirerank {

using nlohmann::json;

AppConfig::AppConfig() {
  annotate_model = {.provider = "openai", .model = "gpt-4.1"};
  decompose_model = {.provider = "openai", .model = "gpt-4.1"};
  embed_model = {.provider = "openai", .model = "text-embedding-3-small"};
  rerank_model = {.provider = "openai", .model = "gpt-4.1"};
}

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

AppConfig app_config_from_json(const json& doc, const std::filesystem::path& base_dir) {
  if (!doc.is_object()) throw FormatError("config must be a JSON object");
  AppConfig c;
  if (doc.contains("models")) {
    const json& m = doc["models"];
    c.annotate_model = model_config_from_json(m.value("annotate", json::object()), c.annotate_model);
    c.decompose_model = model_config_from_json(m.value("decompose", json::object()), c.decompose_model);
    c.embed_model = model_config_from_json(m.value("embed", json::object()), c.embed_model);
    c.rerank_model = model_config_from_json(m.value("rerank", json::object()), c.rerank_model);
  }
  if (doc.contains("prices")) c.prices_path = resolve(base_dir, doc["prices"].get<std::string>());
  if (doc.contains("stub_fixtures")) c.stub_fixtures = resolve(base_dir, doc["stub_fixtures"].get<std::string>());
  c.concurrency = doc.value("concurrency", c.concurrency);
  if (c.concurrency == 0) throw FormatError("config concurrency must be >= 1");
  c.negative_emphasis = doc.value("negative_emphasis", c.negative_emphasis);

  if (doc.contains("service")) {
    const json& s = doc["service"];
    c.host = s.value("host", c.host);
    c.port = s.value("port", c.port);
    c.cors_origin = s.value("cors_origin", c.cors_origin);
    if (s.contains("datasets")) {
      for (const auto& [name, d] : s["datasets"].items()) {
        if (!d.contains("manifest")) throw FormatError("dataset '" + name + "' needs a manifest path");
        DatasetPaths paths;
        paths.manifest = resolve(base_dir, d["manifest"].get<std::string>());
        if (d.contains("store")) paths.store = resolve(base_dir, d["store"].get<std::string>());
        if (d.contains("index")) paths.index = resolve(base_dir, d["index"].get<std::string>());
        c.datasets[name] = std::move(paths);
      }
    }
  }
  return c;
}

AppConfig load_app_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config '" + path.string() + "'");
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw FormatError("config '" + path.string() + "' is not valid JSON");
  return app_config_from_json(doc, path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

PriceTable builtin_prices() {
  return PriceTable({{"gpt-4.1", {2.00, 8.00}},
                     {"gpt-4.1-mini", {0.40, 1.60}},
                     {"gpt-4.1-nano", {0.10, 0.40}},
                     {"text-embedding-3-small", {0.02, 0.0}},
                     {"text-embedding-3-large", {0.13, 0.0}}});
}

PriceTable resolve_prices(const AppConfig& config) {
  return config.prices_path ? load_price_table(config.prices_path->string()) : builtin_prices();
}

std::shared_ptr<ModelGateway> make_app_gateway(const AppConfig& config, bool force_stub) {
  GatewayOptions options;
  options.max_in_flight = config.concurrency;
  StubOptions stub;
  if (config.stub_fixtures) stub.canned = load_canned_replies(config.stub_fixtures->string());
  return make_gateway(std::move(options), std::move(stub), force_stub);
}

DatasetBundle load_bundle(const DatasetPaths& paths) {
  DatasetBundle b;
  b.manifest_path = paths.manifest;
  b.manifest = load_manifest(paths.manifest);
  const auto dir = b.manifest.base_dir;
  b.store = load_annotation_store(paths.store.empty() ? default_store_path(dir, b.manifest.name) : paths.store);
  b.store.validate_keys(b.manifest.dimensions);
  b.index = load_index(paths.index.empty() ? default_index_path(dir, b.manifest.name) : paths.index);

  if (b.index.dimension_ids() != b.manifest.dimensions.ids()) {
    throw FormatError("index dimensions do not match manifest '" + b.manifest.name + "'");
  }
  if (b.index.gui_ids() != b.store.gui_ids()) {
    throw FormatError("index rows do not match the annotation store of '" + b.manifest.name + "'");
  }
  for (const auto& id : b.index.gui_ids()) {
    if (b.manifest.find(id) == nullptr) {
      throw FormatError("index GUI '" + id + "' is not in manifest '" + b.manifest.name + "'");
    }
  }
  return b;
}

DatasetBundle open_bundle_from_index(const std::filesystem::path& index_path) {
  EmbeddingIndex index = load_index(index_path);
  auto dir = index_path.parent_path();
  if (dir.empty()) dir = ".";
  auto manifest = find_manifest(dir, index.dataset());
  if (!manifest) {
    throw Error("no manifest for dataset '" + index.dataset() + "' found in " + dir.string());
  }
  return load_bundle({*manifest, default_store_path(dir, index.dataset()), index_path});
}

}  // namespace guirerank
