#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "guirerank/app_config.hpp"
#include "guirerank/model_gateway.hpp"
#include "guirerank/usage.hpp"

namespace guirerank {

struct ServiceResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

struct ServiceModels {
  ModelConfig decompose;
  ModelConfig embed;
  ModelConfig rerank;
  double negative_emphasis = 1.0;
  std::size_t rerank_width = 10;
  std::size_t default_top = 100;
};

// Request handlers over an immutable registry of loaded datasets. Handlers are
// const and hold no per-request state, so one instance serves concurrent
// requests; errors come back as {"error", "detail"} bodies.
class SearchService {
 public:
  SearchService(std::map<std::string, DatasetBundle> datasets, ServiceModels models,
                std::shared_ptr<ModelGateway> gateway, PriceTable prices);

  // Loads every registered dataset; the first one that fails aborts startup
  // with an Error naming it.
  static SearchService from_config(const AppConfig& config, std::shared_ptr<ModelGateway> gateway);

  ServiceResponse list_datasets() const;
  ServiceResponse search(const std::string& body) const;
  ServiceResponse rerank(const std::string& body) const;
  ServiceResponse gui_image(const std::string& dataset, const std::string& gui_id) const;
  ServiceResponse gui_annotations(const std::string& dataset, const std::string& gui_id) const;

 private:
  const DatasetBundle& bundle(const std::string& name) const;
  nlohmann::json usage_block(const std::vector<std::pair<UsageMeter, std::string>>& parts) const;

  std::map<std::string, DatasetBundle> datasets_;
  ServiceModels models_;
  std::shared_ptr<ModelGateway> gateway_;
  PriceTable prices_;
};

ServiceResponse error_response(int status, const std::string& error, const std::string& detail);

// HTTP binding of a SearchService (routes, CORS, preflight).
class HttpServer {
 public:
  HttpServer(const SearchService& service, std::string cors_origin);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Port 0 picks a free port. Returns the bound port; throws Error on failure.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  void listen();
  void stop();
  bool running() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace guirerank
