#include "guirerank/service.hpp"

#include <httplib.h>

#include "guirerank/errors.hpp"
#include "guirerank/reranker.hpp"
#include "guirerank/retrieval.hpp"

namespace guirerank {

using nlohmann::json;

namespace {

class UnknownDatasetError : public Error {
 public:
  explicit UnknownDatasetError(const std::string& name) : Error("dataset '" + name + "' is not registered") {}
};

class NotFoundError : public Error {
  using Error::Error;
};

ServiceResponse json_response(const json& body) { return {200, body.dump(), "application/json"}; }

json parse_body(const std::string& body) {
  json doc = json::parse(body, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) throw PreconditionError("request body must be a JSON object");
  return doc;
}

std::string required_string(const json& doc, const char* key) {
  auto it = doc.find(key);
  if (it == doc.end() || !it->is_string()) {
    throw PreconditionError(std::string("field '") + key + "' must be a string");
  }
  return it->get<std::string>();
}

std::size_t positive_count(const json& doc, const char* key, std::size_t fallback) {
  auto it = doc.find(key);
  if (it == doc.end()) return fallback;
  if (!it->is_number_integer() || it->get<std::int64_t>() < 1) {
    throw PreconditionError(std::string("field '") + key + "' must be an integer >= 1");
  }
  return static_cast<std::size_t>(it->get<std::int64_t>());
}

WeightProfile request_weights(const json& doc, const DimensionSet& dimensions) {
  WeightProfile overrides;
  if (auto it = doc.find("weights"); it != doc.end() && !it->is_null()) {
    if (!it->is_object()) throw PreconditionError("field 'weights' must be an object of numbers");
    for (const auto& [id, w] : it->items()) {
      if (!w.is_number()) throw PreconditionError("weight of '" + id + "' must be a number");
      overrides[id] = w.get<double>();
    }
  }
  return make_weights(dimensions, overrides);
}

template <typename F>
ServiceResponse guarded(F&& handler) {
  try {
    return handler();
  } catch (const UnknownDatasetError& e) {
    return error_response(404, "unknown_dataset", e.what());
  } catch (const NotFoundError& e) {
    return error_response(404, "not_found", e.what());
  } catch (const NoActiveDimensionError& e) {
    return error_response(400, "no_active_dimension", e.what());
  } catch (const UnknownDimensionError& e) {
    return error_response(400, "unknown_dimension", e.what());
  } catch (const PreconditionError& e) {
    return error_response(400, "bad_request", e.what());
  } catch (const ProviderUnavailableError& e) {
    std::string detail = e.what();
    if (!e.diagnostics().empty()) detail += "\n" + e.diagnostics();
    return error_response(502, "provider_unavailable", detail);
  } catch (const GatewayError& e) {
    return error_response(502, "gateway_error", e.what());
  } catch (const std::exception& e) {
    return error_response(500, "internal_error", e.what());
  }
}

}  // namespace

ServiceResponse error_response(int status, const std::string& error, const std::string& detail) {
  return {status, json{{"error", error}, {"detail", detail}}.dump(), "application/json"};
}

SearchService::SearchService(std::map<std::string, DatasetBundle> datasets, ServiceModels models,
                             std::shared_ptr<ModelGateway> gateway, PriceTable prices)
    : datasets_(std::move(datasets)),
      models_(std::move(models)),
      gateway_(std::move(gateway)),
      prices_(std::move(prices)) {
  if (!gateway_) throw PreconditionError("service needs a model gateway");
}

SearchService SearchService::from_config(const AppConfig& config, std::shared_ptr<ModelGateway> gateway) {
  std::map<std::string, DatasetBundle> datasets;
  for (const auto& [name, paths] : config.datasets) {
    try {
      datasets.emplace(name, load_bundle(paths));
    } catch (const std::exception& e) {
      throw Error("dataset '" + name + "' failed to load: " + e.what());
    }
  }
  ServiceModels models{config.decompose_model, config.embed_model, config.rerank_model,
                       config.negative_emphasis, config.concurrency};
  return SearchService(std::move(datasets), std::move(models), std::move(gateway), resolve_prices(config));
}

const DatasetBundle& SearchService::bundle(const std::string& name) const {
  auto it = datasets_.find(name);
  if (it == datasets_.end()) throw UnknownDatasetError(name);
  return it->second;
}

json SearchService::usage_block(const std::vector<std::pair<UsageMeter, std::string>>& parts) const {
  UsageMeter total;
  double cost = 0.0;
  json unpriced = json::array();
  json stages = json::array();
  for (const auto& [meter, model] : parts) {
    total += meter;
    json stage = usage_to_json(meter);
    stage["model"] = model;
    if (prices_.find(model) != nullptr) {
      stage["cost"] = cost_of(meter, model, prices_);
      cost += stage["cost"].get<double>();
    } else {
      stage["cost"] = nullptr;
      unpriced.push_back(model);
    }
    stages.push_back(std::move(stage));
  }
  json out = usage_to_json(total);
  out["cost"] = cost;
  out["stages"] = std::move(stages);
  if (!unpriced.empty()) out["unpriced_models"] = std::move(unpriced);
  return out;
}

ServiceResponse SearchService::list_datasets() const {
  json out = json::array();
  for (const auto& [name, b] : datasets_) {
    out.push_back({{"name", name}, {"gui_count", b.index.gui_count()}, {"dimensions", b.manifest.dimensions.ids()}});
  }
  return json_response(out);
}

ServiceResponse SearchService::search(const std::string& body) const {
  return guarded([&] {
    const json req = parse_body(body);
    const DatasetBundle& b = bundle(required_string(req, "dataset"));
    const std::string query = required_string(req, "query");
    if (query.find_first_not_of(" \t\r\n") == std::string::npos) throw PreconditionError("query must be non-empty");
    const WeightProfile weights = request_weights(req, b.manifest.dimensions);
    const std::size_t top = positive_count(req, "top", models_.default_top);

    UsageMeter decompose_usage;
    UsageMeter embed_usage;
    DecomposedQuery q = decompose_query(query, b.manifest.dimensions, models_.decompose, *gateway_, &decompose_usage);
    StageOneResult r = stage_one_rank(b.index, q, weights, models_.embed, *gateway_,
                                      {models_.negative_emphasis}, &embed_usage);
    return json_response({{"dataset", b.manifest.name},
                          {"query", query},
                          {"decomposition", decomposition_to_json(q)},
                          {"weights", weights},
                          {"active_dimensions", r.active_dimensions},
                          {"result_count", r.entries.size()},
                          {"results", stage_one_to_json(r, top)},
                          {"usage", usage_block({{decompose_usage, models_.decompose.model},
                                                 {embed_usage, models_.embed.model}})}});
  });
}

ServiceResponse SearchService::rerank(const std::string& body) const {
  return guarded([&] {
    const json req = parse_body(body);
    const DatasetBundle& b = bundle(required_string(req, "dataset"));
    const std::string query = required_string(req, "query");
    if (query.find_first_not_of(" \t\r\n") == std::string::npos) throw PreconditionError("query must be non-empty");
    RerankRequest rr;
    rr.query = query;
    rr.mode = parse_rerank_mode(required_string(req, "mode"));
    rr.k = positive_count(req, "k", kDefaultRerankK);
    rr.weights = request_weights(req, b.manifest.dimensions);
    rr.model = models_.rerank;
    if (auto it = req.find("model"); it != req.end() && !it->is_null()) {
      if (!it->is_string() || it->get<std::string>().empty()) throw PreconditionError("field 'model' must be a string");
      rr.model.model = it->get<std::string>();
    }
    rr.width = models_.rerank_width;
    const std::size_t top = positive_count(req, "top", models_.default_top);

    UsageMeter decompose_usage;
    UsageMeter embed_usage;
    DecomposedQuery q = decompose_query(query, b.manifest.dimensions, models_.decompose, *gateway_, &decompose_usage);
    StageOneResult s1 = stage_one_rank(b.index, q, rr.weights, models_.embed, *gateway_,
                                       {models_.negative_emphasis}, &embed_usage);
    ImageLoader images = [&b](const std::string& id) {
      const GuiRecord* g = b.manifest.find(id);
      if (g == nullptr) throw PreconditionError("GUI '" + id + "' is not in the manifest");
      return read_file_bytes(b.manifest.image_file(*g));
    };
    FinalRanking ranking = guirerank::rerank(s1, rr, b.manifest.dimensions, &b.store, images, *gateway_);

    json out = final_ranking_to_json(ranking, rr.model.model, &prices_, top);
    out["dataset"] = b.manifest.name;
    out["query"] = query;
    out["mode"] = to_string(rr.mode);
    out["k"] = rr.k;
    out["decomposition"] = decomposition_to_json(q);
    out["search_usage"] = usage_block({{decompose_usage, models_.decompose.model}, {embed_usage, models_.embed.model}});
    return json_response(out);
  });
}

ServiceResponse SearchService::gui_image(const std::string& dataset, const std::string& gui_id) const {
  return guarded([&] {
    const DatasetBundle& b = bundle(dataset);
    const GuiRecord* g = b.manifest.find(gui_id);
    if (g == nullptr) throw NotFoundError("GUI '" + gui_id + "' not found in dataset '" + dataset + "'");
    const auto path = b.manifest.image_file(*g);
    const auto bytes = read_file_bytes(path);
    return ServiceResponse{200, std::string(bytes.begin(), bytes.end()), image_mime_for(path.string())};
  });
}

ServiceResponse SearchService::gui_annotations(const std::string& dataset, const std::string& gui_id) const {
  return guarded([&] {
    const DatasetBundle& b = bundle(dataset);
    const Annotations* a = b.store.find(gui_id);
    if (a == nullptr) throw NotFoundError("no annotations for GUI '" + gui_id + "' in dataset '" + dataset + "'");
    return json_response(json(*a));
  });
}

struct HttpServer::Impl {
  const SearchService& service;
  std::string cors_origin;
  httplib::Server server;

  Impl(const SearchService& s, std::string origin) : service(s), cors_origin(std::move(origin)) {}
};

namespace {

void reply(httplib::Response& res, const ServiceResponse& r) {
  res.status = r.status;
  res.set_content(r.body, r.content_type);
}

}  // namespace

HttpServer::HttpServer(const SearchService& service, std::string cors_origin)
    : impl_(std::make_unique<Impl>(service, std::move(cors_origin))) {
  auto& srv = impl_->server;
  const SearchService* svc = &impl_->service;
  if (!impl_->cors_origin.empty()) {
    srv.set_default_headers({{"Access-Control-Allow-Origin", impl_->cors_origin},
                             {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                             {"Access-Control-Allow-Headers", "Content-Type"}});
  }
  srv.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  srv.Get("/datasets", [svc](const httplib::Request&, httplib::Response& res) { reply(res, svc->list_datasets()); });
  srv.Post("/search", [svc](const httplib::Request& req, httplib::Response& res) { reply(res, svc->search(req.body)); });
  srv.Post("/rerank", [svc](const httplib::Request& req, httplib::Response& res) { reply(res, svc->rerank(req.body)); });
  srv.Get(R"(/guis/([^/]+)/([^/]+)/image)", [svc](const httplib::Request& req, httplib::Response& res) {
    reply(res, svc->gui_image(req.matches[1], req.matches[2]));
  });
  srv.Get(R"(/guis/([^/]+)/([^/]+)/annotations)", [svc](const httplib::Request& req, httplib::Response& res) {
    reply(res, svc->gui_annotations(req.matches[1], req.matches[2]));
  });
  srv.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (!res.body.empty()) return;
    auto r = error_response(res.status, res.status == 404 ? "not_found" : "http_error",
                            "no route for " + req.method + " " + req.path);
    res.set_content(r.body, r.content_type);
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound <= 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

bool HttpServer::running() const { return impl_->server.is_running(); }

}  // namespace guirerank
