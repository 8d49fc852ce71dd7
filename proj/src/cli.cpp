#include "guirerank/cli.hpp"

#include <algorithm>
#include <atomic>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "guirerank/annotator.hpp"
#include "guirerank/app_config.hpp"
#include "guirerank/embed_index.hpp"
#include "guirerank/errors.hpp"
#include "guirerank/eval.hpp"
#include "guirerank/reranker.hpp"
#include "guirerank/retrieval.hpp"
#include "guirerank/service.hpp"

namespace guirerank::cli {

using nlohmann::json;

namespace {

struct Globals {
  std::string config;
  std::string model;
  std::string stub_fixtures;
  bool stub = false;
  bool json = false;
};

struct AnnotateArgs {
  std::string manifest;
  std::size_t width = 10;
  bool resume = false;
  double max_failure_rate = 0.10;
};

struct EmbedArgs {
  std::string store;
  std::string manifest;
  std::string out;
  std::size_t batch = kDefaultEmbedBatch;
};

struct SearchArgs {
  std::string index;
  std::string query;
  std::string weights;
  std::size_t top = 100;
};

struct RerankArgs {
  std::string index;
  std::string query;
  std::string mode = "text";
  std::size_t k = kDefaultRerankK;
  std::string weights;
  std::string prices;
  std::size_t width = 10;
  std::size_t batch = 10;
  std::size_t top = 100;
};

struct EvalArgs {
  std::string gold;
  std::vector<std::string> rankings;
  int binarize = kDefaultBinarizeThreshold;
  std::string gain = "linear";
  std::string out;
};

struct CostArgs {
  std::vector<std::string> usage;
  std::string prices;
  std::size_t workers = kDefaultWorkers;
};

struct ServeArgs {
  std::string host;
  int port = -1;
};

class Context {
 public:
  Context(const Globals& g, std::ostream& out, std::ostream& err) : g_(g), out_(out), err_(err) {
    if (!g.config.empty()) config_ = load_app_config(g.config);
    if (!g.stub_fixtures.empty()) config_.stub_fixtures = g.stub_fixtures;
  }

  const Globals& globals() const { return g_; }
  const AppConfig& config() const { return config_; }
  AppConfig& config() { return config_; }
  std::ostream& out() { return out_; }
  std::ostream& err() { return err_; }

  ModelConfig model(ModelConfig base) const {
    if (!g_.model.empty()) base.model = g_.model;
    return base;
  }

  ModelGateway& gateway() {
    if (!gateway_) gateway_ = make_app_gateway(config_, g_.stub);
    return *gateway_;
  }
  std::shared_ptr<ModelGateway> shared_gateway() {
    gateway();
    return gateway_;
  }

  PriceTable prices(const std::string& override_path) const {
    if (!override_path.empty()) return load_price_table(override_path);
    return resolve_prices(config_);
  }

 private:
  const Globals& g_;
  std::ostream& out_;
  std::ostream& err_;
  AppConfig config_;
  std::shared_ptr<ModelGateway> gateway_;
};

std::string fixed(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string usage_line(const UsageMeter& m, const std::string& model, const PriceTable& prices) {
  std::ostringstream s;
  s << "usage: " << m.input_tokens << " input tokens, " << m.output_tokens << " output tokens, " << m.request_count
    << " requests";
  if (prices.find(model) != nullptr) s << ", cost $" << fixed(cost_of(m, model, prices), 6) << " (" << model << ")";
  return s.str();
}

WeightProfile weights_for(const DimensionSet& dimensions, const std::string& spec) {
  return make_weights(dimensions, spec.empty() ? WeightProfile{} : parse_weight_spec(spec));
}

void print_decomposition(std::ostream& out, const DecomposedQuery& q) {
  out << "query: " << q.query << "\n";
  for (const auto& [dim, c] : q.constraints) {
    out << "  " << dim << ":";
    for (const auto& p : c.positives) out << " +\"" << p << "\"";
    for (const auto& n : c.negatives) out << " -\"" << n << "\"";
    out << "\n";
  }
}

int cmd_annotate(Context& ctx, const AnnotateArgs& a) {
  AnnotationJob job;
  job.manifest = load_manifest(a.manifest);
  job.model = ctx.model(ctx.config().annotate_model);
  job.width = a.width;
  job.resume = a.resume;
  job.max_failure_rate = a.max_failure_rate;
  job.store_path = default_store_path(job.manifest.base_dir, job.manifest.name);

  AnnotationOutcome outcome;
  try {
    outcome = annotate_dataset(job, ctx.gateway());
  } catch (const AnnotationAbortedError& e) {
    for (const auto& f : e.partial().failures) ctx.err() << "failed " << f.gui_id << ": " << f.reason << "\n";
    throw;
  }
  for (const auto& f : outcome.failures) ctx.err() << "failed " << f.gui_id << ": " << f.reason << "\n";

  const PriceTable prices = ctx.prices("");
  if (ctx.globals().json) {
    json failures = json::array();
    for (const auto& f : outcome.failures) failures.push_back({{"gui_id", f.gui_id}, {"reason", f.reason}});
    json usage = usage_to_json(outcome.usage);
    usage["model"] = job.model.model;
    usage["cost"] = prices.find(job.model.model) ? json(cost_of(outcome.usage, job.model.model, prices)) : json();
    ctx.out() << json{{"store", job.store_path.string()},
                      {"annotated", outcome.store.size()},
                      {"skipped", outcome.skipped},
                      {"failures", failures},
                      {"usage", usage}}
                     .dump(2)
              << "\n";
  } else {
    ctx.out() << "annotated " << outcome.store.size() << " of " << job.manifest.guis.size() << " GUIs ("
              << outcome.skipped << " resumed, " << outcome.failures.size() << " failed) -> "
              << job.store_path.string() << "\n"
              << usage_line(outcome.usage, job.model.model, prices) << "\n";
  }
  return kExitOk;
}

int cmd_embed(Context& ctx, const EmbedArgs& a) {
  const std::filesystem::path store_path(a.store);
  std::filesystem::path dir = store_path.parent_path();
  if (dir.empty()) dir = ".";

  DatasetManifest manifest;
  if (!a.manifest.empty()) {
    manifest = load_manifest(a.manifest);
  } else {
    std::string name = store_path.filename().string();
    const std::string suffix = ".annotations.jsonl";
    if (name.size() > suffix.size() && name.ends_with(suffix)) name.resize(name.size() - suffix.size());
    auto found = find_manifest(dir, name);
    if (!found) throw Error("no manifest for dataset '" + name + "' next to " + a.store + " (use --manifest)");
    manifest = load_manifest(*found);
  }

  const AnnotationStore store = load_annotation_store(store_path);
  const ModelConfig model = ctx.model(ctx.config().embed_model);
  IndexBuild build = build_index(manifest.name, store, manifest.dimensions, model, ctx.gateway(), a.batch);
  const std::filesystem::path out = a.out.empty() ? default_index_path(dir, manifest.name) : std::filesystem::path(a.out);
  save_index(build.index, out);

  const PriceTable prices = ctx.prices("");
  if (ctx.globals().json) {
    json usage = usage_to_json(build.usage);
    usage["model"] = model.model;
    usage["cost"] = prices.find(model.model) ? json(cost_of(build.usage, model.model, prices)) : json();
    ctx.out() << json{{"index", out.string()},
                      {"dataset", manifest.name},
                      {"guis", build.index.gui_count()},
                      {"dimensions", build.index.dimension_ids()},
                      {"width", build.index.width()},
                      {"usage", usage}}
                     .dump(2)
              << "\n";
  } else {
    ctx.out() << "indexed " << build.index.gui_count() << " GUIs x " << build.index.dimension_ids().size()
              << " dimensions (width " << build.index.width() << ") -> " << out.string() << "\n"
              << usage_line(build.usage, model.model, prices) << "\n";
  }
  return kExitOk;
}

struct StageOneRun {
  DatasetBundle bundle;
  DecomposedQuery query;
  WeightProfile weights;
  StageOneResult result;
  UsageMeter decompose_usage;
  UsageMeter embed_usage;
};

StageOneRun run_stage_one(Context& ctx, const std::string& index, const std::string& query,
                          const std::string& weight_spec, const ModelConfig& decompose_model) {
  StageOneRun r{open_bundle_from_index(index), {}, {}, {}, {}, {}};
  r.weights = weights_for(r.bundle.manifest.dimensions, weight_spec);
  r.query = decompose_query(query, r.bundle.manifest.dimensions, decompose_model, ctx.gateway(), &r.decompose_usage);
  for (const auto& d : r.query.diagnostics) ctx.err() << "decomposition: " << d << "\n";
  r.result = stage_one_rank(r.bundle.index, r.query, r.weights, ctx.config().embed_model, ctx.gateway(),
                            {ctx.config().negative_emphasis}, &r.embed_usage);
  return r;
}

int cmd_search(Context& ctx, const SearchArgs& a) {
  const ModelConfig decompose = ctx.model(ctx.config().decompose_model);
  StageOneRun r = run_stage_one(ctx, a.index, a.query, a.weights, decompose);
  const PriceTable prices = ctx.prices("");

  if (ctx.globals().json) {
    ctx.out() << stage_one_to_json(r.result, a.top).dump(2) << "\n";
    ctx.err() << usage_line(r.decompose_usage, decompose.model, prices) << "\n";
    return kExitOk;
  }
  print_decomposition(ctx.out(), r.query);
  ctx.out() << "\nrank  gui_id  total";
  for (const auto& d : r.result.active_dimensions) ctx.out() << "  " << d;
  ctx.out() << "\n";
  const std::size_t n = std::min(a.top, r.result.entries.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& e = r.result.entries[i];
    ctx.out() << (i + 1) << "  " << e.gui_id << "  " << fixed(e.total, 4);
    for (const auto& d : r.result.active_dimensions) ctx.out() << "  " << fixed(e.per_dimension.at(d).s, 4);
    ctx.out() << "\n";
  }
  ctx.out() << usage_line(r.decompose_usage, decompose.model, prices) << "\n";
  return kExitOk;
}

int cmd_rerank(Context& ctx, const RerankArgs& a) {
  RerankRequest req;
  req.query = a.query;
  req.mode = parse_rerank_mode(a.mode);
  req.k = a.k;
  req.model = ctx.model(ctx.config().rerank_model);
  req.width = a.width;
  req.batch_size = a.batch;
  if (req.k < 1) throw PreconditionError("--k must be >= 1");

  StageOneRun r = run_stage_one(ctx, a.index, a.query, a.weights, ctx.config().decompose_model);
  req.weights = r.weights;
  const DatasetBundle& b = r.bundle;
  ImageLoader images = [&b](const std::string& id) {
    const GuiRecord* g = b.manifest.find(id);
    if (g == nullptr) throw PreconditionError("GUI '" + id + "' is not in the manifest");
    return read_file_bytes(b.manifest.image_file(*g));
  };
  FinalRanking ranking = rerank(r.result, req, b.manifest.dimensions, &b.store, images, ctx.gateway());
  ctx.err() << "reranked " << ranking.head.size() << " GUIs in "
            << fixed(std::chrono::duration<double>(ranking.elapsed).count(), 2) << " s\n";

  const PriceTable prices = ctx.prices(a.prices);
  if (ctx.globals().json) {
    json out = final_ranking_to_json(ranking, req.model.model, &prices, a.top);
    out["query"] = a.query;
    out["mode"] = to_string(req.mode);
    out["k"] = req.k;
    out["width"] = req.width;
    out["decomposition"] = decomposition_to_json(r.query);
    ctx.out() << out.dump(2) << "\n";
    return kExitOk;
  }
  print_decomposition(ctx.out(), r.query);
  ctx.out() << "\nrank  gui_id  aggregate  stage1";
  for (const auto& d : ranking.scored_dimensions) ctx.out() << "  " << d;
  ctx.out() << "\n";
  std::size_t rank = 1;
  for (const auto& h : ranking.head) {
    ctx.out() << rank++ << "  " << h.gui_id << "  " << fixed(h.aggregate, 4) << "  " << fixed(h.stage_one_total, 4);
    for (const auto& d : ranking.scored_dimensions) ctx.out() << "  " << h.scores.at(d);
    for (const auto& f : h.flags) ctx.out() << "  [" << f << "]";
    ctx.out() << "\n";
  }
  ctx.out() << "(" << ranking.tail.size() << " more GUIs in stage-1 order)\n"
            << usage_line(ranking.usage, req.model.model, prices) << "\n";
  return kExitOk;
}

std::string run_label(const std::string& path) { return std::filesystem::path(path).stem().string(); }

int cmd_eval(Context& ctx, const EvalArgs& a) {
  const GoldStandard gold = load_gold_standard(a.gold);
  EvalOptions options{a.binarize, parse_gain(a.gain)};
  std::vector<std::pair<std::string, MetricReport>> rows;
  json runs = json::object();
  for (const auto& path : a.rankings) {
    MetricReport report = evaluate_run(gold, load_rankings(path), options);
    runs[run_label(path)] = metric_report_to_json(report);
    rows.emplace_back(run_label(path), std::move(report));
  }
  json doc = {{"gold", a.gold}, {"binarize", a.binarize}, {"ndcg_gain", to_string(options.gain)}, {"runs", runs}};

  const std::string out_path = a.out.empty() ? a.rankings.front() + ".metrics.json" : a.out;
  std::ofstream f(out_path);
  if (!f) throw Error("cannot write " + out_path);
  f << doc.dump(2) << "\n";
  if (!f) throw Error("cannot write " + out_path);

  if (ctx.globals().json) {
    ctx.out() << doc.dump(2) << "\n";
  } else {
    ctx.out() << format_metric_table(rows);
  }
  ctx.err() << "metrics written to " << out_path << "\n";
  return kExitOk;
}

int cmd_eval_cost(Context& ctx, const CostArgs& a) {
  const PriceTable prices = ctx.prices(a.prices);
  std::vector<std::pair<std::string, CostProjection>> rows;
  json out = json::array();
  for (const auto& path : a.usage) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open usage file '" + path + "'");
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw FormatError("usage file '" + path + "' is not valid JSON");
    UsageRecord rec = usage_record_from_json(doc);
    const std::string label = rec.label.empty() ? run_label(path) : rec.label;
    CostProjection p = project_cost(rec.meters, rec.model, prices, a.workers);
    json j = cost_projection_to_json(p);
    j["label"] = label;
    out.push_back(std::move(j));
    rows.emplace_back(label, std::move(p));
  }
  if (ctx.globals().json) {
    ctx.out() << out.dump(2) << "\n";
  } else {
    ctx.out() << format_cost_table(rows);
  }
  return kExitOk;
}

std::atomic<HttpServer*> g_server{nullptr};

extern "C" void stop_server(int) {
  if (HttpServer* s = g_server.load()) s->stop();
}

int cmd_serve(Context& ctx, const ServeArgs& a) {
  AppConfig& config = ctx.config();
  if (!a.host.empty()) config.host = a.host;
  if (a.port >= 0) config.port = a.port;
  const SearchService service = SearchService::from_config(config, ctx.shared_gateway());
  HttpServer server(service, config.cors_origin);
  const int port = server.bind(config.host, config.port);
  ctx.err() << "serving " << config.datasets.size() << " dataset(s) on http://" << config.host << ":" << port << "\n";
  g_server = &server;
  auto old_int = std::signal(SIGINT, stop_server);
  auto old_term = std::signal(SIGTERM, stop_server);
  server.listen();
  std::signal(SIGINT, old_int);
  std::signal(SIGTERM, old_term);
  g_server = nullptr;
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Two-stage natural-language GUI retrieval: annotate, embed, search, rerank, eval, serve", "guirerank"};
  app.require_subcommand(1);

  Globals g;
  app.add_option("--config", g.config, "Config file (JSON)")->envname("GUIRERANK_CONFIG");
  app.add_option("--model", g.model, "Model name for the subcommand's model stage");
  app.add_flag("--stub", g.stub, "Route every model call to the offline stub provider");
  app.add_flag("--json", g.json, "Machine-readable output");
  app.add_option("--stub-fixtures", g.stub_fixtures, "Canned stub replies (JSON)");

  AnnotateArgs an;
  auto* annotate = app.add_subcommand("annotate", "Annotate every GUI of a dataset manifest");
  annotate->add_option("--manifest", an.manifest, "Dataset manifest")->required();
  annotate->add_option("--width", an.width, "Concurrent requests")->check(CLI::PositiveNumber);
  annotate->add_flag("--resume", an.resume, "Skip GUIs already in the annotation store");
  annotate->add_option("--max-failure-rate", an.max_failure_rate, "Abort above this failure fraction")
      ->check(CLI::Range(0.0, 1.0));

  EmbedArgs em;
  auto* embed = app.add_subcommand("embed", "Build the embedding index from an annotation store");
  embed->add_option("--store", em.store, "Annotation store (.annotations.jsonl)")->required();
  embed->add_option("--manifest", em.manifest, "Dataset manifest (default: found next to the store)");
  embed->add_option("--out", em.out, "Index path (default: <name>.index next to the store)");
  embed->add_option("--batch", em.batch, "Texts per embedding request")->check(CLI::PositiveNumber);

  SearchArgs se;
  auto* search = app.add_subcommand("search", "Stage-1 constrained embedding search");
  search->add_option("--index", se.index, "Embedding index")->required();
  search->add_option("--query", se.query, "Natural-language requirement")->required();
  search->add_option("--weights", se.weights, "Dimension weights, e.g. domain=1,design=2");
  search->add_option("--top", se.top, "Results to print")->check(CLI::PositiveNumber);

  RerankArgs re;
  auto* rr = app.add_subcommand("rerank", "Stage-1 search followed by model reranking of the top k");
  rr->add_option("--index", re.index, "Embedding index")->required();
  rr->add_option("--query", re.query, "Natural-language requirement")->required();
  rr->add_option("--mode", re.mode, "text or image")->check(CLI::IsMember({"text", "image"}));
  rr->add_option("--k", re.k, "GUIs to rerank")->check(CLI::PositiveNumber);
  rr->add_option("--weights", re.weights, "Dimension weights, e.g. domain=1,design=2");
  rr->add_option("--prices", re.prices, "Price table (JSON)");
  rr->add_option("--width", re.width, "Concurrent requests")->check(CLI::PositiveNumber);
  rr->add_option("--batch", re.batch, "GUIs per dispatch batch")->check(CLI::PositiveNumber);
  rr->add_option("--top", re.top, "Tail entries to include in JSON output");

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "Retrieval metrics against a gold standard");
  eval->add_option("--gold", ev.gold, "Gold standard (JSON or CSV)");
  eval->add_option("--rankings", ev.rankings, "Rankings file(s), one table row each");
  eval->add_option("--binarize", ev.binarize, "Grade threshold for binary relevance");
  eval->add_option("--ndcg-gain", ev.gain, "linear or exp")->check(CLI::IsMember({"linear", "exp"}));
  eval->add_option("--out", ev.out, "Metrics JSON path (default: <rankings>.metrics.json)");

  CostArgs co;
  auto* cost = eval->add_subcommand("cost", "Project rerank cost and time from usage records");
  cost->add_option("--usage", co.usage, "Usage record(s) or rerank JSON output")->required();
  cost->add_option("--prices", co.prices, "Price table (JSON)");
  cost->add_option("--workers", co.workers, "Concurrent workers for time projection")->check(CLI::PositiveNumber);

  ServeArgs sv;
  auto* serve = app.add_subcommand("serve", "HTTP service over the configured datasets");
  serve->add_option("--host", sv.host, "Bind address (overrides config)");
  serve->add_option("--port", sv.port, "Port (overrides config; 0 picks a free port)");

  for (auto* sub : {annotate, embed, search, rr, eval, cost, serve}) sub->fallthrough();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
    if (eval->parsed() && !cost->parsed() && (ev.gold.empty() || ev.rankings.empty())) {
      throw CLI::RequiredError("eval needs --gold and --rankings");
    }
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return kExitOk;
    }
    err << "error: " << e.what() << "\n\n";
    const CLI::App* active = &app;
    for (const CLI::App* sub = &app; sub != nullptr;) {
      auto subs = sub->get_subcommands();
      sub = subs.empty() ? nullptr : subs.front();
      if (sub != nullptr) active = sub;
    }
    err << active->help();
    return kExitUsageError;
  }

  try {
    Context ctx(g, out, err);
    if (annotate->parsed()) return cmd_annotate(ctx, an);
    if (embed->parsed()) return cmd_embed(ctx, em);
    if (search->parsed()) return cmd_search(ctx, se);
    if (rr->parsed()) return cmd_rerank(ctx, re);
    if (cost->parsed()) return cmd_eval_cost(ctx, co);
    if (eval->parsed()) return cmd_eval(ctx, ev);
    if (serve->parsed()) return cmd_serve(ctx, sv);
  } catch (const ProviderUnavailableError& e) {
    err << "error: " << e.what() << "\n" << e.diagnostics();
    return kExitDomainError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitDomainError;
  }
  return kExitUsageError;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace guirerank::cli
