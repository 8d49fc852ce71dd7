#include "guirerank/reranker.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "guirerank/errors.hpp"

namespace guirerank {

using nlohmann::json;

std::string to_string(RerankMode mode) { return mode == RerankMode::Text ? "text" : "image"; }

RerankMode parse_rerank_mode(const std::string& s) {
  if (s == "text") return RerankMode::Text;
  if (s == "image") return RerankMode::Image;
  throw PreconditionError("invalid rerank mode '" + s + "' (expected text or image)");
}

std::vector<std::string> weighted_dimensions(const DimensionSet& dimensions, const WeightProfile& weights) {
  std::vector<std::string> out;
  for (const auto& d : dimensions) {
    auto it = weights.find(d.id);
    if (it != weights.end() && it->second > 0.0) out.push_back(d.id);
  }
  return out;
}

PromptParts build_rerank_prompt(const std::string& query, const DimensionSet& dimensions,
                                const WeightProfile& weights, RerankMode mode,
                                const Annotations* annotations, std::span<const std::uint8_t> image) {
  const auto dims = weighted_dimensions(dimensions, weights);
  if (dims.empty()) throw NoActiveDimensionError();
  if (mode == RerankMode::Text && annotations == nullptr) {
    throw PreconditionError("text-mode rerank prompt needs the GUI's annotations");
  }
  if (mode == RerankMode::Image && image.empty()) {
    throw PreconditionError("image-mode rerank prompt needs the GUI image");
  }

  std::ostringstream out;
  out << "You judge how well a graphical user interface (GUI) matches a user's search "
         "requirement.\n\nRequirement: \""
      << query << "\"\n\n";
  if (mode == RerankMode::Text) {
    out << "The GUI is described by these annotations:\n";
    for (const auto& id : dims) {
      auto it = annotations->find(id);
      out << "- " << id << ": " << (it == annotations->end() ? std::string("(none)") : it->second) << "\n";
    }
  } else {
    out << "The GUI is shown in the attached screenshot.\n";
  }
  out << "\nFor each search dimension below, rate how well the GUI matches the requirement on "
         "that dimension with an integer from 0 (no match) to 100 (perfect match):\n";
  for (const auto& id : dims) {
    const SearchDimension* d = dimensions.find(id);
    out << "- " << id << " (" << d->name << "): " << d->description << "\n";
  }
  out << "Return one JSON object keyed by these dimension ids with integer values.";

  PromptParts parts;
  parts.text = out.str();
  if (mode == RerankMode::Image) parts.images.push_back(image);
  return parts;
}

Schema rerank_schema(const std::vector<std::string>& dimension_ids) {
  auto score = std::make_shared<const Schema>(Schema::integer(0, kMaxRerankScore, /*lenient=*/true));
  std::vector<Schema::Field> fields;
  for (const auto& id : dimension_ids) fields.push_back({id, score, true});
  return Schema::object(std::move(fields), /*allow_extra_keys=*/true);
}

ParsedScores parse_scores(const json& raw, const std::vector<std::string>& dimension_ids) {
  if (!raw.is_object()) throw SchemaError("rerank scores must be a JSON object", raw.dump());
  ParsedScores out;
  for (const auto& id : dimension_ids) {
    auto it = raw.find(id);
    if (it == raw.end()) throw SchemaError("missing score for dimension '" + id + "'", raw.dump());
    double value = 0.0;
    if (it->is_number_integer()) {
      value = static_cast<double>(it->get<std::int64_t>());
    } else if (it->is_number_float() && std::isfinite(it->get<double>()) &&
               std::floor(it->get<double>()) == it->get<double>()) {
      value = it->get<double>();
    } else {
      throw SchemaError("score for dimension '" + id + "' is not an integer", raw.dump());
    }
    if (value < 0.0 || value > kMaxRerankScore) {
      out.flags.push_back("clamped:" + id);
      value = std::clamp(value, 0.0, static_cast<double>(kMaxRerankScore));
    }
    out.scores[id] = static_cast<int>(value);
  }
  return out;
}

double aggregate_score(const std::map<std::string, int>& scores, const WeightProfile& weights) {
  double num = 0.0;
  double den = 0.0;
  for (const auto& [id, w] : weights) {
    if (!(w > 0.0)) continue;
    auto it = scores.find(id);
    const double s = it == scores.end() ? 0.0 : it->second / static_cast<double>(kMaxRerankScore);
    num += w * s;
    den += w;
  }
  if (!(den > 0.0)) throw NoActiveDimensionError();
  return num / den;
}

FinalRanking rerank(const StageOneResult& stage1, const RerankRequest& request,
                    const DimensionSet& dimensions, const AnnotationStore* annotations,
                    const ImageLoader& images, ModelGateway& gateway) {
  const auto started = std::chrono::steady_clock::now();
  if (stage1.entries.empty()) throw PreconditionError("stage-1 result is empty");
  if (request.k < 1) throw PreconditionError("k must be >= 1");
  if (request.batch_size < 1) throw PreconditionError("batch size must be >= 1");
  if (request.width < 1) throw PreconditionError("concurrency width must be >= 1");
  const auto dims = weighted_dimensions(dimensions, request.weights);
  if (dims.empty()) throw NoActiveDimensionError();

  const std::size_t head_size = std::min(request.k, stage1.entries.size());
  if (request.mode == RerankMode::Text) {
    if (annotations == nullptr) throw PreconditionError("text-mode rerank needs an annotation store");
    for (std::size_t i = 0; i < head_size; ++i) {
      if (!annotations->contains(stage1.entries[i].gui_id)) {
        throw PreconditionError("no annotations for GUI '" + stage1.entries[i].gui_id + "'");
      }
    }
  } else if (!images) {
    throw PreconditionError("image-mode rerank needs an image source");
  }

  const Schema schema = rerank_schema(dims);
  std::vector<RerankScore> head(head_size);

  auto score_one = [&](std::size_t i) {
    const StageOneEntry& entry = stage1.entries[i];
    RerankScore& out = head[i];
    out.gui_id = entry.gui_id;
    out.stage_one_total = entry.total;
    try {
      Completion c;
      if (request.mode == RerankMode::Text) {
        const Annotations* ann = annotations->find(entry.gui_id);
        PromptParts p = build_rerank_prompt(request.query, dimensions, request.weights, request.mode, ann);
        c = gateway.complete_text(request.model, p.text, schema);
      } else {
        const Bytes image = images(entry.gui_id);
        PromptParts p = build_rerank_prompt(request.query, dimensions, request.weights, request.mode,
                                            nullptr, image);
        c = gateway.complete_with_image(request.model, p.text, p.images.front(), schema);
      }
      out.usage = c.usage;
      ParsedScores parsed = parse_scores(c.value, dims);
      out.scores = std::move(parsed.scores);
      out.flags = std::move(parsed.flags);
    } catch (const Error& e) {
      if (const auto* ge = dynamic_cast<const GatewayError*>(&e)) out.usage = merge(out.usage, ge->usage());
      out.error = e.what();
      out.scores.clear();
      out.flags.clear();
      for (const auto& id : dims) {
        out.scores[id] = 0;
        out.flags.push_back("failed:" + id);
      }
    }
    out.aggregate = aggregate_score(out.scores, request.weights);
  };

  // Batches of consecutive head positions are the unit of dispatch.
  const std::size_t batches = (head_size + request.batch_size - 1) / request.batch_size;
  parallel_for(batches, request.width, [&](std::size_t b) {
    const std::size_t end = std::min(head_size, (b + 1) * request.batch_size);
    for (std::size_t i = b * request.batch_size; i < end; ++i) score_one(i);
  });

  FinalRanking ranking;
  ranking.scored_dimensions = dims;
  std::size_t failures = 0;
  std::string diagnostics;
  for (const auto& h : head) {
    ranking.usage += h.usage;
    if (h.failed()) {
      if (failures < 5) diagnostics += h.gui_id + ": " + h.error + "\n";
      ++failures;
    }
  }
  if (failures == head_size) {
    throw ProviderUnavailableError("reranking failed for all " + std::to_string(head_size) + " candidates",
                                   diagnostics);
  }

  std::sort(head.begin(), head.end(), [](const RerankScore& a, const RerankScore& b) {
    if (a.aggregate != b.aggregate) return a.aggregate > b.aggregate;
    if (a.stage_one_total != b.stage_one_total) return a.stage_one_total > b.stage_one_total;
    return a.gui_id < b.gui_id;
  });
  ranking.head = std::move(head);
  ranking.tail.assign(stage1.entries.begin() + static_cast<std::ptrdiff_t>(head_size), stage1.entries.end());
  ranking.elapsed = std::chrono::steady_clock::now() - started;
  return ranking;
}

json final_ranking_to_json(const FinalRanking& ranking, const std::string& model, const PriceTable* prices,
                           std::size_t tail_limit) {
  json head = json::array();
  for (const auto& h : ranking.head) {
    json item = {{"gui_id", h.gui_id},
                 {"stage", "reranked"},
                 {"scores", h.scores},
                 {"aggregate", h.aggregate},
                 {"stage_one_total", h.stage_one_total},
                 {"flags", h.flags},
                 {"usage", usage_to_json(h.usage)}};
    if (h.failed()) item["error"] = h.error;
    head.push_back(std::move(item));
  }
  json tail = json::array();
  for (std::size_t i = 0; i < std::min(tail_limit, ranking.tail.size()); ++i) {
    tail.push_back({{"gui_id", ranking.tail[i].gui_id}, {"stage", "embedding"}, {"total", ranking.tail[i].total}});
  }
  json usage = usage_to_json(ranking.usage);
  usage["model"] = model;
  if (prices != nullptr && prices->find(model) != nullptr) {
    usage["cost"] = cost_of(ranking.usage, model, *prices);
  } else {
    usage["cost"] = nullptr;
  }
  return {{"head", std::move(head)},
          {"tail", std::move(tail)},
          {"tail_size", ranking.tail.size()},
          {"scored_dimensions", ranking.scored_dimensions},
          {"usage", std::move(usage)}};
}

}  // namespace guirerank
