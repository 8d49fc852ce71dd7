#include "guirerank/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "guirerank/errors.hpp"

namespace guirerank {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

json decomposition_to_json(const DecomposedQuery& q) {
  json dims = json::object();
  for (const auto& [id, c] : q.constraints) {
    dims[id] = {{"positives", c.positives}, {"negatives", c.negatives}};
  }
  json out = {{"query", q.query}, {"dimensions", std::move(dims)}};
  if (!q.diagnostics.empty()) out["diagnostics"] = q.diagnostics;
  return out;
}

DecomposedQuery decomposition_from_json(const std::string& query, const json& doc,
                                        const DimensionSet& dimensions) {
  DecomposedQuery out;
  out.query = query;
  if (!doc.is_object()) throw SchemaError("decomposition must be a JSON object", doc.dump());
  for (const auto& [key, value] : doc.items()) {
    if (!dimensions.contains(key)) {
      out.diagnostics.push_back("dropped unknown dimension '" + key + "'");
      continue;
    }
    Constraints c;
    auto collect = [&](const char* field, std::vector<std::string>& dst) {
      if (!value.is_object() || !value.contains(field)) return;
      for (const auto& p : value[field]) {
        if (!p.is_string()) continue;
        std::string phrase = trim(p.get<std::string>());
        if (phrase.empty()) {
          out.diagnostics.push_back("dropped blank phrase in '" + key + "'");
        } else {
          dst.push_back(std::move(phrase));
        }
      }
    };
    collect("positives", c.positives);
    collect("negatives", c.negatives);
    if (!c.empty()) out.constraints[key] = std::move(c);
  }
  return out;
}

WeightProfile make_weights(const DimensionSet& dimensions, const WeightProfile& overrides) {
  WeightProfile w;
  for (const auto& d : dimensions) w[d.id] = d.default_weight;
  for (const auto& [id, value] : overrides) {
    if (!dimensions.contains(id)) throw UnknownDimensionError(id);
    if (!(value >= 0.0)) throw PreconditionError("weight for '" + id + "' must be >= 0");
    w[id] = value;
  }
  return w;
}

WeightProfile parse_weight_spec(const std::string& spec) {
  WeightProfile w;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw PreconditionError("weight '" + item + "' is not id=value");
    const std::string id = trim(item.substr(0, eq));
    const std::string num = trim(item.substr(eq + 1));
    std::size_t used = 0;
    double value = 0.0;
    try {
      value = std::stod(num, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != num.size()) throw PreconditionError("weight '" + item + "' has no numeric value");
    w[id] = value;
  }
  return w;
}

std::string build_decomposition_prompt(const std::string& query, const DimensionSet& dimensions) {
  std::ostringstream out;
  out << "A user searches a repository of graphical user interface (GUI) screenshots with this "
         "natural-language requirement:\n\""
      << query
      << "\"\n\nSplit the requirement into constraints along these search dimensions:\n";
  for (const auto& d : dimensions) out << "- " << d.id << " (" << d.name << "): " << d.description << "\n";
  out << "For each dimension the requirement mentions, list short phrases the GUI should match "
         "(\"positives\") and phrases it must not match (\"negatives\", e.g. things the user "
         "excludes with 'not' or 'without'). Leave out dimensions the requirement does not "
         "mention. Return one JSON object keyed by dimension id, each value "
         "{\"positives\": [...], \"negatives\": [...]}.";
  return out.str();
}

Schema decomposition_schema(const DimensionSet& dimensions) {
  auto list = std::make_shared<const Schema>(Schema::string_list());
  auto per_dim = std::make_shared<const Schema>(Schema::object({{"positives", list, false}, {"negatives", list, false}}));
  std::vector<Schema::Field> fields;
  for (const auto& d : dimensions) fields.push_back({d.id, per_dim, false});
  return Schema::object(std::move(fields), /*allow_extra_keys=*/true);
}

DecomposedQuery decompose_query(const std::string& query, const DimensionSet& dimensions,
                                const ModelConfig& model, ModelGateway& gateway, UsageMeter* usage) {
  if (trim(query).empty()) throw PreconditionError("query must be non-empty");
  Completion c = gateway.complete_text(model, build_decomposition_prompt(query, dimensions),
                                       decomposition_schema(dimensions));
  if (usage) *usage += c.usage;
  return decomposition_from_json(query, c.value, dimensions);
}

namespace {

std::vector<double> max_similarity(const EmbeddingIndex& index, std::string_view dimension_id,
                                   const std::vector<Vector>& phrases) {
  std::vector<double> best(index.gui_count(), 0.0);
  bool first = true;
  for (const auto& p : phrases) {
    auto scores = similarity_scores(index, dimension_id, p);
    for (std::size_t g = 0; g < best.size(); ++g) best[g] = first ? scores[g] : std::max(best[g], scores[g]);
    first = false;
  }
  return best;
}

}  // namespace

std::vector<DimensionScore> score_dimension_vectors(const EmbeddingIndex& index,
                                                    std::string_view dimension_id,
                                                    const std::vector<Vector>& positives,
                                                    const std::vector<Vector>& negatives,
                                                    const ScoringOptions& options) {
  index.dimension_slot(dimension_id);
  if (positives.empty() && negatives.empty()) {
    throw PreconditionError("score_dimension needs at least one positive or negative phrase");
  }
  const auto pos = max_similarity(index, dimension_id, positives);
  const auto neg = max_similarity(index, dimension_id, negatives);
  std::vector<DimensionScore> out(index.gui_count());
  for (std::size_t g = 0; g < out.size(); ++g) {
    out[g].pos_sim = pos[g];
    out[g].neg_sim = neg[g];
    out[g].s = std::clamp(pos[g] - options.negative_emphasis * neg[g], -1.0, 1.0);
  }
  return out;
}

std::vector<DimensionScore> score_dimension(const EmbeddingIndex& index, std::string_view dimension_id,
                                            const std::vector<std::string>& positives,
                                            const std::vector<std::string>& negatives,
                                            const ModelConfig& embed_model, ModelGateway& gateway,
                                            const ScoringOptions& options, UsageMeter* usage) {
  index.dimension_slot(dimension_id);
  if (positives.empty() && negatives.empty()) {
    throw PreconditionError("score_dimension needs at least one positive or negative phrase");
  }
  std::vector<std::string> all = positives;
  all.insert(all.end(), negatives.begin(), negatives.end());
  EmbeddingBatch batch = gateway.embed_text(embed_model, all);
  if (usage) *usage += batch.usage;
  std::vector<Vector> pos(batch.vectors.begin(), batch.vectors.begin() + static_cast<std::ptrdiff_t>(positives.size()));
  std::vector<Vector> neg(batch.vectors.begin() + static_cast<std::ptrdiff_t>(positives.size()), batch.vectors.end());
  return score_dimension_vectors(index, dimension_id, pos, neg, options);
}

std::map<std::string, double> normalized_weights(const WeightProfile& weights,
                                                 const std::vector<std::string>& active) {
  double sum = 0.0;
  for (const auto& id : active) sum += weights.at(id);
  // Snapped to a 2^-32 grid so that c * w normalizes to the same values as w.
  std::map<std::string, double> out;
  for (const auto& id : active) {
    out[id] = std::ldexp(std::nearbyint(std::ldexp(weights.at(id) / sum, 32)), -32);
  }
  return out;
}

StageOneResult rank_stage_one(const std::vector<std::string>& gui_ids,
                              const std::map<std::string, std::vector<DimensionScore>>& dimension_scores,
                              const WeightProfile& weights) {
  StageOneResult result;
  for (const auto& [id, scores] : dimension_scores) {
    auto w = weights.find(id);
    if (w == weights.end() || !(w->second > 0.0)) continue;
    if (scores.size() != gui_ids.size()) throw PreconditionError("dimension '" + id + "' has wrong score count");
    result.active_dimensions.push_back(id);
  }
  if (result.active_dimensions.empty()) throw NoActiveDimensionError();

  const auto norm = normalized_weights(weights, result.active_dimensions);
  double weight_sum = 0.0;
  for (const auto& [id, w] : norm) weight_sum += w;
  if (!(weight_sum > 0.0)) throw NoActiveDimensionError();

  result.entries.resize(gui_ids.size());
  for (std::size_t g = 0; g < gui_ids.size(); ++g) {
    StageOneEntry& e = result.entries[g];
    e.gui_id = gui_ids[g];
    double acc = 0.0;
    for (const auto& id : result.active_dimensions) {
      const DimensionScore& s = dimension_scores.at(id)[g];
      acc += norm.at(id) * s.s;
      e.per_dimension[id] = s;
    }
    e.total = std::clamp(acc / weight_sum, -1.0, 1.0);
  }
  std::sort(result.entries.begin(), result.entries.end(), [](const StageOneEntry& a, const StageOneEntry& b) {
    if (a.total != b.total) return a.total > b.total;
    return a.gui_id < b.gui_id;
  });
  return result;
}

StageOneResult stage_one_rank(const EmbeddingIndex& index, const DecomposedQuery& decomposed,
                              const WeightProfile& weights, const ModelConfig& embed_model,
                              ModelGateway& gateway, const ScoringOptions& options, UsageMeter* usage) {
  if (!index.model_id().empty() && index.model_id() != embed_model.model) {
    throw PreconditionError("index was embedded with '" + index.model_id() + "' but queries would use '" +
                            embed_model.model + "'");
  }
  // Active dimensions only; one embedding request for all phrases.
  std::vector<std::string> active;
  std::vector<std::string> phrases;
  for (const auto& [id, c] : decomposed.constraints) {
    auto w = weights.find(id);
    if (c.empty() || w == weights.end() || !(w->second > 0.0)) continue;
    index.dimension_slot(id);
    active.push_back(id);
    phrases.insert(phrases.end(), c.positives.begin(), c.positives.end());
    phrases.insert(phrases.end(), c.negatives.begin(), c.negatives.end());
  }
  if (active.empty()) throw NoActiveDimensionError();

  EmbeddingBatch batch = gateway.embed_text(embed_model, phrases);
  if (usage) *usage += batch.usage;

  std::map<std::string, std::vector<DimensionScore>> scores;
  std::size_t cursor = 0;
  auto take = [&](std::size_t n) {
    std::vector<Vector> out(batch.vectors.begin() + static_cast<std::ptrdiff_t>(cursor),
                            batch.vectors.begin() + static_cast<std::ptrdiff_t>(cursor + n));
    cursor += n;
    return out;
  };
  for (const auto& id : active) {
    const Constraints& c = decomposed.constraints.at(id);
    auto pos = take(c.positives.size());
    auto neg = take(c.negatives.size());
    scores[id] = score_dimension_vectors(index, id, pos, neg, options);
  }
  return rank_stage_one(index.gui_ids(), scores, weights);
}

json stage_one_to_json(const StageOneResult& result, std::size_t top) {
  json arr = json::array();
  const std::size_t n = std::min(top, result.entries.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& e = result.entries[i];
    json per = json::object();
    for (const auto& [id, s] : e.per_dimension) per[id] = {{"pos", s.pos_sim}, {"neg", s.neg_sim}, {"s", s.s}};
    arr.push_back({{"gui_id", e.gui_id}, {"total", e.total}, {"per_dimension", std::move(per)}});
  }
  return arr;
}

}  // namespace guirerank
