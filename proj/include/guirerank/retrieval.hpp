#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "guirerank/dataset.hpp"
#include "guirerank/embed_index.hpp"
#include "guirerank/model_gateway.hpp"

namespace guirerank {

struct Constraints {
  std::vector<std::string> positives;
  std::vector<std::string> negatives;

  bool empty() const noexcept { return positives.empty() && negatives.empty(); }
  friend bool operator==(const Constraints&, const Constraints&) = default;
};

// Per-dimension positive/negative phrases extracted from a natural-language
// requirement. Dimensions absent from `constraints` are inactive.
struct DecomposedQuery {
  std::string query;
  std::map<std::string, Constraints> constraints;
  std::vector<std::string> diagnostics;  // e.g. dropped unknown dimension ids

  friend bool operator==(const DecomposedQuery&, const DecomposedQuery&) = default;
};

nlohmann::json decomposition_to_json(const DecomposedQuery& q);
// Drops unknown dimension ids and blank phrases, recording a diagnostic.
DecomposedQuery decomposition_from_json(const std::string& query, const nlohmann::json& doc,
                                        const DimensionSet& dimensions);

using WeightProfile = std::map<std::string, double>;

// Default weights of the set, overridden by `overrides`. Throws on unknown
// ids or negative weights.
WeightProfile make_weights(const DimensionSet& dimensions, const WeightProfile& overrides = {});
// Parses "domain=1,design=2".
WeightProfile parse_weight_spec(const std::string& spec);

std::string build_decomposition_prompt(const std::string& query, const DimensionSet& dimensions);
Schema decomposition_schema(const DimensionSet& dimensions);

DecomposedQuery decompose_query(const std::string& query, const DimensionSet& dimensions,
                                const ModelConfig& model, ModelGateway& gateway,
                                UsageMeter* usage = nullptr);

struct DimensionScore {
  double pos_sim = 0.0;
  double neg_sim = 0.0;
  double s = 0.0;

  friend bool operator==(const DimensionScore&, const DimensionScore&) = default;
};

struct ScoringOptions {
  // Multiplier on the negative similarity inside s_d; 1.0 weighs both
  // polarities equally.
  double negative_emphasis = 1.0;
};

// Per-GUI scores for one dimension, in index registry order, given phrase
// embeddings (unit vectors):
//   pos_sim = max cosine over positives (0 without positives)
//   neg_sim = max cosine over negatives (0 without negatives)
//   s       = clamp(pos_sim - negative_emphasis * neg_sim, -1, 1)
std::vector<DimensionScore> score_dimension_vectors(const EmbeddingIndex& index,
                                                    std::string_view dimension_id,
                                                    const std::vector<Vector>& positives,
                                                    const std::vector<Vector>& negatives,
                                                    const ScoringOptions& options = {});

// Embeds the phrases through the gateway, then scores.
std::vector<DimensionScore> score_dimension(const EmbeddingIndex& index, std::string_view dimension_id,
                                            const std::vector<std::string>& positives,
                                            const std::vector<std::string>& negatives,
                                            const ModelConfig& embed_model, ModelGateway& gateway,
                                            const ScoringOptions& options = {},
                                            UsageMeter* usage = nullptr);

struct StageOneEntry {
  std::string gui_id;
  double total = 0.0;
  std::map<std::string, DimensionScore> per_dimension;  // active dimensions only
};

struct StageOneResult {
  std::vector<StageOneEntry> entries;  // descending total, ties by ascending gui_id
  std::vector<std::string> active_dimensions;
};

// Weights of `active` divided by their sum, snapped to multiples of 2^-32.
// Scaling every weight by c > 0 yields the same values.
std::map<std::string, double> normalized_weights(const WeightProfile& weights,
                                                 const std::vector<std::string>& active);

// Normalized weighted sum over active dimensions (non-empty constraints and
// weight > 0):  total = sum_d w_d * s_d / sum_d w_d.
// `dimension_scores` maps dimension id -> per-GUI scores in registry order.
// Throws NoActiveDimensionError when nothing is active.
StageOneResult rank_stage_one(const std::vector<std::string>& gui_ids,
                              const std::map<std::string, std::vector<DimensionScore>>& dimension_scores,
                              const WeightProfile& weights);

// Full stage-1 ranking: embeds the constraint phrases of every active
// dimension and ranks all GUIs in the index. `embed_model` must be the model
// the index was built with.
StageOneResult stage_one_rank(const EmbeddingIndex& index, const DecomposedQuery& decomposed,
                              const WeightProfile& weights, const ModelConfig& embed_model,
                              ModelGateway& gateway, const ScoringOptions& options = {},
                              UsageMeter* usage = nullptr);

nlohmann::json stage_one_to_json(const StageOneResult& result, std::size_t top);

}  // namespace guirerank
