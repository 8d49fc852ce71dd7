#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "guirerank/dataset.hpp"
#include "guirerank/model_gateway.hpp"
#include "guirerank/retrieval.hpp"

namespace guirerank {

enum class RerankMode { Text, Image };

std::string to_string(RerankMode mode);
// Throws PreconditionError for anything but "text" / "image".
RerankMode parse_rerank_mode(const std::string& s);

inline constexpr std::size_t kDefaultRerankK = 100;
inline constexpr int kMaxRerankScore = 100;

struct RerankRequest {
  std::string query;
  RerankMode mode = RerankMode::Text;
  std::size_t k = kDefaultRerankK;
  WeightProfile weights;
  ModelConfig model;
  std::size_t batch_size = 10;
  std::size_t width = 10;
};

struct RerankScore {
  std::string gui_id;
  std::map<std::string, int> scores;  // dimension id -> [0, 100]
  double aggregate = 0.0;             // [0, 1]
  double stage_one_total = 0.0;
  UsageMeter usage;
  std::vector<std::string> flags;  // "clamped:<dim>", "failed:<dim>"
  std::string error;               // set when the model call failed

  bool failed() const noexcept { return !error.empty(); }
};

struct FinalRanking {
  std::vector<RerankScore> head;            // reranked, by aggregate desc
  std::vector<StageOneEntry> tail;          // untouched stage-1 order
  UsageMeter usage;                         // all rerank calls
  std::chrono::nanoseconds elapsed{0};      // measured wall time of the whole run
  std::vector<std::string> scored_dimensions;
};

struct PromptParts {
  std::string text;
  std::vector<std::span<const std::uint8_t>> images;  // empty in text mode
};

// Weighted dimensions (w_d > 0) in dimension-set order.
std::vector<std::string> weighted_dimensions(const DimensionSet& dimensions, const WeightProfile& weights);

// Text mode: `annotations` supplies the payload. Image mode: `image` does.
// Only dimensions with w_d > 0 appear in the prompt.
PromptParts build_rerank_prompt(const std::string& query, const DimensionSet& dimensions,
                                const WeightProfile& weights, RerankMode mode,
                                const Annotations* annotations, std::span<const std::uint8_t> image = {});

Schema rerank_schema(const std::vector<std::string>& dimension_ids);

struct ParsedScores {
  std::map<std::string, int> scores;
  std::vector<std::string> flags;
};

// Requires an integer for every id in `dimension_ids`; values outside
// [0, 100] are clamped and flagged. Throws SchemaError on a missing key or a
// non-integer value.
ParsedScores parse_scores(const nlohmann::json& raw, const std::vector<std::string>& dimension_ids);

// sum_d w_d * score_d / (100 * sum_d w_d) over dimensions with w_d > 0.
double aggregate_score(const std::map<std::string, int>& scores, const WeightProfile& weights);

// Source of a GUI image by id (image mode).
using ImageLoader = std::function<Bytes(const std::string& gui_id)>;

// Scores the top-k of `stage1` concurrently, orders them by aggregate
// (ties: stage-1 total desc, then gui_id asc) and places them above the
// untouched stage-1 tail. A GUI whose call fails keeps score 0 on every
// scored dimension with a "failed:<dim>" flag; if every head GUI fails the
// provider is considered down and ProviderUnavailableError is thrown.
FinalRanking rerank(const StageOneResult& stage1, const RerankRequest& request,
                    const DimensionSet& dimensions, const AnnotationStore* annotations,
                    const ImageLoader& images, ModelGateway& gateway);

nlohmann::json final_ranking_to_json(const FinalRanking& ranking, const std::string& model,
                                     const PriceTable* prices, std::size_t tail_limit);

}  // namespace guirerank
