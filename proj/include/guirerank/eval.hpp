#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "guirerank/usage.hpp"

namespace guirerank {

// Relevance-labelled candidate pool for one query.
struct GoldCandidate {
  std::string gui_id;
  int grade = 0;
};

struct GoldQuery {
  std::string query_id;
  std::string text;
  std::vector<GoldCandidate> candidates;
};

struct GoldStandard {
  std::vector<GoldQuery> queries;
  int max_grade = 3;
};

GoldStandard gold_from_json(const nlohmann::json& doc);
nlohmann::json gold_to_json(const GoldStandard& gold);
// CSV with header query_id,gui_id,grade,text (text repeated per row; the
// first non-empty value per query wins).
GoldStandard gold_from_csv(const std::string& csv);
// Dispatches on extension: .csv -> CSV importer, anything else -> JSON.
GoldStandard load_gold_standard(const std::filesystem::path& path);

using Ranking = std::vector<std::string>;
using RankingSet = std::map<std::string, Ranking>;  // query_id -> ordered gui ids

// {"<query_id>": ["gui", ...], ...}
RankingSet rankings_from_json(const nlohmann::json& doc);
RankingSet load_rankings(const std::filesystem::path& path);

using RelevantSet = std::set<std::string, std::less<>>;

// Mean of precision@r over the ranks r holding relevant items; relevant
// items never retrieved contribute 0. Throws EvalError on an empty set.
double average_precision(const Ranking& ranking, const RelevantSet& relevant);
// 1 / rank of the first relevant item, 0 if none.
double reciprocal_rank(const Ranking& ranking, const RelevantSet& relevant);
// |relevant in top-k| / k; the denominator stays k for short lists.
double precision_at(const Ranking& ranking, const RelevantSet& relevant, std::size_t k);
// 1 if any of the top-k is relevant.
double hits_at(const Ranking& ranking, const RelevantSet& relevant, std::size_t k);

enum class GainKind { Linear, Exponential };  // g  |  2^g - 1
GainKind parse_gain(const std::string& s);
std::string to_string(GainKind g);

// DCG@k / IDCG@k with discount log2(i + 1); the ideal ordering sorts all
// grades descending. 0 when IDCG is 0.
double ndcg_at(const Ranking& ranking, const std::map<std::string, int>& grades, std::size_t k,
               GainKind gain = GainKind::Linear);

inline constexpr std::array<std::size_t, 4> kPrecisionCutoffs{3, 5, 7, 10};
inline constexpr std::array<std::size_t, 4> kHitsCutoffs{1, 3, 5, 10};
inline constexpr std::array<std::size_t, 4> kNdcgCutoffs{3, 5, 10, 15};
inline constexpr int kDefaultBinarizeThreshold = 2;

struct QueryMetrics {
  std::string query_id;
  double ap = 0.0;
  double mrr = 0.0;
  std::array<double, 4> precision{};
  std::array<double, 4> hits{};
  std::array<double, 4> ndcg{};
};

struct MetricReport {
  std::vector<QueryMetrics> per_query;
  QueryMetrics mean;  // query_id "mean"
  int binarize_threshold = kDefaultBinarizeThreshold;
  GainKind gain = GainKind::Linear;
};

struct EvalOptions {
  int binarize_threshold = kDefaultBinarizeThreshold;  // relevant iff grade >= threshold
  GainKind gain = GainKind::Linear;
};

// Every gold query needs a ranking that is a permutation of its candidate
// pool; missing queries, foreign or duplicate ids, and pools without any
// relevant candidate raise EvalError.
MetricReport evaluate_run(const GoldStandard& gold, const RankingSet& rankings, const EvalOptions& options = {});

// Table with the AP | MRR | P@3..P@10 | H@1..H@10 | N@3..N@15 columns, one
// row per labelled report.
std::string format_metric_table(const std::vector<std::pair<std::string, MetricReport>>& rows);
nlohmann::json metric_report_to_json(const MetricReport& report);

// Per-GUI means and linear projections to k = 100 and k = 500.
struct CostProjection {
  std::string model;
  double input_tokens_per_gui = 0.0;
  double output_tokens_per_gui = 0.0;
  double cost_100 = 0.0;
  double cost_500 = 0.0;
  double time_100_s = 0.0;
  double time_500_s = 0.0;
};

inline constexpr std::size_t kDefaultWorkers = 10;

// `meters` holds one meter per reranked GUI. Time projection assumes `workers`
// concurrent requests: time@k = mean latency per GUI * k / workers.
CostProjection project_cost(const std::vector<UsageMeter>& meters, const std::string& model,
                            const PriceTable& prices, std::size_t workers = kDefaultWorkers);
// Cost/time for an arbitrary k, same model.
double projected_cost(const CostProjection& p, const PriceTable& prices, std::size_t k);

std::string format_cost_table(const std::vector<std::pair<std::string, CostProjection>>& rows);
nlohmann::json cost_projection_to_json(const CostProjection& p);

// Per-GUI meters from either {"model", "meters": [...]} or a rerank JSON
// output ({"usage": {"model"}, "head": [{"usage"}]}).
struct UsageRecord {
  std::string model;
  std::string label;
  std::size_t workers = kDefaultWorkers;
  std::vector<UsageMeter> meters;
};
UsageRecord usage_record_from_json(const nlohmann::json& doc);

}  // namespace guirerank
