#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "guirerank/errors.hpp"
#include "guirerank/eval.hpp"
#include "naive_metrics.hpp"

using namespace guirerank;
namespace t = guirerank::testing;

namespace {

RelevantSet rel(std::initializer_list<const char*> ids) {
  RelevantSet s;
  for (auto id : ids) s.insert(id);
  return s;
}

}  // namespace

TEST(Metrics, AveragePrecisionWorkedExample) {
  // relevant at ranks 1 and 3: (1/1 + 2/3) / 2
  EXPECT_NEAR(average_precision({"a", "b", "c"}, rel({"a", "c"})), 0.8333333333333334, 1e-15);
  EXPECT_DOUBLE_EQ(average_precision({"a", "b"}, rel({"a", "z"})), 0.5);
  EXPECT_THROW(average_precision({"a"}, {}), EvalError);
}

TEST(Metrics, ReciprocalRankPrecisionHits) {
  EXPECT_DOUBLE_EQ(reciprocal_rank({"x", "y", "a"}, rel({"a"})), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(reciprocal_rank({"x", "y"}, rel({"a"})), 0.0);
  EXPECT_DOUBLE_EQ(precision_at({"a", "x", "b"}, rel({"a", "b"}), 3), 2.0 / 3.0);
  // short list keeps denominator k
  EXPECT_DOUBLE_EQ(precision_at({"a"}, rel({"a"}), 5), 0.2);
  EXPECT_DOUBLE_EQ(hits_at({"x", "a"}, rel({"a"}), 1), 0.0);
  EXPECT_DOUBLE_EQ(hits_at({"x", "a"}, rel({"a"}), 3), 1.0);
}

TEST(Metrics, NdcgWorkedExample) {
  // grades [0, 3] at k = 2: DCG = 3 / log2(3), IDCG = 3
  const std::map<std::string, int> g = {{"a", 0}, {"b", 3}};
  EXPECT_NEAR(ndcg_at({"a", "b"}, g, 2), 1.0 / std::log2(3.0), 1e-15);
  EXPECT_NEAR(ndcg_at({"a", "b"}, g, 2, GainKind::Exponential), 1.0 / std::log2(3.0), 1e-15);
  EXPECT_DOUBLE_EQ(ndcg_at({"a", "b"}, {{"a", 0}, {"b", 0}}, 2), 0.0);
  // gains differ once grades differ
  const std::map<std::string, int> g2 = {{"a", 1}, {"b", 3}};
  EXPECT_NE(ndcg_at({"a", "b"}, g2, 2, GainKind::Linear), ndcg_at({"a", "b"}, g2, 2, GainKind::Exponential));
}

TEST(Metrics, MatchesNaiveReferenceOnRandomInstances) {
  std::mt19937 rng(2024);
  std::uniform_int_distribution<int> grade(0, 3);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::string> ids;
    std::map<std::string, int> grades;
    for (int i = 0; i < 20; ++i) {
      ids.push_back("g" + std::to_string(i));
      grades[ids.back()] = grade(rng);
    }
    if (std::none_of(ids.begin(), ids.end(), [&](const auto& id) { return grades[id] >= 2; })) grades[ids[0]] = 2;
    std::shuffle(ids.begin(), ids.end(), rng);
    RelevantSet relevant;
    for (const auto& [id, g] : grades) if (g >= 2) relevant.insert(id);
    const t::NaiveCase c{ids, grades, 2};
    EXPECT_NEAR(average_precision(ids, relevant), t::naive_ap(c), 1e-12);
    EXPECT_NEAR(reciprocal_rank(ids, relevant), t::naive_rr(c), 1e-12);
    for (std::size_t k : kPrecisionCutoffs) EXPECT_NEAR(precision_at(ids, relevant, k), t::naive_precision(c, k), 1e-12);
    for (std::size_t k : kHitsCutoffs) EXPECT_NEAR(hits_at(ids, relevant, k), t::naive_hits(c, k), 1e-12);
    for (std::size_t k : kNdcgCutoffs) {
      EXPECT_NEAR(ndcg_at(ids, grades, k), t::naive_ndcg(c, k, false), 1e-12);
      EXPECT_NEAR(ndcg_at(ids, grades, k, GainKind::Exponential), t::naive_ndcg(c, k, true), 1e-12);
    }
  }
}

TEST(EvaluateRun, PerfectRankingIsExactlyOne) {
  const GoldStandard gold = t::synthetic_gold(100, 20, 11);
  const MetricReport r = evaluate_run(gold, t::oracle_rankings(gold));
  EXPECT_EQ(r.mean.ap, 1.0);
  EXPECT_EQ(r.mean.mrr, 1.0);
  for (double v : r.mean.ndcg) EXPECT_EQ(v, 1.0);
  for (double v : r.mean.hits) EXPECT_EQ(v, 1.0);
}

TEST(EvaluateRun, ReversedRankingIsLower) {
  const GoldStandard gold = t::synthetic_gold(100, 20, 11);
  const MetricReport best = evaluate_run(gold, t::oracle_rankings(gold));
  const MetricReport worst = evaluate_run(gold, t::reversed_rankings(gold));
  EXPECT_LT(worst.mean.ap, best.mean.ap);
  EXPECT_LT(worst.mean.mrr, best.mean.mrr);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_LT(worst.mean.precision[i], best.mean.precision[i]);
    EXPECT_LT(worst.mean.ndcg[i], best.mean.ndcg[i]);
  }
}

TEST(EvaluateRun, RejectsMalformedRankings) {
  GoldStandard gold;
  gold.queries.push_back({"q1", "text", {{"a", 3}, {"b", 0}}});
  EXPECT_THROW(evaluate_run(gold, {}), EvalError);
  EXPECT_THROW(evaluate_run(gold, {{"q1", {"a"}}}), EvalError);
  EXPECT_THROW(evaluate_run(gold, {{"q1", {"a", "a"}}}), EvalError);
  EXPECT_THROW(evaluate_run(gold, {{"q1", {"a", "zzz"}}}), EvalError);
  GoldStandard none;
  none.queries.push_back({"q1", "text", {{"a", 1}, {"b", 0}}});
  EXPECT_THROW(evaluate_run(none, {{"q1", {"a", "b"}}}), EvalError);
  EXPECT_NO_THROW(evaluate_run(gold, {{"q1", {"b", "a"}}}));
}

TEST(EvaluateRun, BinarizeThresholdChangesRelevance) {
  GoldStandard gold;
  gold.queries.push_back({"q1", "", {{"a", 1}, {"b", 3}}});
  const RankingSet r = {{"q1", {"a", "b"}}};
  EXPECT_DOUBLE_EQ(evaluate_run(gold, r, {2, GainKind::Linear}).mean.ap, 0.5);
  EXPECT_DOUBLE_EQ(evaluate_run(gold, r, {1, GainKind::Linear}).mean.ap, 1.0);
}

TEST(GoldStandard, CsvAndJsonAgree) {
  const std::string csv =
      "query_id,gui_id,grade,text\n"
      "q1,a,3,\"modern, light login\"\n"
      "q1,b,0,\n"
      "q2,c,2,settings\n";
  const GoldStandard g = gold_from_csv(csv);
  ASSERT_EQ(g.queries.size(), 2u);
  EXPECT_EQ(g.queries[0].text, "modern, light login");
  EXPECT_EQ(g.queries[0].candidates.size(), 2u);
  const GoldStandard back = gold_from_json(gold_to_json(g));
  ASSERT_EQ(back.queries.size(), 2u);
  EXPECT_EQ(back.queries[1].candidates[0].gui_id, "c");
  EXPECT_EQ(back.queries[1].candidates[0].grade, 2);
  EXPECT_THROW(gold_from_csv("query_id,gui_id,grade\nq1,a,-1\n"), FormatError);
}

TEST(MetricTable, HasTableOneColumns) {
  const GoldStandard gold = t::synthetic_gold(5, 20, 3);
  const std::string table = format_metric_table({{"oracle", evaluate_run(gold, t::oracle_rankings(gold))}});
  for (const char* col : {"AP", "MRR", "P@3", "P@5", "P@7", "P@10", "H@1", "H@3", "H@5", "H@10", "N@3", "N@5",
                          "N@10", "N@15"}) {
    EXPECT_NE(table.find(col), std::string::npos) << col;
  }
  EXPECT_NE(table.find("oracle | 1.000 | 1.000"), std::string::npos) << table;
  const auto j = metric_report_to_json(evaluate_run(gold, t::oracle_rankings(gold)));
  EXPECT_EQ(j["mean"]["AP"], 1.0);
  EXPECT_TRUE(j["mean"].contains("NDCG@15"));
}

TEST(CostProjection, ReproducesTableTwoTextRow) {
  const PriceTable prices({{"gpt-4.1", {2.00, 8.00}}});
  // 100 GUIs averaging 179.77 input and 6 output tokens
  std::vector<UsageMeter> meters(100);
  for (std::size_t i = 0; i < meters.size(); ++i) {
    meters[i].input_tokens = i < 77 ? 180 : 179;
    meters[i].output_tokens = 6;
    meters[i].request_count = 1;
    meters[i].wall_time = std::chrono::milliseconds(1200);
  }
  const CostProjection p = project_cost(meters, "gpt-4.1", prices);
  EXPECT_NEAR(p.input_tokens_per_gui, 179.77, 1e-9);
  EXPECT_NEAR(p.output_tokens_per_gui, 6.0, 1e-12);
  EXPECT_NEAR(p.cost_100, 0.041, 0.0005);
  EXPECT_NEAR(p.cost_500, 0.204, 0.0005);
  EXPECT_NEAR(p.time_100_s, 12.0, 1e-9);
  EXPECT_NEAR(p.time_500_s, 60.0, 1e-9);
  EXPECT_NEAR(projected_cost(p, prices, 100), p.cost_100, 1e-15);
}

TEST(CostProjection, ReproducesTableTwoImageRow) {
  const PriceTable prices({{"gpt-4.1", {2.00, 8.00}}});
  std::vector<UsageMeter> meters(100);
  for (std::size_t i = 0; i < meters.size(); ++i) {
    meters[i].input_tokens = i < 98 ? 1089 : 1090;
    meters[i].output_tokens = 6;
  }
  const CostProjection p = project_cost(meters, "gpt-4.1", prices);
  EXPECT_NEAR(p.input_tokens_per_gui, 1089.02, 1e-9);
  EXPECT_NEAR(p.cost_100, 0.223, 0.0005);
  EXPECT_NEAR(p.cost_500, 1.113, 0.0005);
}

TEST(CostProjection, ErrorsAndRecords) {
  EXPECT_THROW(project_cost({}, "gpt-4.1", PriceTable({{"gpt-4.1", {2, 8}}})), EvalError);
  EXPECT_THROW(project_cost({UsageMeter{}}, "unknown", PriceTable({{"gpt-4.1", {2, 8}}})), UnknownModelError);
  const nlohmann::json rerank_output = {
      {"usage", {{"model", "gpt-4.1-mini"}}},
      {"head", {{{"usage", {{"input_tokens", 100}, {"output_tokens", 6}, {"request_count", 1}, {"wall_time_s", 0.5}}}}}}};
  const UsageRecord rec = usage_record_from_json(rerank_output);
  EXPECT_EQ(rec.model, "gpt-4.1-mini");
  ASSERT_EQ(rec.meters.size(), 1u);
  EXPECT_EQ(rec.meters[0].input_tokens, 100u);
}
