#include "guirerank/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "guirerank/errors.hpp"

namespace guirerank {

using nlohmann::json;

// ---- gold standard ----------------------------------------------------------

GoldStandard gold_from_json(const json& doc) {
  if (!doc.is_object() || !doc.contains("queries") || !doc["queries"].is_array()) {
    throw FormatError("gold standard needs a 'queries' array");
  }
  GoldStandard gold;
  gold.max_grade = doc.value("max_grade", 3);
  std::set<std::string> seen;
  for (std::size_t i = 0; i < doc["queries"].size(); ++i) {
    const json& q = doc["queries"][i];
    if (!q.is_object() || !q.contains("query_id") || !q.contains("candidates") || !q["candidates"].is_array()) {
      throw FormatError("gold query " + std::to_string(i) + " needs query_id and candidates");
    }
    GoldQuery gq;
    gq.query_id = q["query_id"].is_string() ? q["query_id"].get<std::string>() : q["query_id"].dump();
    gq.text = q.value("text", "");
    if (!seen.insert(gq.query_id).second) throw FormatError("duplicate gold query_id '" + gq.query_id + "'");
    std::set<std::string> ids;
    for (const auto& c : q["candidates"]) {
      if (!c.contains("gui_id") || !c.contains("grade") || !c["grade"].is_number_integer()) {
        throw FormatError("gold query '" + gq.query_id + "' has a candidate without gui_id/integer grade");
      }
      GoldCandidate cand{c["gui_id"].is_string() ? c["gui_id"].get<std::string>() : c["gui_id"].dump(),
                         c["grade"].get<int>()};
      if (cand.grade < 0 || cand.grade > gold.max_grade) {
        throw FormatError("gold query '" + gq.query_id + "': grade " + std::to_string(cand.grade) +
                          " outside [0, " + std::to_string(gold.max_grade) + "]");
      }
      if (!ids.insert(cand.gui_id).second) {
        throw FormatError("gold query '" + gq.query_id + "' lists '" + cand.gui_id + "' twice");
      }
      gq.candidates.push_back(std::move(cand));
    }
    gold.queries.push_back(std::move(gq));
  }
  return gold;
}

json gold_to_json(const GoldStandard& gold) {
  json queries = json::array();
  for (const auto& q : gold.queries) {
    json cands = json::array();
    for (const auto& c : q.candidates) cands.push_back({{"gui_id", c.gui_id}, {"grade", c.grade}});
    queries.push_back({{"query_id", q.query_id}, {"text", q.text}, {"candidates", std::move(cands)}});
  }
  return {{"max_grade", gold.max_grade}, {"queries", std::move(queries)}};
}

namespace {

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
      }
      row.clear();
      field.clear();
      any = false;
    } else {
      field += c;
      any = true;
    }
  }
  if (quoted) throw FormatError("gold CSV ends inside a quoted field");
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

GoldStandard gold_from_csv(const std::string& csv) {
  auto rows = parse_csv(csv);
  if (rows.empty()) throw FormatError("gold CSV is empty");
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < rows[0].size(); ++i) col[rows[0][i]] = i;
  for (const char* need : {"query_id", "gui_id", "grade"}) {
    if (!col.count(need)) throw FormatError(std::string("gold CSV header lacks '") + need + "'");
  }
  const bool has_text = col.count("text") > 0;

  json doc = {{"queries", json::array()}};
  std::map<std::string, std::size_t> slot;
  int max_grade = 0;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    auto cell = [&](const std::string& name) -> std::string {
      const std::size_t i = col.at(name);
      if (i >= row.size()) throw FormatError("gold CSV row " + std::to_string(r + 1) + " is short");
      return row[i];
    };
    const std::string qid = cell("query_id");
    int grade = 0;
    try {
      std::size_t used = 0;
      grade = std::stoi(cell("grade"), &used);
      if (used != cell("grade").size()) throw std::invalid_argument("grade");
    } catch (const std::exception&) {
      throw FormatError("gold CSV row " + std::to_string(r + 1) + ": grade is not an integer");
    }
    max_grade = std::max(max_grade, grade);
    auto [it, inserted] = slot.try_emplace(qid, doc["queries"].size());
    if (inserted) doc["queries"].push_back({{"query_id", qid}, {"text", ""}, {"candidates", json::array()}});
    json& q = doc["queries"][it->second];
    if (has_text && q["text"].get<std::string>().empty()) q["text"] = cell("text");
    q["candidates"].push_back({{"gui_id", cell("gui_id")}, {"grade", grade}});
  }
  doc["max_grade"] = std::max(max_grade, 3);
  return gold_from_json(doc);
}

GoldStandard load_gold_standard(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw EvalError("cannot open gold standard '" + path.string() + "'");
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (path.extension() == ".csv") return gold_from_csv(content);
  json doc = json::parse(content, nullptr, false);
  if (doc.is_discarded()) throw FormatError("gold standard '" + path.string() + "' is not valid JSON");
  return gold_from_json(doc);
}

RankingSet rankings_from_json(const json& doc) {
  if (!doc.is_object()) throw FormatError("rankings must be a JSON object of query_id -> [gui_id]");
  RankingSet out;
  for (const auto& [qid, list] : doc.items()) {
    if (!list.is_array()) throw FormatError("ranking for '" + qid + "' is not an array");
    Ranking r;
    for (const auto& id : list) r.push_back(id.is_string() ? id.get<std::string>() : id.dump());
    out[qid] = std::move(r);
  }
  return out;
}

RankingSet load_rankings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw EvalError("cannot open rankings '" + path.string() + "'");
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw FormatError("rankings '" + path.string() + "' are not valid JSON");
  return rankings_from_json(doc);
}

// ---- metrics -------------------------------------------------------------------

double average_precision(const Ranking& ranking, const RelevantSet& relevant) {
  if (relevant.empty()) throw EvalError("average precision is undefined without relevant items");
  double sum = 0.0;
  std::size_t found = 0;
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    if (relevant.count(ranking[i])) {
      ++found;
      sum += static_cast<double>(found) / static_cast<double>(i + 1);
    }
  }
  return sum / static_cast<double>(relevant.size());
}

double reciprocal_rank(const Ranking& ranking, const RelevantSet& relevant) {
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    if (relevant.count(ranking[i])) return 1.0 / static_cast<double>(i + 1);
  }
  return 0.0;
}

double precision_at(const Ranking& ranking, const RelevantSet& relevant, std::size_t k) {
  if (k == 0) throw PreconditionError("precision cutoff must be >= 1");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < std::min(k, ranking.size()); ++i) hit += relevant.count(ranking[i]);
  return static_cast<double>(hit) / static_cast<double>(k);
}

double hits_at(const Ranking& ranking, const RelevantSet& relevant, std::size_t k) {
  if (k == 0) throw PreconditionError("hits cutoff must be >= 1");
  for (std::size_t i = 0; i < std::min(k, ranking.size()); ++i) {
    if (relevant.count(ranking[i])) return 1.0;
  }
  return 0.0;
}

GainKind parse_gain(const std::string& s) {
  if (s == "linear") return GainKind::Linear;
  if (s == "exp") return GainKind::Exponential;
  throw PreconditionError("unknown NDCG gain '" + s + "' (expected linear or exp)");
}

std::string to_string(GainKind g) { return g == GainKind::Linear ? "linear" : "exp"; }

namespace {

double gain_of(int grade, GainKind kind) {
  return kind == GainKind::Linear ? static_cast<double>(grade) : std::exp2(static_cast<double>(grade)) - 1.0;
}

}  // namespace

double ndcg_at(const Ranking& ranking, const std::map<std::string, int>& grades, std::size_t k, GainKind gain) {
  if (k == 0) throw PreconditionError("NDCG cutoff must be >= 1");
  double dcg = 0.0;
  for (std::size_t i = 0; i < std::min(k, ranking.size()); ++i) {
    auto it = grades.find(ranking[i]);
    const int g = it == grades.end() ? 0 : it->second;
    dcg += gain_of(g, gain) / std::log2(static_cast<double>(i + 2));
  }
  std::vector<int> ideal;
  ideal.reserve(grades.size());
  for (const auto& [id, g] : grades) ideal.push_back(g);
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  double idcg = 0.0;
  for (std::size_t i = 0; i < std::min(k, ideal.size()); ++i) {
    idcg += gain_of(ideal[i], gain) / std::log2(static_cast<double>(i + 2));
  }
  return idcg > 0.0 ? dcg / idcg : 0.0;
}

MetricReport evaluate_run(const GoldStandard& gold, const RankingSet& rankings, const EvalOptions& options) {
  if (gold.queries.empty()) throw EvalError("gold standard has no queries");
  MetricReport report;
  report.binarize_threshold = options.binarize_threshold;
  report.gain = options.gain;

  for (const auto& q : gold.queries) {
    auto it = rankings.find(q.query_id);
    if (it == rankings.end()) throw EvalError("no ranking for query '" + q.query_id + "'");
    const Ranking& ranking = it->second;

    std::map<std::string, int> grades;
    RelevantSet relevant;
    for (const auto& c : q.candidates) {
      grades[c.gui_id] = c.grade;
      if (c.grade >= options.binarize_threshold) relevant.insert(c.gui_id);
    }
    std::set<std::string> seen;
    for (const auto& id : ranking) {
      if (!grades.count(id)) throw EvalError("ranking for '" + q.query_id + "' contains foreign gui '" + id + "'");
      if (!seen.insert(id).second) throw EvalError("ranking for '" + q.query_id + "' repeats gui '" + id + "'");
    }
    if (seen.size() != grades.size()) {
      throw EvalError("ranking for '" + q.query_id + "' covers " + std::to_string(seen.size()) + " of " +
                      std::to_string(grades.size()) + " candidates");
    }
    if (relevant.empty()) {
      throw EvalError("query '" + q.query_id + "' has no candidate with grade >= " +
                      std::to_string(options.binarize_threshold));
    }

    QueryMetrics m;
    m.query_id = q.query_id;
    m.ap = average_precision(ranking, relevant);
    m.mrr = reciprocal_rank(ranking, relevant);
    for (std::size_t i = 0; i < 4; ++i) {
      m.precision[i] = precision_at(ranking, relevant, kPrecisionCutoffs[i]);
      m.hits[i] = hits_at(ranking, relevant, kHitsCutoffs[i]);
      m.ndcg[i] = ndcg_at(ranking, grades, kNdcgCutoffs[i], options.gain);
    }
    report.per_query.push_back(std::move(m));
  }

  QueryMetrics& mean = report.mean;
  mean.query_id = "mean";
  const double n = static_cast<double>(report.per_query.size());
  for (const auto& m : report.per_query) {
    mean.ap += m.ap;
    mean.mrr += m.mrr;
    for (std::size_t i = 0; i < 4; ++i) {
      mean.precision[i] += m.precision[i];
      mean.hits[i] += m.hits[i];
      mean.ndcg[i] += m.ndcg[i];
    }
  }
  mean.ap /= n;
  mean.mrr /= n;
  for (std::size_t i = 0; i < 4; ++i) {
    mean.precision[i] /= n;
    mean.hits[i] /= n;
    mean.ndcg[i] /= n;
  }
  return report;
}

namespace {

std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string pad(const std::string& s, std::size_t w) {
  return s.size() >= w ? s : s + std::string(w - s.size(), ' ');
}

}  // namespace

std::string format_metric_table(const std::vector<std::pair<std::string, MetricReport>>& rows) {
  std::size_t label_w = 5;
  for (const auto& [label, _] : rows) label_w = std::max(label_w, label.size());
  std::ostringstream out;
  out << pad("", label_w) << " | AP    | MRR   | P@3   P@5   P@7   P@10  | H@1   H@3   H@5   H@10  | "
                             "N@3   N@5   N@10  N@15\n";
  out << std::string(label_w, '-') << "-+-------+-------+-------------------------+-------------------------+"
                                      "-------------------------\n";
  for (const auto& [label, r] : rows) {
    const auto& m = r.mean;
    out << pad(label, label_w) << " | " << fixed3(m.ap) << " | " << fixed3(m.mrr) << " |";
    for (double v : m.precision) out << ' ' << fixed3(v) << ' ';
    out << '|';
    for (double v : m.hits) out << ' ' << fixed3(v) << ' ';
    out << '|';
    for (std::size_t i = 0; i < m.ndcg.size(); ++i) out << ' ' << fixed3(m.ndcg[i]) << (i + 1 < m.ndcg.size() ? " " : "");
    out << '\n';
  }
  return out.str();
}

namespace {

json metrics_json(const QueryMetrics& m) {
  json j = {{"AP", m.ap}, {"MRR", m.mrr}};
  for (std::size_t i = 0; i < 4; ++i) {
    j["P@" + std::to_string(kPrecisionCutoffs[i])] = m.precision[i];
    j["HITS@" + std::to_string(kHitsCutoffs[i])] = m.hits[i];
    j["NDCG@" + std::to_string(kNdcgCutoffs[i])] = m.ndcg[i];
  }
  return j;
}

}  // namespace

json metric_report_to_json(const MetricReport& report) {
  json per = json::array();
  for (const auto& m : report.per_query) {
    json j = metrics_json(m);
    j["query_id"] = m.query_id;
    per.push_back(std::move(j));
  }
  return {{"binarize_threshold", report.binarize_threshold},
          {"ndcg_gain", to_string(report.gain)},
          {"query_count", report.per_query.size()},
          {"mean", metrics_json(report.mean)},
          {"per_query", std::move(per)}};
}

// ---- cost projection -----------------------------------------------------------

CostProjection project_cost(const std::vector<UsageMeter>& meters, const std::string& model,
                            const PriceTable& prices, std::size_t workers) {
  if (meters.empty()) throw EvalError("cost projection needs at least one usage meter");
  if (workers == 0) throw PreconditionError("workers must be >= 1");
  if (prices.find(model) == nullptr) throw UnknownModelError(model);
  UsageMeter total;
  for (const auto& m : meters) total += m;
  const double n = static_cast<double>(meters.size());

  CostProjection p;
  p.model = model;
  p.input_tokens_per_gui = static_cast<double>(total.input_tokens) / n;
  p.output_tokens_per_gui = static_cast<double>(total.output_tokens) / n;
  p.cost_100 = projected_cost(p, prices, 100);
  p.cost_500 = projected_cost(p, prices, 500);
  const double latency = wall_seconds(total) / n;
  p.time_100_s = latency * 100.0 / static_cast<double>(workers);
  p.time_500_s = latency * 500.0 / static_cast<double>(workers);
  return p;
}

double projected_cost(const CostProjection& p, const PriceTable& prices, std::size_t k) {
  const ModelPrice* price = prices.find(p.model);
  if (price == nullptr) throw UnknownModelError(p.model);
  const double kk = static_cast<double>(k);
  return p.input_tokens_per_gui * kk * price->input_per_1m / 1e6 +
         p.output_tokens_per_gui * kk * price->output_per_1m / 1e6;
}

std::string format_cost_table(const std::vector<std::pair<std::string, CostProjection>>& rows) {
  std::size_t label_w = 5;
  for (const auto& [label, _] : rows) label_w = std::max(label_w, label.size());
  std::ostringstream out;
  char buf[160];
  out << pad("", label_w) << " | #Tokens (k=1)     | Cost (k)            | Time (k)\n";
  out << pad("", label_w) << " | Input    Output   | 100      500        | 100      500\n";
  out << std::string(label_w, '-') << "-+-------------------+---------------------+----------------\n";
  for (const auto& [label, p] : rows) {
    std::snprintf(buf, sizeof buf, " | %-8.2f %-8.2f | $%-7.3f $%-9.3f | %-7.1fs %.1fs\n", p.input_tokens_per_gui,
                  p.output_tokens_per_gui, p.cost_100, p.cost_500, p.time_100_s, p.time_500_s);
    out << pad(label, label_w) << buf;
  }
  return out.str();
}

json cost_projection_to_json(const CostProjection& p) {
  return {{"model", p.model},
          {"input_tokens_per_gui", p.input_tokens_per_gui},
          {"output_tokens_per_gui", p.output_tokens_per_gui},
          {"cost_100", p.cost_100},
          {"cost_500", p.cost_500},
          {"time_100_s", p.time_100_s},
          {"time_500_s", p.time_500_s}};
}

UsageRecord usage_record_from_json(const json& doc) {
  if (!doc.is_object()) throw FormatError("usage file must be a JSON object");
  UsageRecord rec;
  rec.workers = doc.value("workers", kDefaultWorkers);
  rec.label = doc.value("label", std::string{});
  if (doc.contains("meters")) {
    rec.model = doc.value("model", std::string{});
    for (const auto& m : doc["meters"]) rec.meters.push_back(usage_from_json(m));
  } else if (doc.contains("head") && doc.contains("usage")) {
    rec.model = doc["usage"].value("model", std::string{});
    for (const auto& h : doc["head"]) {
      if (h.contains("usage")) rec.meters.push_back(usage_from_json(h["usage"]));
    }
  } else {
    throw FormatError("usage file needs 'meters' or a rerank output with 'head' and 'usage'");
  }
  if (rec.model.empty()) throw FormatError("usage file does not name the model");
  if (rec.label.empty()) rec.label = rec.model;
  return rec;
}

}  // namespace guirerank
