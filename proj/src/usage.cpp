#include "guirerank/usage.hpp"

#include <fstream>

#include "guirerank/errors.hpp"

namespace guirerank {

PriceTable::PriceTable(std::map<std::string, ModelPrice> prices) {
  for (auto& [model, price] : prices) set(model, price);
}

void PriceTable::set(const std::string& model, ModelPrice price) {
  if (price.input_per_1m < 0.0 || price.output_per_1m < 0.0) {
    throw PreconditionError("negative price for model '" + model + "'");
  }
  prices_[model] = price;
}

const ModelPrice* PriceTable::find(const std::string& model) const {
  auto it = prices_.find(model);
  return it == prices_.end() ? nullptr : &it->second;
}

PriceTable price_table_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw FormatError("price table must be a JSON object");
  PriceTable table;
  for (const auto& [model, entry] : doc.items()) {
    if (!entry.is_object() || !entry.contains("input_per_1m") || !entry.contains("output_per_1m") ||
        !entry["input_per_1m"].is_number() || !entry["output_per_1m"].is_number()) {
      throw FormatError("price entry for '" + model + "' needs numeric input_per_1m and output_per_1m");
    }
    table.set(model, {entry["input_per_1m"].get<double>(), entry["output_per_1m"].get<double>()});
  }
  return table;
}

PriceTable load_price_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open price table '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("price table '" + path + "': " + e.what());
  }
  return price_table_from_json(doc);
}

double cost_of(const UsageMeter& meter, const std::string& model, const PriceTable& prices) {
  const ModelPrice* price = prices.find(model);
  if (price == nullptr) throw UnknownModelError(model);
  return static_cast<double>(meter.input_tokens) * price->input_per_1m / 1e6 +
         static_cast<double>(meter.output_tokens) * price->output_per_1m / 1e6;
}

nlohmann::json usage_to_json(const UsageMeter& meter) {
  return {{"input_tokens", meter.input_tokens},
          {"output_tokens", meter.output_tokens},
          {"request_count", meter.request_count},
          {"wall_time_s", wall_seconds(meter)}};
}

UsageMeter usage_from_json(const nlohmann::json& doc) {
  UsageMeter m;
  m.input_tokens = doc.value("input_tokens", std::uint64_t{0});
  m.output_tokens = doc.value("output_tokens", std::uint64_t{0});
  m.request_count = doc.value("request_count", std::uint64_t{0});
  m.wall_time = std::chrono::duration_cast<std::chrono::nanoseconds>(
      std::chrono::duration<double>(doc.value("wall_time_s", 0.0)));
  return m;
}

}  // namespace guirerank
