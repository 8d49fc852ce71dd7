#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <string>

#include <json.hpp>

namespace guirerank {

// Token/request/latency accounting for model calls. Merging is field-wise
// addition, so meters from concurrent calls can be combined in any order.
struct UsageMeter {
  std::uint64_t input_tokens = 0;
  std::uint64_t output_tokens = 0;
  std::chrono::nanoseconds wall_time{0};
  std::uint64_t request_count = 0;

  UsageMeter& operator+=(const UsageMeter& other) {
    input_tokens += other.input_tokens;
    output_tokens += other.output_tokens;
    wall_time += other.wall_time;
    request_count += other.request_count;
    return *this;
  }

  friend bool operator==(const UsageMeter&, const UsageMeter&) = default;
};

inline UsageMeter merge(UsageMeter a, const UsageMeter& b) {
  a += b;
  return a;
}

inline double wall_seconds(const UsageMeter& m) {
  return std::chrono::duration<double>(m.wall_time).count();
}

struct ModelPrice {
  double input_per_1m = 0.0;   // currency per 1M input tokens
  double output_per_1m = 0.0;  // currency per 1M output tokens
};

class PriceTable {
 public:
  PriceTable() = default;
  explicit PriceTable(std::map<std::string, ModelPrice> prices);

  void set(const std::string& model, ModelPrice price);
  const ModelPrice* find(const std::string& model) const;
  const std::map<std::string, ModelPrice>& entries() const { return prices_; }

 private:
  std::map<std::string, ModelPrice> prices_;
};

// prices.json: {"<model>": {"input_per_1m": x, "output_per_1m": y}, ...}
PriceTable price_table_from_json(const nlohmann::json& doc);
PriceTable load_price_table(const std::string& path);

// Throws UnknownModelError when the model has no entry.
double cost_of(const UsageMeter& meter, const std::string& model, const PriceTable& prices);

nlohmann::json usage_to_json(const UsageMeter& meter);
UsageMeter usage_from_json(const nlohmann::json& doc);

}  // namespace guirerank
