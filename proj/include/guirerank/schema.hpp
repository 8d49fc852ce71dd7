#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

namespace guirerank {

// Shape of the structured value a model is asked to return. Used three ways:
// rendered into prompts, validated against replies, and synthesized by the
// offline stub provider.
class Schema {
 public:
  enum class Kind { Integer, String, StringList, Object };

  struct Field {
    std::string key;
    std::shared_ptr<const Schema> schema;
    bool required = true;
  };

  // `lenient` integers accept any integral value; range handling (clamping)
  // is then the caller's job. Strict integers must lie in [lo, hi].
  static Schema integer(std::int64_t lo, std::int64_t hi, bool lenient = false);
  static Schema string();
  static Schema string_list();
  static Schema object(std::vector<Field> fields, bool allow_extra_keys = false);

  Kind kind() const noexcept { return kind_; }
  std::int64_t lo() const noexcept { return lo_; }
  std::int64_t hi() const noexcept { return hi_; }
  bool lenient() const noexcept { return lenient_; }
  bool allow_extra_keys() const noexcept { return allow_extra_; }
  const std::vector<Field>& fields() const noexcept { return fields_; }

  // Throws SchemaError naming the offending path.
  void validate(const nlohmann::json& value) const;

  // Compact human/model-readable rendering, e.g.
  // {"design": integer 0..100, "domain": integer 0..100}
  std::string describe() const;

 private:
  void validate_at(const nlohmann::json& value, const std::string& path) const;

  Kind kind_ = Kind::String;
  std::int64_t lo_ = 0;
  std::int64_t hi_ = 0;
  bool lenient_ = false;
  bool allow_extra_ = false;
  std::vector<Field> fields_;
};

// Extracts a JSON value from free-form model output: strips code fences and
// surrounding prose. Throws SchemaError when nothing parseable is found.
nlohmann::json extract_json(const std::string& text);

}  // namespace guirerank
