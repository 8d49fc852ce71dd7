#include "guirerank/schema.hpp"

#include <cmath>
#include <set>

#include "guirerank/errors.hpp"

namespace guirerank {

using nlohmann::json;

Schema Schema::integer(std::int64_t lo, std::int64_t hi, bool lenient) {
  if (lo > hi) throw PreconditionError("integer schema with lo > hi");
  Schema s;
  s.kind_ = Kind::Integer;
  s.lo_ = lo;
  s.hi_ = hi;
  s.lenient_ = lenient;
  return s;
}

Schema Schema::string() {
  Schema s;
  s.kind_ = Kind::String;
  return s;
}

Schema Schema::string_list() {
  Schema s;
  s.kind_ = Kind::StringList;
  return s;
}

Schema Schema::object(std::vector<Field> fields, bool allow_extra_keys) {
  Schema s;
  s.kind_ = Kind::Object;
  s.fields_ = std::move(fields);
  s.allow_extra_ = allow_extra_keys;
  return s;
}

void Schema::validate(const json& value) const { validate_at(value, "$"); }

namespace {

bool integral_number(const json& v) {
  if (v.is_number_integer()) return true;
  if (v.is_number_float()) {
    const double d = v.get<double>();
    return std::isfinite(d) && std::floor(d) == d;
  }
  return false;
}

}  // namespace

void Schema::validate_at(const json& value, const std::string& path) const {
  switch (kind_) {
    case Kind::Integer: {
      if (!integral_number(value)) throw SchemaError(path + ": expected an integer", value.dump());
      if (!lenient_) {
        const double v = value.get<double>();
        if (v < static_cast<double>(lo_) || v > static_cast<double>(hi_)) {
          throw SchemaError(path + ": " + value.dump() + " outside [" + std::to_string(lo_) + ", " +
                                std::to_string(hi_) + "]",
                            value.dump());
        }
      }
      return;
    }
    case Kind::String:
      if (!value.is_string()) throw SchemaError(path + ": expected a string", value.dump());
      return;
    case Kind::StringList:
      if (!value.is_array()) throw SchemaError(path + ": expected a list of strings", value.dump());
      for (std::size_t i = 0; i < value.size(); ++i) {
        if (!value[i].is_string()) {
          throw SchemaError(path + "[" + std::to_string(i) + "]: expected a string", value.dump());
        }
      }
      return;
    case Kind::Object: {
      if (!value.is_object()) throw SchemaError(path + ": expected an object", value.dump());
      std::set<std::string> known;
      for (const auto& f : fields_) {
        known.insert(f.key);
        auto it = value.find(f.key);
        if (it == value.end()) {
          if (f.required) throw SchemaError(path + ": missing key '" + f.key + "'", value.dump());
          continue;
        }
        f.schema->validate_at(*it, path + "." + f.key);
      }
      if (!allow_extra_) {
        for (const auto& [key, _] : value.items()) {
          if (!known.count(key)) throw SchemaError(path + ": unexpected key '" + key + "'", value.dump());
        }
      }
      return;
    }
  }
}

std::string Schema::describe() const {
  switch (kind_) {
    case Kind::Integer:
      return "integer " + std::to_string(lo_) + ".." + std::to_string(hi_);
    case Kind::String:
      return "string";
    case Kind::StringList:
      return "list of strings";
    case Kind::Object: {
      std::string out = "{";
      for (std::size_t i = 0; i < fields_.size(); ++i) {
        if (i) out += ", ";
        out += json(fields_[i].key).dump() + ": " + fields_[i].schema->describe();
        if (!fields_[i].required) out += " (optional)";
      }
      return out + "}";
    }
  }
  return {};
}

json extract_json(const std::string& text) {
  std::string body = text;
  // ```json ... ``` fences
  if (auto fence = body.find("```"); fence != std::string::npos) {
    auto start = body.find('\n', fence);
    auto close = start == std::string::npos ? std::string::npos : body.find("```", start);
    if (close != std::string::npos) body = body.substr(start + 1, close - start - 1);
  }
  json direct = json::parse(body, nullptr, false);
  if (!direct.is_discarded()) return direct;

  const auto open = body.find_first_of("{[");
  if (open != std::string::npos) {
    const char closer = body[open] == '{' ? '}' : ']';
    const auto close = body.find_last_of(closer);
    if (close != std::string::npos && close > open) {
      json inner = json::parse(body.substr(open, close - open + 1), nullptr, false);
      if (!inner.is_discarded()) return inner;
    }
  }
  throw SchemaError("reply contains no parseable JSON", text);
}

}  // namespace guirerank
