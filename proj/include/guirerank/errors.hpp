#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

#include "guirerank/usage.hpp"

namespace guirerank {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller violated an operation precondition (empty prompt, empty image, ...).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// Manifest or annotation-store content failed validation. `record_index` is
// the zero-based record (or line) the problem was found at, when known.
class ManifestError : public Error {
 public:
  static constexpr std::size_t kNoRecord = static_cast<std::size_t>(-1);

  ManifestError(const std::string& what, std::size_t record_index = kNoRecord)
      : Error(record_index == kNoRecord
                  ? what
                  : "record " + std::to_string(record_index) + ": " + what),
        record_index_(record_index) {}

  std::size_t record_index() const noexcept { return record_index_; }

 private:
  std::size_t record_index_;
};

// Binary or line-delimited file is not in the expected format.
class FormatError : public Error {
 public:
  using Error::Error;
};

class TruncatedFileError : public FormatError {
 public:
  using FormatError::FormatError;
};

class UnknownDimensionError : public Error {
 public:
  explicit UnknownDimensionError(const std::string& id)
      : Error("unknown search dimension '" + id + "'"), id_(id) {}
  const std::string& id() const noexcept { return id_; }

 private:
  std::string id_;
};

class NoActiveDimensionError : public Error {
 public:
  NoActiveDimensionError()
      : Error("no active search dimension: every dimension is unconstrained or has weight 0") {}
};

class UnknownModelError : public Error {
 public:
  explicit UnknownModelError(const std::string& model)
      : Error("no price entry for model '" + model + "'"), model_(model) {}
  const std::string& model() const noexcept { return model_; }

 private:
  std::string model_;
};

// Errors raised by the model gateway carry the raw provider reply (if any) and
// the usage consumed by all attempts made before giving up.
class GatewayError : public Error {
 public:
  GatewayError(const std::string& what, std::string raw = {}, UsageMeter usage = {})
      : Error(what), raw_(std::move(raw)), usage_(usage) {}

  const std::string& raw_response() const noexcept { return raw_; }
  const UsageMeter& usage() const noexcept { return usage_; }
  void set_usage(const UsageMeter& usage) { usage_ = usage; }

 private:
  std::string raw_;
  UsageMeter usage_;
};

// Network failure, timeout, HTTP 429/5xx. Retryable.
class TransportError : public GatewayError {
 public:
  using GatewayError::GatewayError;
};

// Reply could not be parsed into the requested schema. Retryable.
class SchemaError : public GatewayError {
 public:
  using GatewayError::GatewayError;
};

// Provider rejected the request outright (auth, bad request). Not retried.
class ProviderRequestError : public GatewayError {
 public:
  using GatewayError::GatewayError;
};

// Provider/model cannot do what was asked (e.g. images, embeddings).
class CapabilityError : public GatewayError {
 public:
  using GatewayError::GatewayError;
};

// Every reranked candidate failed: the provider is treated as down.
class ProviderUnavailableError : public Error {
 public:
  ProviderUnavailableError(const std::string& what, std::string diagnostics)
      : Error(what), diagnostics_(std::move(diagnostics)) {}
  const std::string& diagnostics() const noexcept { return diagnostics_; }

 private:
  std::string diagnostics_;
};

class EvalError : public Error {
 public:
  using Error::Error;
};

}  // namespace guirerank
