#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "guirerank/dataset.hpp"
#include "guirerank/errors.hpp"
#include "guirerank/model_gateway.hpp"

namespace guirerank {

struct AnnotationJob {
  DatasetManifest manifest;
  ModelConfig model;
  std::size_t width = 10;
  bool resume = false;
  double max_failure_rate = 0.10;  // abort threshold, fraction of GUIs attempted
  std::filesystem::path store_path;  // empty: in-memory only
};

struct AnnotationFailure {
  std::string gui_id;
  std::string reason;
};

struct AnnotationOutcome {
  AnnotationStore store;
  UsageMeter usage;
  std::vector<AnnotationFailure> failures;
  std::size_t skipped = 0;  // already annotated (resume)
};

// Raised when the failure rate exceeds the job threshold. Completed work is
// already on disk; the partial outcome is attached.
class AnnotationAbortedError : public Error {
 public:
  AnnotationAbortedError(const std::string& what, AnnotationOutcome partial)
      : Error(what), partial_(std::move(partial)) {}
  const AnnotationOutcome& partial() const noexcept { return partial_; }

 private:
  AnnotationOutcome partial_;
};

// Prompt asking for one JSON object keyed by dimension id, one text per
// dimension. Throws PreconditionError on an empty set.
std::string build_annotation_prompt(const DimensionSet& dimensions);

// Schema of the annotation reply: every dimension id, string-valued.
Schema annotation_schema(const DimensionSet& dimensions);

inline constexpr int kAnnotationWordCap = 120;

// Annotates every GUI (one multimodal request per GUI covering all
// dimensions). Each completed GUI is appended to `job.store_path` as soon as
// it finishes; the file is rewritten in manifest order at the end.
AnnotationOutcome annotate_dataset(const AnnotationJob& job, ModelGateway& gateway);

}  // namespace guirerank
