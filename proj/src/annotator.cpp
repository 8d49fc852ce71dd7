#include "guirerank/annotator.hpp"

#include <atomic>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>

#include "guirerank/errors.hpp"

namespace guirerank {

std::string build_annotation_prompt(const DimensionSet& dimensions) {
  if (dimensions.empty()) throw PreconditionError("annotation prompt needs at least one search dimension");
  std::ostringstream out;
  out << "You are annotating a screenshot of a graphical user interface (GUI) so that it can be "
         "found later by natural-language search.\n"
         "Describe the GUI along each of the following search dimensions:\n";
  for (const auto& d : dimensions) {
    out << "- " << d.id << " (" << d.name << "): " << d.description << "\n";
  }
  out << "Write at most " << kAnnotationWordCap
      << " words per dimension. Be concrete and factual; describe only what is visible.\n"
         "Return one JSON object whose keys are exactly the dimension ids (";
  bool first = true;
  for (const auto& d : dimensions) {
    out << (first ? "" : ", ") << '"' << d.id << '"';
    first = false;
  }
  out << ") and whose values are the annotation strings.";
  return out.str();
}

Schema annotation_schema(const DimensionSet& dimensions) {
  auto text = std::make_shared<const Schema>(Schema::string());
  std::vector<Schema::Field> fields;
  for (const auto& d : dimensions) fields.push_back({d.id, text, true});
  return Schema::object(std::move(fields), /*allow_extra_keys=*/true);
}

namespace {

// Serializes appends to the JSONL store.
class StoreAppender {
 public:
  explicit StoreAppender(const std::filesystem::path& path, bool truncate) {
    if (path.empty()) return;
    out_.emplace(path, std::ios::binary | (truncate ? std::ios::trunc : std::ios::app));
    if (!*out_) throw Error("cannot open annotation store '" + path.string() + "' for writing");
  }

  void append(const std::string& gui_id, const Annotations& annotations) {
    if (!out_) return;
    std::lock_guard lock(mu_);
    *out_ << annotation_line(gui_id, annotations) << '\n';
    out_->flush();
  }

  void close() {
    if (out_) out_->close();
  }

 private:
  std::mutex mu_;
  std::optional<std::ofstream> out_;
};

}  // namespace

AnnotationOutcome annotate_dataset(const AnnotationJob& job, ModelGateway& gateway) {
  if (job.width < 1) throw PreconditionError("annotation width must be >= 1");
  const DimensionSet& dims = job.manifest.dimensions;
  const std::string prompt = build_annotation_prompt(dims);
  const Schema schema = annotation_schema(dims);

  AnnotationStore existing;
  const bool have_file = !job.store_path.empty() && std::filesystem::exists(job.store_path);
  if (job.resume && have_file) {
    existing = load_annotation_store(job.store_path, {.tolerate_partial_tail = true});
    existing.validate_keys(dims);
  }

  std::vector<const GuiRecord*> todo;
  AnnotationOutcome outcome;
  for (const auto& g : job.manifest.guis) {
    if (job.resume && existing.is_complete(g.gui_id, dims)) {
      ++outcome.skipped;
    } else {
      todo.push_back(&g);
    }
  }

  // A resumed file may end in a partial line; rewrite it cleanly before appending.
  if (job.resume && have_file) save_annotation_store(existing, job.store_path);
  StoreAppender appender(job.store_path, /*truncate=*/!job.resume);

  std::vector<std::optional<Annotations>> results(todo.size());
  std::vector<std::string> errors(todo.size());
  std::vector<UsageMeter> meters(todo.size());
  std::vector<char> attempted(todo.size(), 0);
  // Once this many GUIs have failed the threshold is exceeded whatever happens
  // to the rest, so stop dispatching.
  const double failure_budget = job.max_failure_rate * static_cast<double>(todo.size());
  std::atomic<std::size_t> failed{0};
  struct StopSignal {};

  auto run = [&] { parallel_for(todo.size(), job.width, [&](std::size_t i) {
    const GuiRecord& gui = *todo[i];
    attempted[i] = 1;
    try {
      const fs::path image_path = job.manifest.image_file(gui);
      const Bytes image = read_file_bytes(image_path);
      Completion c = gateway.complete_with_image(job.model, prompt, image, schema,
                                                 image_mime_for(image_path.string()));
      meters[i] = c.usage;
      Annotations ann;
      for (const auto& d : dims) {
        std::string text = c.value.at(d.id).get<std::string>();
        if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
          throw SchemaError("empty annotation for dimension '" + d.id + "'", c.raw);
        }
        ann[d.id] = std::move(text);
      }
      appender.append(gui.gui_id, ann);
      results[i] = std::move(ann);
    } catch (const GatewayError& e) {
      meters[i] = merge(meters[i], e.usage());
      errors[i] = e.what();
    } catch (const Error& e) {
      errors[i] = e.what();
    }
    if (!results[i] && static_cast<double>(++failed) > failure_budget) throw StopSignal{};
  }); };
  try {
    run();
  } catch (const StopSignal&) {
  }
  appender.close();

  // Assemble in manifest order so the result is independent of completion order.
  AnnotationStore combined = existing;
  for (std::size_t i = 0; i < todo.size(); ++i) {
    outcome.usage += meters[i];
    if (results[i]) {
      combined.set(todo[i]->gui_id, *results[i]);
    } else if (attempted[i]) {
      outcome.failures.push_back({todo[i]->gui_id, errors[i]});
    }
  }
  outcome.store = combined.ordered_like(job.manifest);
  if (!job.store_path.empty()) save_annotation_store(outcome.store, job.store_path);

  if (!todo.empty()) {
    const double rate = static_cast<double>(outcome.failures.size()) / static_cast<double>(todo.size());
    if (rate > job.max_failure_rate) {
      std::ostringstream msg;
      msg << "annotation aborted: " << outcome.failures.size() << " of " << todo.size()
          << " GUIs failed (threshold " << job.max_failure_rate * 100.0 << "%)";
      throw AnnotationAbortedError(msg.str(), std::move(outcome));
    }
  }
  return outcome;
}

}  // namespace guirerank
