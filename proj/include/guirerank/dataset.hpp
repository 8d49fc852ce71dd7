#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace guirerank {

namespace fs = std::filesystem;

// A named facet of a GUI. `id` is the key used everywhere (annotations,
// embeddings, weights); `name` and `description` only feed prompts and UIs.
struct SearchDimension {
  std::string id;
  std::string name;
  std::string description;
  double default_weight = 1.0;

  friend bool operator==(const SearchDimension&, const SearchDimension&) = default;
};

// Ordered, validated set of search dimensions (non-empty, unique ids,
// non-negative weights).
class DimensionSet {
 public:
  DimensionSet() = default;
  explicit DimensionSet(std::vector<SearchDimension> dimensions);

  const std::vector<SearchDimension>& dimensions() const noexcept { return dims_; }
  std::size_t size() const noexcept { return dims_.size(); }
  bool empty() const noexcept { return dims_.empty(); }

  const SearchDimension* find(std::string_view id) const;
  std::optional<std::size_t> index_of(std::string_view id) const;
  bool contains(std::string_view id) const { return index_of(id).has_value(); }
  std::vector<std::string> ids() const;

  auto begin() const { return dims_.begin(); }
  auto end() const { return dims_.end(); }

  friend bool operator==(const DimensionSet&, const DimensionSet&) = default;

 private:
  std::vector<SearchDimension> dims_;
};

// The five default dimensions, each with weight 1.0.
DimensionSet default_dimension_set();

// Lowercase ASCII letters, digits, '_' and '-', non-empty.
bool is_valid_dimension_id(std::string_view id);

using Annotations = std::map<std::string, std::string>;  // dimension id -> text

struct GuiRecord {
  std::string gui_id;
  std::string image_path;  // relative to the manifest's image_dir
  std::string source;      // dataset name
  Annotations annotations;

  friend bool operator==(const GuiRecord&, const GuiRecord&) = default;
};

struct DatasetManifest {
  std::string name;
  std::string image_dir;  // as written in the file; relative paths resolve against base_dir
  DimensionSet dimensions;
  std::vector<GuiRecord> guis;
  std::optional<std::string> embedding_model;
  fs::path base_dir;  // directory containing the manifest file

  fs::path image_root() const;
  fs::path image_file(const GuiRecord& gui) const;
  const GuiRecord* find(std::string_view gui_id) const;
};

// Parses and validates a manifest document. When `check_files` is set, every
// image path must resolve to an existing regular file under image_root().
DatasetManifest manifest_from_json(const nlohmann::json& doc, const fs::path& base_dir,
                                   bool check_files = true);
nlohmann::json manifest_to_json(const DatasetManifest& manifest);

DatasetManifest load_manifest(const fs::path& path);
void save_manifest(const DatasetManifest& manifest, const fs::path& path);

// Searches `dir` for a manifest JSON whose "name" equals `dataset_name`.
std::optional<fs::path> find_manifest(const fs::path& dir, const std::string& dataset_name);

// gui_id -> per-dimension annotation text. Keeps first-insertion order so that
// serialization is stable.
class AnnotationStore {
 public:
  void set(const std::string& gui_id, Annotations annotations);
  const Annotations* find(std::string_view gui_id) const;
  bool contains(std::string_view gui_id) const { return find(gui_id) != nullptr; }
  std::size_t size() const noexcept { return order_.size(); }
  const std::vector<std::string>& gui_ids() const noexcept { return order_; }

  // True when `gui_id` has exactly one non-empty annotation per dimension.
  bool is_complete(std::string_view gui_id, const DimensionSet& dimensions) const;

  // Throws ManifestError if any annotation key is not a dimension id.
  void validate_keys(const DimensionSet& dimensions) const;

  // Same entries in manifest order; entries not in the manifest are appended
  // in their current order.
  AnnotationStore ordered_like(const DatasetManifest& manifest) const;

  friend bool operator==(const AnnotationStore&, const AnnotationStore&) = default;

 private:
  std::vector<std::string> order_;
  std::map<std::string, Annotations, std::less<>> entries_;
};

// One JSONL line (without trailing newline) for a store entry.
std::string annotation_line(const std::string& gui_id, const Annotations& annotations);

struct StoreLoadOptions {
  // Drop a final line that lacks its newline and fails to parse (left behind
  // by an interrupted writer). Corruption anywhere else is still an error.
  bool tolerate_partial_tail = false;
};

AnnotationStore load_annotation_store(const fs::path& path, StoreLoadOptions options = {});
// Writes atomically (temp file + rename).
void save_annotation_store(const AnnotationStore& store, const fs::path& path);

fs::path default_store_path(const fs::path& manifest_dir, const std::string& dataset_name);
fs::path default_index_path(const fs::path& manifest_dir, const std::string& dataset_name);

std::vector<std::uint8_t> read_file_bytes(const fs::path& path);

}  // namespace guirerank
