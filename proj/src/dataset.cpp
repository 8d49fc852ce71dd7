#include "guirerank/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "guirerank/errors.hpp"

namespace guirerank {

using nlohmann::json;

bool is_valid_dimension_id(std::string_view id) {
  if (id.empty()) return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
  });
}

DimensionSet::DimensionSet(std::vector<SearchDimension> dimensions) : dims_(std::move(dimensions)) {
  if (dims_.empty()) throw ManifestError("dimension set must contain at least one dimension");
  std::set<std::string, std::less<>> seen;
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    const auto& d = dims_[i];
    if (!is_valid_dimension_id(d.id)) {
      throw ManifestError("invalid dimension id '" + d.id + "' (lowercase, no spaces)", i);
    }
    if (!seen.insert(d.id).second) throw ManifestError("duplicate dimension id '" + d.id + "'", i);
    if (!(d.default_weight >= 0.0)) {
      throw ManifestError("dimension '" + d.id + "' has negative default_weight", i);
    }
  }
}

const SearchDimension* DimensionSet::find(std::string_view id) const {
  auto idx = index_of(id);
  return idx ? &dims_[*idx] : nullptr;
}

std::optional<std::size_t> DimensionSet::index_of(std::string_view id) const {
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (dims_[i].id == id) return i;
  }
  return std::nullopt;
}

std::vector<std::string> DimensionSet::ids() const {
  std::vector<std::string> out;
  out.reserve(dims_.size());
  for (const auto& d : dims_) out.push_back(d.id);
  return out;
}

DimensionSet default_dimension_set() {
  return DimensionSet({
      {"domain", "Domain",
       "The application domain or category the screen belongs to, such as food delivery, banking, "
       "travel, fitness or social media.",
       1.0},
      {"functionality", "Functionality",
       "What the user can do on this screen: its purpose and the tasks it supports, such as "
       "logging in, searching, checking out or editing a profile.",
       1.0},
      {"design", "Design",
       "The visual style of the screen: color scheme, light or dark theme, layout, density, "
       "typography and overall look and feel.",
       1.0},
      {"gui_components", "GUI Components",
       "The interface elements present on the screen, such as buttons, text fields, lists, "
       "cards, tabs, navigation bars, images, maps and dialogs.",
       1.0},
      {"displayed_text", "Displayed Text",
       "The salient text visible on the screen, such as titles, labels, button captions and "
       "messages.",
       1.0},
  });
}

// ---- manifest -------------------------------------------------------------

fs::path DatasetManifest::image_root() const {
  fs::path dir(image_dir);
  return dir.is_absolute() ? dir : base_dir / dir;
}

fs::path DatasetManifest::image_file(const GuiRecord& gui) const {
  return image_root() / gui.image_path;
}

const GuiRecord* DatasetManifest::find(std::string_view gui_id) const {
  for (const auto& g : guis) {
    if (g.gui_id == gui_id) return &g;
  }
  return nullptr;
}

namespace {

std::string require_string(const json& obj, const char* key, const std::string& what,
                           std::size_t record = ManifestError::kNoRecord) {
  if (!obj.is_object() || !obj.contains(key) || !obj[key].is_string()) {
    throw ManifestError(what + " is missing string field '" + key + "'", record);
  }
  return obj[key].get<std::string>();
}

DimensionSet dimensions_from_json(const json& arr) {
  if (!arr.is_array()) throw ManifestError("'dimensions' must be an array");
  std::vector<SearchDimension> dims;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const json& d = arr[i];
    SearchDimension dim;
    dim.id = require_string(d, "id", "dimension", i);
    dim.name = require_string(d, "name", "dimension", i);
    dim.description = require_string(d, "description", "dimension", i);
    if (d.contains("default_weight")) {
      if (!d["default_weight"].is_number()) {
        throw ManifestError("dimension default_weight must be a number", i);
      }
      dim.default_weight = d["default_weight"].get<double>();
    }
    dims.push_back(std::move(dim));
  }
  return DimensionSet(std::move(dims));
}

json dimensions_to_json(const DimensionSet& set) {
  json arr = json::array();
  for (const auto& d : set) {
    arr.push_back({{"id", d.id},
                   {"name", d.name},
                   {"description", d.description},
                   {"default_weight", d.default_weight}});
  }
  return arr;
}

}  // namespace

DatasetManifest manifest_from_json(const json& doc, const fs::path& base_dir, bool check_files) {
  if (!doc.is_object()) throw ManifestError("manifest must be a JSON object");
  DatasetManifest m;
  m.base_dir = base_dir;
  m.name = require_string(doc, "name", "manifest");
  if (m.name.empty()) throw ManifestError("manifest name must be non-empty");
  m.image_dir = require_string(doc, "image_dir", "manifest");
  m.dimensions = doc.contains("dimensions") ? dimensions_from_json(doc["dimensions"])
                                            : default_dimension_set();
  if (doc.contains("embedding_model") && doc["embedding_model"].is_string()) {
    m.embedding_model = doc["embedding_model"].get<std::string>();
  }
  if (!doc.contains("guis") || !doc["guis"].is_array()) {
    throw ManifestError("manifest is missing array field 'guis'");
  }

  std::set<std::string, std::less<>> seen;
  const json& guis = doc["guis"];
  for (std::size_t i = 0; i < guis.size(); ++i) {
    const json& g = guis[i];
    GuiRecord rec;
    rec.gui_id = require_string(g, "gui_id", "gui", i);
    rec.image_path = require_string(g, "image_path", "gui", i);
    if (rec.gui_id.empty()) throw ManifestError("empty gui_id", i);
    if (!seen.insert(rec.gui_id).second) {
      throw ManifestError("duplicate gui_id '" + rec.gui_id + "'", i);
    }
    rec.source = g.contains("source") && g["source"].is_string() ? g["source"].get<std::string>()
                                                                 : m.name;
    m.guis.push_back(std::move(rec));
  }

  if (check_files) {
    for (std::size_t i = 0; i < m.guis.size(); ++i) {
      const fs::path p = m.image_file(m.guis[i]);
      std::error_code ec;
      if (!fs::is_regular_file(p, ec)) {
        throw ManifestError("dangling image path '" + m.guis[i].image_path + "'", i);
      }
      std::ifstream probe(p, std::ios::binary);
      if (!probe) throw ManifestError("unreadable image '" + m.guis[i].image_path + "'", i);
    }
  }
  return m;
}

json manifest_to_json(const DatasetManifest& m) {
  json guis = json::array();
  for (const auto& g : m.guis) {
    json entry = {{"gui_id", g.gui_id}, {"image_path", g.image_path}};
    if (g.source != m.name) entry["source"] = g.source;
    guis.push_back(std::move(entry));
  }
  json doc = {{"name", m.name},
              {"image_dir", m.image_dir},
              {"dimensions", dimensions_to_json(m.dimensions)},
              {"guis", std::move(guis)}};
  if (m.embedding_model) doc["embedding_model"] = *m.embedding_model;
  return doc;
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ManifestError("manifest file not found: " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw ManifestError("manifest '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return manifest_from_json(doc, path.parent_path().empty() ? fs::path(".") : path.parent_path());
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write manifest '" + path.string() + "'");
  out << manifest_to_json(manifest).dump(2) << '\n';
}

std::optional<fs::path> find_manifest(const fs::path& dir, const std::string& dataset_name) {
  std::error_code ec;
  std::vector<fs::path> candidates;
  for (const auto& entry : fs::directory_iterator(dir.empty() ? fs::path(".") : dir, ec)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") {
      candidates.push_back(entry.path());
    }
  }
  std::sort(candidates.begin(), candidates.end());
  for (const auto& p : candidates) {
    std::ifstream in(p);
    json doc = json::parse(in, nullptr, /*allow_exceptions=*/false);
    if (doc.is_object() && doc.contains("guis") && doc.contains("image_dir") &&
        doc.value("name", std::string{}) == dataset_name) {
      return p;
    }
  }
  return std::nullopt;
}

fs::path default_store_path(const fs::path& manifest_dir, const std::string& dataset_name) {
  return manifest_dir / (dataset_name + ".annotations.jsonl");
}

fs::path default_index_path(const fs::path& manifest_dir, const std::string& dataset_name) {
  return manifest_dir / (dataset_name + ".index");
}

std::vector<std::uint8_t> read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read file '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// ---- annotation store -----------------------------------------------------

void AnnotationStore::set(const std::string& gui_id, Annotations annotations) {
  auto [it, inserted] = entries_.try_emplace(gui_id, std::move(annotations));
  if (inserted) {
    order_.push_back(gui_id);
  } else {
    it->second = std::move(annotations);
  }
}

const Annotations* AnnotationStore::find(std::string_view gui_id) const {
  auto it = entries_.find(gui_id);
  return it == entries_.end() ? nullptr : &it->second;
}

bool AnnotationStore::is_complete(std::string_view gui_id, const DimensionSet& dimensions) const {
  const Annotations* a = find(gui_id);
  if (a == nullptr || a->size() != dimensions.size()) return false;
  for (const auto& d : dimensions) {
    auto it = a->find(d.id);
    if (it == a->end() || it->second.empty()) return false;
  }
  return true;
}

void AnnotationStore::validate_keys(const DimensionSet& dimensions) const {
  for (std::size_t i = 0; i < order_.size(); ++i) {
    for (const auto& [key, text] : entries_.at(order_[i])) {
      if (!dimensions.contains(key)) {
        throw ManifestError("annotation for '" + order_[i] + "' uses unknown dimension '" + key + "'",
                            i);
      }
    }
  }
}

AnnotationStore AnnotationStore::ordered_like(const DatasetManifest& manifest) const {
  AnnotationStore out;
  for (const auto& g : manifest.guis) {
    if (const Annotations* a = find(g.gui_id)) out.set(g.gui_id, *a);
  }
  for (const auto& id : order_) {
    if (!out.contains(id)) out.set(id, entries_.at(id));
  }
  return out;
}

std::string annotation_line(const std::string& gui_id, const Annotations& annotations) {
  json obj = {{"gui_id", gui_id}, {"annotations", annotations}};
  return obj.dump();
}

AnnotationStore load_annotation_store(const fs::path& path, StoreLoadOptions options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("annotation store not found: " + path.string());
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  AnnotationStore store;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < content.size()) {
    std::size_t nl = content.find('\n', pos);
    const bool has_newline = nl != std::string::npos;
    std::string line = content.substr(pos, has_newline ? nl - pos : std::string::npos);
    pos = has_newline ? nl + 1 : content.size();
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;

    json obj = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (obj.is_discarded()) {
      if (!has_newline) {
        if (options.tolerate_partial_tail) break;
        throw TruncatedFileError("annotation store '" + path.string() + "' line " +
                                 std::to_string(line_no) + ": truncated record");
      }
      throw FormatError("annotation store '" + path.string() + "' line " + std::to_string(line_no) +
                        ": malformed JSON");
    }
    if (!obj.is_object() || !obj.contains("gui_id") || !obj["gui_id"].is_string() ||
        !obj.contains("annotations") || !obj["annotations"].is_object()) {
      throw FormatError("annotation store '" + path.string() + "' line " + std::to_string(line_no) +
                        ": expected {gui_id, annotations}");
    }
    Annotations ann;
    for (const auto& [key, value] : obj["annotations"].items()) {
      if (!value.is_string()) {
        throw FormatError("annotation store '" + path.string() + "' line " +
                          std::to_string(line_no) + ": annotation '" + key + "' is not a string");
      }
      ann[key] = value.get<std::string>();
    }
    // Later lines win: an appended re-annotation supersedes an earlier one.
    store.set(obj["gui_id"].get<std::string>(), std::move(ann));
  }
  return store;
}

void save_annotation_store(const AnnotationStore& store, const fs::path& path) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write annotation store '" + tmp.string() + "'");
    for (const auto& id : store.gui_ids()) out << annotation_line(id, *store.find(id)) << '\n';
    out.flush();
    if (!out) throw Error("failed writing annotation store '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

}  // namespace guirerank
