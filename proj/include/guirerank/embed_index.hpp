#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "guirerank/dataset.hpp"
#include "guirerank/model_gateway.hpp"

namespace guirerank {

// Unit-normalized embedding of one annotation (one GUI along one dimension).
struct EmbeddingRecord {
  std::string gui_id;
  std::string dimension_id;
  Vector vector;
  std::string model_id;
};

// Dense per-dimension matrices sharing one row registry of gui ids. Immutable
// once built; safe for concurrent readers.
class EmbeddingIndex {
 public:
  EmbeddingIndex() = default;
  // `matrices[d]` is row-major |gui_ids| x width for dimension_ids[d].
  EmbeddingIndex(std::string dataset, std::string model_id, std::vector<std::string> dimension_ids,
                 std::vector<std::string> gui_ids, std::size_t width,
                 std::vector<std::vector<float>> matrices);

  const std::string& dataset() const noexcept { return dataset_; }
  const std::string& model_id() const noexcept { return model_id_; }
  const std::vector<std::string>& dimension_ids() const noexcept { return dimension_ids_; }
  const std::vector<std::string>& gui_ids() const noexcept { return gui_ids_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t gui_count() const noexcept { return gui_ids_.size(); }

  std::size_t dimension_slot(std::string_view dimension_id) const;  // throws UnknownDimensionError
  std::span<const float> row(std::string_view dimension_id, std::size_t gui_index) const;
  std::span<const float> matrix(std::string_view dimension_id) const;

  EmbeddingRecord record(std::string_view dimension_id, std::size_t gui_index) const;

  friend bool operator==(const EmbeddingIndex&, const EmbeddingIndex&) = default;

 private:
  std::string dataset_;
  std::string model_id_;
  std::vector<std::string> dimension_ids_;
  std::vector<std::string> gui_ids_;
  std::size_t width_ = 0;
  std::vector<std::vector<float>> matrices_;
};

inline constexpr double kUnitNormTolerance = 1e-6;
inline constexpr std::size_t kDefaultEmbedBatch = 64;

struct IndexBuild {
  EmbeddingIndex index;
  UsageMeter usage;
};

// Embeds every (gui, dimension) annotation in the store, batched. GUIs are
// taken in store order; the store must be complete for `dimensions`.
// All-or-nothing: any provider failure aborts.
IndexBuild build_index(const std::string& dataset, const AnnotationStore& store,
                       const DimensionSet& dimensions, const ModelConfig& model, ModelGateway& gateway,
                       std::size_t batch_size = kDefaultEmbedBatch);

// Cosine similarity of `query` (unit vector) against every GUI row of one
// dimension, in registry order. Since both sides are unit vectors this is the
// dot product.
std::vector<std::pair<std::string, double>> similarity(const EmbeddingIndex& index,
                                                       std::string_view dimension_id,
                                                       std::span<const float> query);
// Same scores, without ids.
std::vector<double> similarity_scores(const EmbeddingIndex& index, std::string_view dimension_id,
                                      std::span<const float> query);

// Binary format, little-endian:
//   magic "GRRIDX\0\0" | u32 version | str dataset | str model_id | u32 dims |
//   u32 guis | u32 width | dims x str dimension_id | guis x str gui_id |
//   dims x (guis x width f32) | u64 FNV-1a of everything before it
// where str = u32 byte length + bytes.
inline constexpr std::uint32_t kIndexFormatVersion = 1;

void save_index(const EmbeddingIndex& index, const std::filesystem::path& path);
EmbeddingIndex load_index(const std::filesystem::path& path);

std::vector<std::uint8_t> serialize_index(const EmbeddingIndex& index);
EmbeddingIndex deserialize_index(std::span<const std::uint8_t> bytes);

}  // namespace guirerank
