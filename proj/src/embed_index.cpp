#include "guirerank/embed_index.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "guirerank/errors.hpp"
#include "guirerank/stub_provider.hpp"

namespace guirerank {

static_assert(std::endian::native == std::endian::little, "index I/O assumes a little-endian host");

EmbeddingIndex::EmbeddingIndex(std::string dataset, std::string model_id,
                               std::vector<std::string> dimension_ids, std::vector<std::string> gui_ids,
                               std::size_t width, std::vector<std::vector<float>> matrices)
    : dataset_(std::move(dataset)),
      model_id_(std::move(model_id)),
      dimension_ids_(std::move(dimension_ids)),
      gui_ids_(std::move(gui_ids)),
      width_(width),
      matrices_(std::move(matrices)) {
  if (matrices_.size() != dimension_ids_.size()) {
    throw FormatError("index needs one matrix per dimension");
  }
  for (const auto& m : matrices_) {
    if (m.size() != gui_ids_.size() * width_) throw FormatError("index matrix has wrong shape");
  }
}

std::size_t EmbeddingIndex::dimension_slot(std::string_view dimension_id) const {
  for (std::size_t i = 0; i < dimension_ids_.size(); ++i) {
    if (dimension_ids_[i] == dimension_id) return i;
  }
  throw UnknownDimensionError(std::string(dimension_id));
}

std::span<const float> EmbeddingIndex::matrix(std::string_view dimension_id) const {
  return matrices_[dimension_slot(dimension_id)];
}

std::span<const float> EmbeddingIndex::row(std::string_view dimension_id, std::size_t gui_index) const {
  return matrix(dimension_id).subspan(gui_index * width_, width_);
}

EmbeddingRecord EmbeddingIndex::record(std::string_view dimension_id, std::size_t gui_index) const {
  auto r = row(dimension_id, gui_index);
  return {gui_ids_.at(gui_index), std::string(dimension_id), Vector(r.begin(), r.end()), model_id_};
}

IndexBuild build_index(const std::string& dataset, const AnnotationStore& store,
                       const DimensionSet& dimensions, const ModelConfig& model, ModelGateway& gateway,
                       std::size_t batch_size) {
  if (batch_size == 0) throw PreconditionError("embedding batch size must be >= 1");
  if (store.size() == 0) throw PreconditionError("annotation store is empty");
  for (const auto& id : store.gui_ids()) {
    if (!store.is_complete(id, dimensions)) {
      throw PreconditionError("annotation store is incomplete for GUI '" + id + "'");
    }
  }

  // Flatten (dimension, gui) pairs in dimension-major order.
  std::vector<std::string> texts;
  texts.reserve(store.size() * dimensions.size());
  for (const auto& d : dimensions) {
    for (const auto& id : store.gui_ids()) texts.push_back(store.find(id)->at(d.id));
  }

  IndexBuild out;
  std::vector<Vector> vectors;
  vectors.reserve(texts.size());
  for (std::size_t start = 0; start < texts.size(); start += batch_size) {
    const std::size_t end = std::min(texts.size(), start + batch_size);
    std::vector<std::string> batch(texts.begin() + static_cast<std::ptrdiff_t>(start),
                                   texts.begin() + static_cast<std::ptrdiff_t>(end));
    EmbeddingBatch result = gateway.embed_text(model, batch);
    out.usage += result.usage;
    for (auto& v : result.vectors) vectors.push_back(std::move(v));
  }

  const std::size_t width = vectors.front().size();
  const std::size_t n = store.size();
  std::vector<std::vector<float>> matrices(dimensions.size(), std::vector<float>(n * width));
  for (std::size_t k = 0; k < vectors.size(); ++k) {
    if (vectors[k].size() != width) throw SchemaError("embedding width changed mid-build");
    const std::size_t d = k / n;
    const std::size_t g = k % n;
    std::copy(vectors[k].begin(), vectors[k].end(), matrices[d].begin() + static_cast<std::ptrdiff_t>(g * width));
  }
  out.index = EmbeddingIndex(dataset, model.model, dimensions.ids(), store.gui_ids(), width,
                             std::move(matrices));
  return out;
}

std::vector<double> similarity_scores(const EmbeddingIndex& index, std::string_view dimension_id,
                                      std::span<const float> query) {
  auto m = index.matrix(dimension_id);
  if (query.size() != index.width()) {
    throw PreconditionError("query vector width " + std::to_string(query.size()) +
                            " does not match index width " + std::to_string(index.width()));
  }
  const std::size_t w = index.width();
  std::vector<double> scores(index.gui_count());
  for (std::size_t g = 0; g < scores.size(); ++g) {
    const float* row = m.data() + g * w;
    double dot = 0.0;
    for (std::size_t j = 0; j < w; ++j) dot += static_cast<double>(row[j]) * query[j];
    scores[g] = std::clamp(dot, -1.0, 1.0);
  }
  return scores;
}

std::vector<std::pair<std::string, double>> similarity(const EmbeddingIndex& index,
                                                       std::string_view dimension_id,
                                                       std::span<const float> query) {
  auto scores = similarity_scores(index, dimension_id, query);
  std::vector<std::pair<std::string, double>> out;
  out.reserve(scores.size());
  for (std::size_t g = 0; g < scores.size(); ++g) out.emplace_back(index.gui_ids()[g], scores[g]);
  return out;
}

// ---- persistence ----------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'G', 'R', 'R', 'I', 'D', 'X', '\0', '\0'};

class Writer {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  std::vector<std::uint8_t>& bytes() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void raw(void* p, std::size_t n) {
    if (n > bytes_.size() - pos_) throw TruncatedFileError("index file is truncated");
    std::memcpy(p, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    raw(&v, sizeof v);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    raw(&v, sizeof v);
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    if (n > bytes_.size() - pos_) throw TruncatedFileError("index file is truncated");
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_index(const EmbeddingIndex& index) {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.u32(kIndexFormatVersion);
  w.str(index.dataset());
  w.str(index.model_id());
  w.u32(static_cast<std::uint32_t>(index.dimension_ids().size()));
  w.u32(static_cast<std::uint32_t>(index.gui_count()));
  w.u32(static_cast<std::uint32_t>(index.width()));
  for (const auto& d : index.dimension_ids()) w.str(d);
  for (const auto& g : index.gui_ids()) w.str(g);
  for (const auto& d : index.dimension_ids()) {
    auto m = index.matrix(d);
    w.raw(m.data(), m.size_bytes());
  }
  const std::uint64_t checksum = fnv1a64(std::span<const std::uint8_t>(w.bytes()));
  w.u64(checksum);
  return std::move(w.bytes());
}

EmbeddingIndex deserialize_index(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  char magic[sizeof kMagic];
  if (bytes.size() < sizeof kMagic) throw TruncatedFileError("index file is truncated (no header)");
  r.raw(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw FormatError("not an index file (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kIndexFormatVersion) {
    throw FormatError("unsupported index format version " + std::to_string(version));
  }
  std::string dataset = r.str();
  std::string model = r.str();
  const std::uint32_t dims = r.u32();
  const std::uint32_t guis = r.u32();
  const std::uint32_t width = r.u32();
  if (dims == 0 || width == 0) throw FormatError("index header declares an empty index");

  std::vector<std::string> dim_ids(dims);
  for (auto& d : dim_ids) d = r.str();
  std::vector<std::string> gui_ids(guis);
  for (auto& g : gui_ids) g = r.str();

  const std::size_t cells = static_cast<std::size_t>(guis) * width;
  if (cells * sizeof(float) * dims + sizeof(std::uint64_t) > r.remaining()) {
    throw TruncatedFileError("index file is truncated (matrix data)");
  }
  std::vector<std::vector<float>> matrices(dims, std::vector<float>(cells));
  for (auto& m : matrices) r.raw(m.data(), cells * sizeof(float));

  const std::size_t payload_end = r.pos();
  const std::uint64_t stored = r.u64();
  if (r.remaining() != 0) throw FormatError("index file has trailing bytes");
  if (stored != fnv1a64(bytes.first(payload_end))) throw FormatError("index checksum mismatch (corrupt file)");

  EmbeddingIndex index(std::move(dataset), std::move(model), std::move(dim_ids), std::move(gui_ids), width,
                       std::move(matrices));
  for (const auto& d : index.dimension_ids()) {
    for (std::size_t g = 0; g < index.gui_count(); ++g) {
      double sq = 0.0;
      for (float x : index.row(d, g)) sq += static_cast<double>(x) * x;
      if (std::abs(std::sqrt(sq) - 1.0) > kUnitNormTolerance) {
        throw FormatError("index vector for '" + index.gui_ids()[g] + "'/" + d + " is not unit-norm");
      }
    }
  }
  return index;
}

void save_index(const EmbeddingIndex& index, const std::filesystem::path& path) {
  const auto bytes = serialize_index(index);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write index '" + tmp.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("failed writing index '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

EmbeddingIndex load_index(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("index file not found: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_index(bytes);
}

}  // namespace guirerank
