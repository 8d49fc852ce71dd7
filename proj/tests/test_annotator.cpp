#include <gtest/gtest.h>

#include <fstream>
#include <mutex>
#include <set>

#include "fixtures.hpp"
#include "guirerank/annotator.hpp"
#include "guirerank/errors.hpp"

using namespace guirerank;
namespace t = guirerank::testing;

namespace {

// Stub that fails for images of the listed sizes and counts calls.
class SelectiveStub : public StubProvider {
 public:
  explicit SelectiveStub(std::set<std::size_t> failing_sizes) : failing_(std::move(failing_sizes)) {}
  ChatReply chat(const ModelConfig& config, const ChatRequest& request) override {
    {
      std::lock_guard lock(mu_);
      ++calls_;
    }
    if (failing_.count(request.image.size())) throw ProviderRequestError("refused");
    return StubProvider::chat(config, request);
  }
  std::size_t calls() const { return calls_; }

 private:
  std::set<std::size_t> failing_;
  std::mutex mu_;
  std::size_t calls_ = 0;
};

std::size_t image_size(std::size_t gui) { return 1200 + 37 * gui; }

struct Harness {
  std::shared_ptr<SelectiveStub> stub;
  ModelGateway gateway;

  explicit Harness(std::set<std::size_t> failing_guis = {}) {
    std::set<std::size_t> sizes;
    for (auto g : failing_guis) sizes.insert(image_size(g));
    stub = std::make_shared<SelectiveStub>(sizes);
    gateway.register_provider(stub);
  }
};

AnnotationJob job_for(const t::FixtureDataset& f) {
  AnnotationJob job;
  job.manifest = load_manifest(f.manifest);
  job.model = t::stub_model();
  job.store_path = f.store;
  job.width = 4;
  return job;
}

}  // namespace

TEST(Annotator, PromptListsEveryDimension) {
  const std::string p = build_annotation_prompt(default_dimension_set());
  for (const auto& d : default_dimension_set()) {
    EXPECT_NE(p.find(d.id), std::string::npos);
    EXPECT_NE(p.find(d.description), std::string::npos);
  }
  EXPECT_NE(p.find("120"), std::string::npos);
}

TEST(Annotator, OneRequestPerGuiCoveringAllDimensions) {
  t::TempDir dir;
  const auto f = t::write_dataset(dir.path(), "ten", 10);
  Harness h;
  const AnnotationOutcome out = annotate_dataset(job_for(f), h.gateway);
  EXPECT_EQ(h.stub->calls(), 10u);
  EXPECT_EQ(out.usage.request_count, 10u);
  EXPECT_EQ(out.store.size(), 10u);
  EXPECT_TRUE(out.failures.empty());
  const auto dims = default_dimension_set();
  for (const auto& id : out.store.gui_ids()) EXPECT_TRUE(out.store.is_complete(id, dims)) << id;
  // manifest order on disk
  EXPECT_EQ(load_annotation_store(f.store).gui_ids(), out.store.gui_ids());
  EXPECT_EQ(out.store.gui_ids().front(), t::gui_name(0));
}

TEST(Annotator, OutputIndependentOfWidth) {
  t::TempDir dir;
  const auto f = t::write_dataset(dir.path(), "w", 12);
  std::string first;
  for (std::size_t width : {1u, 3u, 10u}) {
    Harness h;
    auto job = job_for(f);
    job.width = width;
    annotate_dataset(job, h.gateway);
    const std::string text = t::read_text(f.store);
    if (first.empty()) first = text;
    EXPECT_EQ(text, first) << "width " << width;
  }
}

TEST(Annotator, ResumeSkipsCompletedGuis) {
  t::TempDir dir;
  const auto f = t::write_dataset(dir.path(), "r", 10);
  {
    Harness h;
    annotate_dataset(job_for(f), h.gateway);
  }
  const AnnotationStore full = load_annotation_store(f.store);
  AnnotationStore partial;
  for (std::size_t i = 0; i < 4; ++i) partial.set(t::gui_name(i), *full.find(t::gui_name(i)));
  save_annotation_store(partial, f.store);
  {
    std::ofstream out(f.store, std::ios::app | std::ios::binary);
    out << R"({"gui_id": "gui_005", "annotations": {"dom)";  // interrupted writer
  }

  Harness h;
  auto job = job_for(f);
  job.resume = true;
  const AnnotationOutcome out = annotate_dataset(job, h.gateway);
  EXPECT_EQ(out.skipped, 4u);
  EXPECT_EQ(h.stub->calls(), 6u);
  EXPECT_EQ(out.store, full);
  EXPECT_EQ(load_annotation_store(f.store), full);
}

TEST(Annotator, ToleratesFailuresBelowThreshold) {
  t::TempDir dir;
  const auto f = t::write_dataset(dir.path(), "ok", 10);
  Harness h({3});
  const AnnotationOutcome out = annotate_dataset(job_for(f), h.gateway);
  ASSERT_EQ(out.failures.size(), 1u);
  EXPECT_EQ(out.failures[0].gui_id, t::gui_name(3));
  EXPECT_EQ(out.store.size(), 9u);
  EXPECT_FALSE(out.store.contains(t::gui_name(3)));
}

TEST(Annotator, AbortsAboveThresholdKeepingCompletedWork) {
  t::TempDir dir;
  const auto f = t::write_dataset(dir.path(), "bad", 10);
  Harness h({1, 2, 5});
  auto job = job_for(f);
  job.width = 1;
  try {
    annotate_dataset(job, h.gateway);
    FAIL() << "expected abort";
  } catch (const AnnotationAbortedError& e) {
    EXPECT_GE(e.partial().failures.size(), 2u);
    const AnnotationStore on_disk = load_annotation_store(f.store);
    EXPECT_EQ(on_disk, e.partial().store);
    EXPECT_TRUE(on_disk.contains(t::gui_name(0)));
  }
  // nothing annotated twice on resume
  Harness again;
  job.resume = true;
  const AnnotationOutcome out = annotate_dataset(job, again.gateway);
  EXPECT_EQ(out.store.size(), 10u);
  EXPECT_EQ(again.stub->calls(), 10u - out.skipped);
}
