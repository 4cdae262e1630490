#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "bf/container.hpp"
#include "bf/error.hpp"
#include "bf/pipeline.hpp"
#include "bf/stream.hpp"
#include "fixtures.hpp"

namespace {

namespace c = bf::container;
using bf::DType;
using bf::EventKind;
using bf::Tensor;
using nlohmann::json;

class StreamTest : public ::testing::Test {
 protected:
  void SetUp() override {
    blobs_ = bf::testing::make_builtin_container(dir_.path(), "synth-blobs");
    seq_ = bf::testing::make_builtin_container(dir_.path(), "synth-seq");
    std::vector<std::uint8_t> px(5 * 9);
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<std::uint8_t>(i);
    std::vector<c::SourceData> s{{{"images", DType::U8, {5, 3, 3}, {"batch", "h", "w"}},
                                  Tensor::from_values<std::uint8_t>({5, 3, 3}, px)}};
    std::vector<c::SplitDescriptor> splits{{"train", {{"images", c::Interval{0, 5}}}}};
    images_ = dir_ / "images.bfdc";
    c::write_container(images_, s, splits, {"t", "c"});
  }

  json blobs_spec(json transformers, json scheme = {{"kind", "sequential"}, {"batch_size", 7}}) const {
    return {{"container", blobs_.string()}, {"split", "train"}, {"max_epochs", 2},
            {"scheme", scheme}, {"transformers", transformers}};
  }

  bf::testing::TempDir dir_;
  std::filesystem::path blobs_, seq_, images_;
};

TEST_F(StreamTest, EpochEndsAreInBandAndDistinctFromExhaustion) {
  auto s = bf::build_pipeline(blobs_spec(json::array()));
  const auto events = bf::testing::pull_all(*s);
  std::size_t items = 0, ends = 0;
  for (const auto& e : events) {
    items += e.kind == EventKind::Item;
    ends += e.kind == EventKind::EpochEnd;
  }
  EXPECT_EQ(items, 2u * 23u);  // ceil(160 / 7) per epoch
  EXPECT_EQ(ends, 2u);
  EXPECT_EQ(events.back().kind, EventKind::Exhausted);
  EXPECT_EQ(s->next().kind, EventKind::Exhausted);
}

TEST_F(StreamTest, MappingsApplyAndValidate) {
  auto s = bf::build_pipeline(blobs_spec(json::array(
      {{{"kind", "mapping"}, {"function", "one_hot"}, {"params", {{"source", "targets"}, {"classes", 2}, {"flatten", true}}}},
       {{"kind", "mapping"}, {"function", "scale_by"}, {"params", {{"source", "features"}, {"factor", 2.0}}}}})));
  const auto e = s->next();
  ASSERT_TRUE(e.is_item());
  EXPECT_EQ(e.item.tensor("targets").shape(), (bf::Shape{7, 2}));
  auto raw = bf::build_pipeline(blobs_spec(json::array()));
  const auto r = raw->next();
  EXPECT_EQ(e.item.tensor("features").get_as_double(3), 2.0 * r.item.tensor("features").get_as_double(3));

  EXPECT_THROW(bf::build_pipeline(blobs_spec(json::array(
                   {{{"kind", "mapping"}, {"function", "one_hot"}, {"params", {{"source", "targets"}}}}}))),
               bf::ContractError);
  EXPECT_THROW(bf::find_mapping("lambda"), bf::LookupError);
}

TEST_F(StreamTest, BatchNeverCrossesEpochBoundaries) {
  json spec = blobs_spec(json::array({{{"kind", "batch"}, {"size", 50}, {"policy", "keep"}}}),
                         {{"kind", "sequential"}, {"examplewise", true}});
  auto s = bf::build_pipeline(spec);
  std::vector<std::size_t> sizes;
  for (const auto& e : bf::testing::pull_all(*s)) {
    if (e.is_item()) sizes.push_back(e.item.tensor("features").rows());
    else if (e.kind == EventKind::EpochEnd) sizes.push_back(0);
  }
  EXPECT_EQ(sizes, (std::vector<std::size_t>{50, 50, 50, 10, 0, 50, 50, 50, 10, 0}));
}

TEST_F(StreamTest, PaddingBuildsMasks) {
  json spec = {{"container", seq_.string()}, {"split", "train"}, {"max_epochs", 1},
               {"scheme", {{"kind", "sequential"}, {"examplewise", true}}},
               {"transformers", json::array({
                   {{"kind", "mapping"}, {"function", "trim_to_length"}, {"params", {{"source", "tokens"}, {"lengths", "lengths"}, {"keep_lengths", true}}}},
                   {{"kind", "batch"}, {"size", 4}, {"policy", "keep"}, {"ragged_sources", {"tokens"}}},
                   {{"kind", "padding"}, {"pad_value", 0}, {"exempt", {"lengths"}}}})}};
  auto s = bf::build_pipeline(spec);
  const auto e = s->next();
  ASSERT_TRUE(e.is_item());
  const auto& tokens = e.item.tensor("tokens");
  const auto& mask = e.item.tensor("tokens_mask");
  const auto& lengths = e.item.tensor("lengths");
  ASSERT_EQ(mask.shape(), (bf::Shape{4, tokens.shape()[1]}));
  std::size_t longest = 0;
  for (std::size_t b = 0; b < 4; ++b) {
    const auto len = static_cast<std::size_t>(lengths.get_as_double(b));
    longest = std::max(longest, len);
    for (std::size_t t = 0; t < tokens.shape()[1]; ++t) {
      EXPECT_EQ(mask.get_as_double(b * tokens.shape()[1] + t), t < len ? 1.0 : 0.0);
      if (t >= len) {
        EXPECT_EQ(tokens.get_as_double(b * tokens.shape()[1] + t), 0.0);
      }
    }
  }
  EXPECT_EQ(tokens.shape()[1], longest);
}

TEST_F(StreamTest, NGramsSlideOverEachSequence) {
  json spec = {{"container", seq_.string()}, {"split", "train"}, {"max_epochs", 1},
               {"scheme", {{"kind", "sequential"}, {"examplewise", true}}},
               {"transformers", json::array({
                   {{"kind", "mapping"}, {"function", "trim_to_length"}, {"params", {{"source", "tokens"}, {"lengths", "lengths"}}}},
                   {{"kind", "ngrams"}, {"n", 2}}})}};
  auto base = bf::build_pipeline({{"container", seq_.string()}, {"split", "train"}, {"max_epochs", 1},
                                  {"scheme", {{"kind", "sequential"}, {"examplewise", true}}},
                                  {"transformers", json::array({{{"kind", "mapping"}, {"function", "trim_to_length"},
                                                                 {"params", {{"source", "tokens"}, {"lengths", "lengths"}}}}})}});
  const auto first = base->next().item.tensor("tokens");
  auto s = bf::build_pipeline(spec);
  for (std::size_t i = 0; i + 2 < first.size(); ++i) {
    const auto e = s->next();
    ASSERT_TRUE(e.is_item());
    EXPECT_EQ(e.item.tensor("features").get_as_double(0), first.get_as_double(i));
    EXPECT_EQ(e.item.tensor("features").get_as_double(1), first.get_as_double(i + 1));
    EXPECT_EQ(e.item.tensor("targets").get_as_double(0), first.get_as_double(i + 2));
  }
}

// Frozen from the independent crop oracle.
TEST_F(StreamTest, RandomCropMatchesOracleOffsets) {
  json spec = {{"container", images_.string()}, {"split", "train"}, {"max_epochs", 1},
               {"scheme", {{"kind", "sequential"}, {"examplewise", true}}},
               {"transformers", json::array({{{"kind", "random_crop"}, {"source", "images"}, {"height", 2},
                                              {"width", 2}, {"seed", 7}, {"image_ndim", 2}}})}};
  auto s = bf::build_pipeline(spec);
  const auto e = s->next();
  ASSERT_TRUE(e.is_item());
  // image 0 holds 0..8 row-major; top=0, left=1 selects {1, 2, 4, 5}
  EXPECT_EQ(e.item.tensor("images"), Tensor::from_values<std::uint8_t>({2, 2}, {1, 2, 4, 5}));
}

TEST_F(StreamTest, StateTreeRestoresEveryLayer) {
  json spec = blobs_spec(json::array({{{"kind", "batch"}, {"size", 6}, {"policy", "drop"}},
                                      {{"kind", "mapping"}, {"function", "scale_by"}, {"params", {{"source", "features"}, {"factor", 0.5}}}}}),
                         {{"kind", "shuffled"}, {"examplewise", true}, {"seed", 3}});
  auto a = bf::build_pipeline(spec);
  bf::testing::pull_n(*a, 13);
  const json state = a->save_state();
  EXPECT_EQ(state.at("kind"), "mapping");
  EXPECT_EQ(state.at("upstream").at("kind"), "batch");
  auto b = bf::build_pipeline(spec);
  b->restore_state(json::parse(state.dump()));
  EXPECT_EQ(bf::testing::pull_all(*a), bf::testing::pull_all(*b));
}

TEST_F(StreamTest, RestoreRejectsMismatchedChains) {
  auto a = bf::build_pipeline(blobs_spec(json::array({{{"kind", "batch"}, {"size", 2}, {"policy", "keep"}}}),
                                         {{"kind", "sequential"}, {"examplewise", true}}));
  auto b = bf::build_pipeline(blobs_spec(json::array()));
  EXPECT_THROW(b->restore_state(a->save_state()), bf::Error);
}

TEST_F(StreamTest, DrainEpochStopsAtTheBoundary) {
  auto s = bf::build_pipeline(blobs_spec(json::array()));
  EXPECT_EQ(bf::drain_epoch(*s).size(), 23u);
  EXPECT_EQ(bf::drain_epoch(*s).size(), 23u);
  EXPECT_TRUE(bf::drain_epoch(*s).empty());
}

}  // namespace
