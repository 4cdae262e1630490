#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include <nlohmann/json.hpp>

#include "bf/error.hpp"
#include "bf/iteration.hpp"

namespace {

using bf::IterationScheme;
using bf::LastBatch;

std::vector<std::vector<std::size_t>> one_epoch(IterationScheme& s) {
  std::vector<std::vector<std::size_t>> out;
  while (auto r = s.next()) out.push_back(r->indices);
  return out;
}

std::vector<std::size_t> flatten(const std::vector<std::vector<std::size_t>>& batches) {
  std::vector<std::size_t> out;
  for (const auto& b : batches) out.insert(out.end(), b.begin(), b.end());
  return out;
}

TEST(Iteration, SequentialKeepAndDrop) {
  auto keep = bf::sequential_batches(5, 2);
  EXPECT_EQ(one_epoch(keep), (std::vector<std::vector<std::size_t>>{{0, 1}, {2, 3}, {4}}));
  auto drop = bf::sequential_batches(5, 2, LastBatch::Drop);
  EXPECT_EQ(one_epoch(drop), (std::vector<std::vector<std::size_t>>{{0, 1}, {2, 3}}));
  EXPECT_EQ(drop.epoch_length(), 5u);
}

TEST(Iteration, EpochEndIsSignalledExactlyOnce) {
  auto s = bf::sequential_batches(2, 2);
  EXPECT_TRUE(s.next().has_value());
  EXPECT_FALSE(s.next().has_value());
  EXPECT_TRUE(s.next().has_value());
}

// Frozen from the independent shuffle oracle.
TEST(Iteration, ShuffleMatchesOracle) {
  auto s = bf::shuffled_batches(4, 4, 42);
  EXPECT_EQ(one_epoch(s), (std::vector<std::vector<std::size_t>>{{2, 1, 0, 3}}));
  EXPECT_EQ(one_epoch(s), (std::vector<std::vector<std::size_t>>{{0, 3, 1, 2}}));
}

TEST(Iteration, ShuffledEpochIsAPermutation) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto s = bf::shuffled_batches(37, 5, seed);
    auto all = flatten(one_epoch(s));
    std::sort(all.begin(), all.end());
    std::vector<std::size_t> expected(37);
    std::iota(expected.begin(), expected.end(), 0);
    EXPECT_EQ(all, expected);
  }
}

TEST(Iteration, BootstrapDrawsInRangeWithReplacement) {
  auto s = bf::bootstrap(10, 10, 3);
  const auto all = flatten(one_epoch(s));
  EXPECT_EQ(all.size(), 10u);
  for (auto i : all) EXPECT_LT(i, 10u);
}

TEST(Iteration, ExamplewiseRequestsAreSingle) {
  auto s = bf::sequential_examples(3);
  const auto r = s.next();
  ASSERT_TRUE(r);
  EXPECT_TRUE(r->single);
  EXPECT_EQ(r->indices, (std::vector<std::size_t>{0}));
}

TEST(Iteration, IndexListWalksTheList) {
  auto s = bf::index_list_batches(10, {9, 2, 4}, 2);
  EXPECT_EQ(one_epoch(s), (std::vector<std::vector<std::size_t>>{{9, 2}, {4}}));
  EXPECT_THROW(bf::index_list_batches(3, {5}, 1), bf::ContractError);
}

TEST(Iteration, SaveRestoreResumesMidEpoch) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto a = bf::shuffled_batches(23, 4, seed);
    for (int i = 0; i < static_cast<int>(seed % 5); ++i) a.next();
    auto b = IterationScheme::restore_state(bf::SchemeState::from_json(a.save_state().to_json()));
    for (int i = 0; i < 30; ++i) EXPECT_EQ(a.next(), b.next());
  }
}

TEST(Iteration, CrossValidationFolds) {
  const auto folds = bf::cross_validation(10, 3);
  ASSERT_EQ(folds.size(), 3u);
  std::vector<std::size_t> sizes;
  for (auto f : folds) {
    const auto valid = flatten(one_epoch(f.valid));
    const auto train = flatten(one_epoch(f.train));
    sizes.push_back(valid.size());
    EXPECT_EQ(valid.size() + train.size(), 10u);
    EXPECT_TRUE(std::is_sorted(train.begin(), train.end()));
    for (auto v : valid) EXPECT_EQ(std::count(train.begin(), train.end(), v), 0);
  }
  EXPECT_EQ(sizes, (std::vector<std::size_t>{4, 3, 3}));
  EXPECT_THROW(bf::cross_validation(2, 3), bf::ContractError);
}

TEST(Iteration, ContractViolations) {
  EXPECT_THROW(bf::sequential_batches(5, 0), bf::ContractError);
  EXPECT_THROW(bf::last_batch_from_name("maybe"), bf::Error);
}

}  // namespace
