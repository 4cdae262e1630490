#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "bf/error.hpp"
#include "bf/rng.hpp"

namespace {

std::vector<std::uint32_t> first_u32(std::uint64_t seed, int n) {
  bf::Rng rng(seed);
  std::vector<std::uint32_t> out;
  for (int i = 0; i < n; ++i) out.push_back(rng.next_u32());
  return out;
}

// Values below come from tests/oracles/pcg_oracle.py.
TEST(Rng, MatchesOracleStreams) {
  EXPECT_EQ(first_u32(0, 4), (std::vector<std::uint32_t>{1092706980, 27322534, 2742124086, 4288670999}));
  EXPECT_EQ(first_u32(1, 4), (std::vector<std::uint32_t>{1299187792, 2962700197, 1071401340, 2195476265}));
  EXPECT_EQ(first_u32(2, 4), (std::vector<std::uint32_t>{2151725760, 630432778, 3862206981, 3522649554}));
}

TEST(Rng, SeedingMatchesOracleState) {
  bf::Rng rng(0);
  EXPECT_EQ(rng.state(), 0xe220a8397b1dcdafULL);
  EXPECT_EQ(rng.inc(), 0x6e789e6aa1b965f5ULL);
  EXPECT_EQ(rng.inc() & 1u, 1u);
}

TEST(Rng, BoundedMatchesOracle) {
  bf::Rng rng(3);
  std::vector<std::uint32_t> got;
  for (int i = 0; i < 8; ++i) got.push_back(rng.bounded(10));
  EXPECT_EQ(got, (std::vector<std::uint32_t>{4, 4, 2, 0, 3, 9, 8, 0}));
}

TEST(Rng, UniformMatchesOracle) {
  bf::Rng rng(5);
  EXPECT_EQ(rng.uniform(), 0.5970157550474682);
  EXPECT_EQ(rng.uniform(), 0.32706853565158467);
}

TEST(Rng, DerivedSeedsMatchOracle) {
  const double expected[] = {0.06938920302082308, 0.5152385070979199, 0.44622898391304333,
                             0.8775921116019799};
  for (std::uint64_t k = 0; k < 4; ++k) {
    bf::Rng rng(bf::derive_seed(11, k));
    EXPECT_EQ(rng.uniform(), expected[k]) << "key " << k;
  }
}

TEST(Rng, BoundedZeroIsAContractError) {
  bf::Rng rng(0);
  EXPECT_THROW(rng.bounded(0), bf::ContractError);
}

TEST(Rng, BoundedStaysInRangeAndCoversIt) {
  bf::Rng rng(99);
  for (std::uint32_t n : {1u, 2u, 3u, 7u, 1000u}) {
    std::set<std::uint32_t> seen;
    for (int i = 0; i < 5000; ++i) {
      const auto v = rng.bounded(n);
      ASSERT_LT(v, n);
      seen.insert(v);
    }
    if (n <= 7) {
      EXPECT_EQ(seen.size(), n);
    }
  }
}

TEST(Rng, UniformInHalfOpenUnitInterval) {
  bf::Rng rng(8);
  double sum = 0;
  for (int i = 0; i < 20000; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / 20000, 0.5, 0.01);
}

TEST(Rng, NormalMomentsAndPairCaching) {
  bf::Rng rng(21);
  const double first = rng.normal();
  EXPECT_TRUE(std::isfinite(first));
  EXPECT_TRUE(rng.cached_normal().has_value());
  rng.normal();
  EXPECT_FALSE(rng.cached_normal().has_value());

  double sum = 0, sq = 0;
  const int n = 40000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sq += z * z;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.03);
  EXPECT_NEAR(sq / n, 1.0, 0.03);
}

TEST(Rng, JsonRoundTripKeepsCachedNormal) {
  bf::Rng a(77);
  a.normal();
  const bf::Rng b = bf::Rng::from_json(a.to_json());
  EXPECT_EQ(a, b);
  bf::Rng c = b;
  EXPECT_EQ(a.normal(), c.normal());
  EXPECT_EQ(a.next_u32(), c.next_u32());
}

TEST(Rng, LittleEndianRoundTrip) {
  bf::Rng a(123);
  a.next_u32();
  unsigned char buf[16];
  a.write_le(buf);
  EXPECT_EQ(buf[0], static_cast<unsigned char>(a.state() & 0xff));
  bf::Rng b = bf::Rng::read_le(buf);
  EXPECT_EQ(a.state(), b.state());
  EXPECT_EQ(a.inc(), b.inc());
  EXPECT_EQ(a.next_u32(), b.next_u32());
}

TEST(Rng, DistinctSeedsAndKeysGiveDistinctStreams) {
  EXPECT_NE(first_u32(0, 4), first_u32(1, 4));
  EXPECT_NE(bf::derive_seed(1, 2), bf::derive_seed(2, 1));
  EXPECT_NE(bf::derive_seed(5, 0), bf::derive_seed(5, 1));
}

}  // namespace
