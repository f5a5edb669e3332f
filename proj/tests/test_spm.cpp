#include <gtest/gtest.h>

#include "support/oracles.hpp"
#include "support/synthetic.hpp"

using namespace xlpool;
using namespace xlpool::testing;

TEST(SpmConfig, CellCounts) {
  EXPECT_EQ(SpmConfig(0).cells(), 1u);
  EXPECT_EQ(SpmConfig(1).cells(), 5u);
  EXPECT_EQ(SpmConfig(2).cells(), 21u);
  EXPECT_THROW(SpmConfig(3), ArgumentError);
  EXPECT_THROW(SpmConfig(-1), ArgumentError);
}

TEST(SpmPool, SumSqrtOfOnes) {
  FeatureTensor ones(2, 2, 3, std::vector<float>(12, 1.0f));
  auto d = spm_pool(ones, SpmConfig(0), SpmMethod::sum_sqrt);
  ASSERT_EQ(d.size(), 3u);
  for (float v : d.values()) EXPECT_EQ(v, 2.0f);
}

TEST(SpmPool, LevelTwoDimension) {
  Rng rng(1);
  auto t = relu_tensor(rng, 14, 14, 512);
  auto d = spm_pool(t, SpmConfig(2), SpmMethod::max);
  EXPECT_EQ(d.size(), 10752u);
  EXPECT_EQ(d.channels(), 21u);
  EXPECT_EQ(d.channel_dim(), 512u);
}

TEST(SpmPool, MatchesMembershipOracleExactly) {
  Rng rng(2);
  for (int n = 0; n < 60; ++n) {
    auto t = random_tensor(rng, uniform(rng, 1, 9), uniform(rng, 1, 9), uniform(rng, 1, 6));
    for (int level = 0; level <= 2; ++level) {
      for (bool use_max : {true, false}) {
        if (use_max && (t.height() < 4 || t.width() < 4) && level == 2) continue;  // empty cells need nonneg input
        auto got = spm_pool(t, SpmConfig(level), use_max ? SpmMethod::max : SpmMethod::sum_sqrt);
        auto want = naive_spm(t, level, use_max);
        ASSERT_EQ(got.size(), want.size());
        EXPECT_TRUE(std::equal(want.begin(), want.end(), got.values().begin()))
            << t.shape_string() << " level " << level << (use_max ? " max" : " sum_sqrt");
      }
    }
  }
}

TEST(SpmPool, EveryUnitInExactlyOneCellPerGrid) {
  for (std::size_t h = 1; h <= 9; ++h)
    for (std::size_t w = 1; w <= 9; ++w)
      for (std::size_t g : {1u, 2u, 4u}) {
        std::vector<int> hits(g * g, 0);
        for (std::size_t r = 0; r < h; ++r)
          for (std::size_t c = 0; c < w; ++c) {
            auto cell = spm_cell(r, c, g, h, w);
            ASSERT_LT(cell, g * g);
            ++hits[cell];
          }
        int total = 0;
        for (int x : hits) total += x;
        EXPECT_EQ(total, static_cast<int>(h * w));
      }
}

TEST(SpmPool, EmptyCellsPoolToZero) {
  // 2x2 grid at level 2: only 4 of the 16 finest cells are occupied.
  FeatureTensor t(2, 2, 1, {1, 2, 3, 4});
  auto d = spm_pool(t, SpmConfig(2), SpmMethod::max);
  std::size_t zeros = 0;
  for (std::size_t c = 5; c < 21; ++c) zeros += d.channel(c)[0] == 0.0f;
  EXPECT_EQ(zeros, 12u);
}

TEST(SpmPool, SumSqrtMonotoneInNonnegativeUnits) {
  Rng rng(3);
  for (int n = 0; n < 40; ++n) {
    auto t = relu_tensor(rng, 4, 4, 5);
    std::vector<float> bigger(t.data().begin(), t.data().end());
    auto unit = uniform(rng, 0, 15);
    for (std::size_t j = 0; j < 5; ++j) bigger[unit * 5 + j] += std::uniform_real_distribution<float>(0, 2)(rng);
    auto a = spm_pool(t, SpmConfig(2), SpmMethod::sum_sqrt);
    auto b = spm_pool(FeatureTensor(4, 4, 5, bigger, true), SpmConfig(2), SpmMethod::sum_sqrt);
    for (std::size_t j = 0; j < a.size(); ++j) EXPECT_GE(b.values()[j], a.values()[j]);
  }
}

TEST(SpmPool, OptionalFinalL2) {
  Rng rng(4);
  auto d = spm_pool(relu_tensor(rng, 4, 4, 3), SpmConfig(1), SpmMethod::sum_sqrt, true);
  double sq = 0;
  for (float v : d.values()) sq += static_cast<double>(v) * v;
  EXPECT_NEAR(sq, 1.0, 1e-6);
}

TEST(ConcatLayers, DimensionsAndOrder) {
  Rng rng(5);
  auto a = spm_pool(relu_tensor(rng, 8, 8, 512), SpmConfig(2), SpmMethod::sum_sqrt);
  auto b = spm_pool(relu_tensor(rng, 8, 8, 512), SpmConfig(2), SpmMethod::sum_sqrt);
  auto ab = concat_layers(a, b);
  EXPECT_EQ(ab.size(), 21504u);
  EXPECT_EQ(ab.channels(), 42u);
  EXPECT_EQ(ab.channel_dim(), 512u);
  EXPECT_NE(ab, concat_layers(b, a));
}

TEST(ConcatLayers, EmptyIsIdentity) {
  Descriptor a(2, 3, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(concat_layers(a, Descriptor{}), a);
  EXPECT_EQ(concat_layers(Descriptor{}, a), a);
}

TEST(ConcatLayers, MixedChannelDimsKeepParts) {
  Descriptor a(2, 3, {1, 2, 3, 4, 5, 6});
  Descriptor b(1, 2, {7, 8});
  auto ab = concat_layers(a, b);
  EXPECT_FALSE(ab.is_uniform());
  ASSERT_EQ(ab.parts().size(), 2u);
  EXPECT_EQ(ab.channels(), 3u);
  EXPECT_EQ(ab.channel(2)[1], 8.0f);
  EXPECT_THROW(ab.channel_dim(), ShapeError);
}
