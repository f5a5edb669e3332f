#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "support/oracles.hpp"
#include "support/synthetic.hpp"

using namespace xlpool;
using namespace xlpool::testing;

TEST(IndicatorPooling, AllOnesMapIsSumPooling) {
  Rng rng(1);
  auto t = random_tensor(rng, 3, 4, 5);
  auto d = pool_with_indicators(t, IndicatorMaps(1, t.units(), std::vector<float>(t.units(), 1.0f)));
  ASSERT_EQ(d.channels(), 1u);
  ASSERT_EQ(d.channel_dim(), 5u);
  for (std::size_t j = 0; j < 5; ++j) {
    double sum = 0.0;
    for (std::size_t i = 0; i < t.units(); ++i) sum += t.at(i, j);
    EXPECT_FLOAT_EQ(d.values()[j], static_cast<float>(sum));
  }
}

TEST(IndicatorPooling, OneHotSelectsUnit) {
  Rng rng(2);
  auto t = random_tensor(rng, 3, 3, 4);
  std::vector<float> w(t.units(), 0.0f);
  w[5] = 1.0f;
  auto d = pool_with_indicators(t, IndicatorMaps(1, t.units(), w));
  auto x = t.unit(5);
  EXPECT_TRUE(std::equal(x.begin(), x.end(), d.values().begin()));
}

TEST(IndicatorPooling, RandomMapsMatchHandLoop) {
  Rng rng(3);
  for (int n = 0; n < 20; ++n) {
    auto t = random_tensor(rng, 2, 2, 3);
    std::vector<float> w(2 * 4);
    for (auto& x : w) x = std::uniform_real_distribution<float>(0.0f, 1.0f)(rng);
    IndicatorMaps maps(2, 4, w);
    auto got = pool_with_indicators(t, maps);
    auto want = naive_indicator_pool(t, maps);
    std::vector<float> wantf(want.begin(), want.end());
    EXPECT_LE(rel_error(got.values(), wantf), 1e-6);
  }
}

TEST(IndicatorPooling, CountMismatchIsShapeError) {
  Rng rng(4);
  auto t = random_tensor(rng, 2, 2, 3);
  EXPECT_THROW(pool_with_indicators(t, IndicatorMaps(1, 5, std::vector<float>(5, 1.0f))), ShapeError);
}

TEST(IndicatorPooling, RejectsNegativeWeights) {
  EXPECT_THROW(IndicatorMaps(1, 2, {1.0f, -1.0f}), SchemaError);
}

TEST(CrossLayerPool, SelfPairingIsSymmetricGram) {
  Rng rng(5);
  auto t = random_tensor(rng, 4, 3, 6);
  auto d = cross_layer_pool(LayerPair(t, t));
  ASSERT_EQ(d.size(), 36u);
  for (std::size_t a = 0; a < 6; ++a)
    for (std::size_t b = 0; b < 6; ++b) {
      double g = 0.0;
      for (std::size_t i = 0; i < t.units(); ++i) g += static_cast<double>(t.at(i, a)) * t.at(i, b);
      EXPECT_NEAR(d.values()[b * 6 + a], g, 1e-5 * std::max(1.0, std::fabs(g)));
      EXPECT_EQ(d.values()[b * 6 + a], d.values()[a * 6 + b]);
    }
}

TEST(CrossLayerPool, ZeroGuideAnnihilates) {
  Rng rng(6);
  auto local = random_tensor(rng, 3, 3, 4);
  FeatureTensor guide(3, 3, 2, std::vector<float>(18, 0.0f));
  auto d = cross_layer_pool(LayerPair(local, guide));
  for (float v : d.values()) EXPECT_EQ(v, 0.0f);
}

TEST(CrossLayerPool, MatchesOracleOnRandomPairs) {
  Rng rng(7);
  for (int n = 0; n < 150; ++n) {
    auto pair = random_pair(rng, 6, 12);
    auto fast = cross_layer_pool(pair);
    auto slow = cross_layer_pool_oracle(pair);
    ASSERT_EQ(fast.size(), pair.local().depth() * pair.guide().depth());
    EXPECT_LE(rel_error(fast.values(), slow.values()), 1e-6);
  }
}

TEST(CrossLayerPool, ThreeByThreeExampleAgainstOracle) {
  Rng rng(8);
  auto pair = LayerPair(random_tensor(rng, 3, 3, 4), random_tensor(rng, 3, 3, 2));
  auto fast = cross_layer_pool(pair);
  EXPECT_EQ(fast.channels(), 2u);
  EXPECT_EQ(fast.channel_dim(), 4u);
  EXPECT_LE(rel_error(fast.values(), cross_layer_pool_oracle(pair).values()), 1e-6);
}

TEST(CrossLayerPool, IsColumnFlattenedMatrixProduct) {
  // X^T G computed independently as a D_t x D_{t+1} matrix.
  Rng rng(9);
  auto pair = random_pair(rng, 5, 7);
  const auto& x = pair.local();
  const auto& g = pair.guide();
  auto d = cross_layer_pool(pair);
  for (std::size_t r = 0; r < x.depth(); ++r)
    for (std::size_t c = 0; c < g.depth(); ++c) {
      double m = 0.0;
      for (std::size_t i = 0; i < pair.units(); ++i) m += static_cast<double>(x.at(i, r)) * g.at(i, c);
      EXPECT_FLOAT_EQ(d.channel(c)[r], static_cast<float>(m));
    }
}

TEST(CrossLayerPool, EqualsIndicatorPoolingWithGuideMaps) {
  Rng rng(10);
  for (int n = 0; n < 50; ++n) {
    auto h = uniform(rng, 1, 6), w = uniform(rng, 1, 6);
    auto local = random_tensor(rng, h, w, uniform(rng, 1, 8));
    auto guide = relu_tensor(rng, h, w, uniform(rng, 1, 8));
    auto a = cross_layer_pool(LayerPair(local, guide));
    auto b = pool_with_indicators(local, indicator_maps_from(guide));
    EXPECT_LE(rel_error(a.values(), b.values()), 1e-6);
  }
}

TEST(CrossLayerPool, ParallelChannelsMatchSerial) {
  Rng rng(11);
  auto pair = LayerPair(random_tensor(rng, 7, 7, 33), random_tensor(rng, 7, 7, 17));
  EXPECT_EQ(cross_layer_pool(pair, 4), cross_layer_pool(pair, 1));
}

TEST(CrossLayerPool, Bilinearity) {
  Rng rng(12);
  for (int n = 0; n < 50; ++n) {
    auto pair = random_pair(rng, 5, 8);
    float c = std::uniform_real_distribution<float>(-3.0f, 3.0f)(rng);
    auto base_desc = cross_layer_pool(pair);
    auto base = base_desc.values();
    std::vector<float> want(base.begin(), base.end());
    for (auto& v : want) v *= c;
    auto left = cross_layer_pool(LayerPair(scaled(pair.local(), c), pair.guide()));
    auto right = cross_layer_pool(LayerPair(pair.local(), scaled(pair.guide(), c)));
    EXPECT_LE(rel_error(left.values(), want), 1e-6);
    EXPECT_LE(rel_error(right.values(), want), 1e-6);
  }
}

TEST(CrossLayerPool, AdditiveOverSpatialUnits) {
  Rng rng(13);
  for (int n = 0; n < 30; ++n) {
    auto pair = random_pair(rng, 4, 6);
    const auto dl = pair.local().depth(), dg = pair.guide().depth();
    std::vector<double> sum(dl * dg, 0.0);
    for (std::size_t i = 0; i < pair.units(); ++i) {
      auto xl = pair.local().unit(i);
      auto xg = pair.guide().unit(i);
      auto one = cross_layer_pool(LayerPair(FeatureTensor(1, 1, dl, {xl.begin(), xl.end()}),
                                            FeatureTensor(1, 1, dg, {xg.begin(), xg.end()})));
      for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += one.values()[j];
    }
    std::vector<float> sumf(sum.begin(), sum.end());
    EXPECT_LE(rel_error(cross_layer_pool(pair).values(), sumf), 1e-6);
  }
}

TEST(CrossLayerPool, InvariantToSpatialPermutation) {
  Rng rng(14);
  for (int n = 0; n < 30; ++n) {
    auto pair = random_pair(rng, 6, 8);
    std::vector<std::size_t> perm(pair.units());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    auto permute = [&](const FeatureTensor& t) {
      std::vector<float> v;
      for (auto i : perm) v.insert(v.end(), t.unit(i).begin(), t.unit(i).end());
      return FeatureTensor(t.height(), t.width(), t.depth(), v);
    };
    auto a = cross_layer_pool(pair);
    auto b = cross_layer_pool(LayerPair(permute(pair.local()), permute(pair.guide())));
    EXPECT_LE(rel_error(b.values(), a.values()), 1e-6);
  }
}

TEST(Oracle, ScalarCase) {
  auto d = cross_layer_pool_oracle(LayerPair(FeatureTensor(1, 1, 1, {3.0f}), FeatureTensor(1, 1, 1, {-2.5f})));
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d.values()[0], -7.5f);
}

TEST(Oracle, ZeroLocalGivesZero) {
  Rng rng(15);
  auto d = cross_layer_pool_oracle(
      LayerPair(FeatureTensor(2, 3, 4, std::vector<float>(24, 0.0f)), random_tensor(rng, 2, 3, 5)));
  for (float v : d.values()) EXPECT_EQ(v, 0.0f);
}

TEST(MaxChannelPool, SingleUnitEqualsSumPooling) {
  Rng rng(16);
  auto pair = LayerPair(random_tensor(rng, 1, 1, 6), random_tensor(rng, 1, 1, 4));
  EXPECT_EQ(max_channel_pool(pair), cross_layer_pool(pair));
}

TEST(MaxChannelPool, OneHotGuidePicksSelectedUnit) {
  Rng rng(17);
  auto local = relu_tensor(rng, 2, 2, 3);
  // Channel k is 2.0 at unit k only.
  std::vector<float> g(4 * 4, 0.0f);
  for (std::size_t k = 0; k < 4; ++k) g[k * 4 + k] = 2.0f;
  auto d = max_channel_pool(LayerPair(local, FeatureTensor(2, 2, 4, g)));
  for (std::size_t k = 0; k < 4; ++k)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(d.channel(k)[j], 2.0f * local.at(k, j));
}

TEST(MaxChannelPool, MatchesNaiveMaxExactly) {
  Rng rng(18);
  for (int n = 0; n < 50; ++n) {
    auto pair = LayerPair(random_tensor(rng, 2, 2, uniform(rng, 1, 6)), random_tensor(rng, 2, 2, uniform(rng, 1, 6)));
    auto got = max_channel_pool(pair);
    auto want = naive_max_pool(pair);
    EXPECT_TRUE(std::equal(want.begin(), want.end(), got.values().begin()));
  }
}

TEST(Descriptor, ChannelAddressing) {
  Descriptor d(3, 2, {0, 1, 2, 3, 4, 5});
  EXPECT_EQ(d.channel(1)[0], 2.0f);
  EXPECT_EQ(d.channel(2)[1], 5.0f);
  EXPECT_THROW(d.channel(3), ShapeError);
  EXPECT_THROW(Descriptor(2, 2, {1, 2, 3}), ShapeError);
  EXPECT_THROW(Descriptor(1, 1, {std::numeric_limits<float>::infinity()}), SchemaError);
}
