#ifndef XLPOOL_POOLING_HPP_
#define XLPOOL_POOLING_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "xlpool/descriptor.hpp"
#include "xlpool/error.hpp"
#include "xlpool/parallel.hpp"
#include "xlpool/tensor.hpp"

namespace xlpool {

/**
 * K pooling weight maps over N spatial units. weight(k, i) is the membership
 * of local feature i in channel k; binary maps are the ROI case, real-valued
 * maps the soft generalization. Weights are finite and nonnegative.
 */
class IndicatorMaps {
 public:
  IndicatorMaps(std::size_t count, std::size_t units, std::vector<float> weights)
      : count_(count), units_(units), weights_(std::move(weights)) {
    if (count_ == 0 || units_ == 0) throw ShapeError("indicator maps need count > 0 and units > 0");
    if (weights_.size() != count_ * units_)
      throw ShapeError("indicator maps: expected " + std::to_string(count_ * units_) +
                       " weights, got " + std::to_string(weights_.size()));
    for (float w : weights_)
      if (!std::isfinite(w) || w < 0.0f)
        throw SchemaError("indicator weights must be finite and >= 0");
  }

  std::size_t count() const { return count_; }
  std::size_t units() const { return units_; }
  float weight(std::size_t k, std::size_t i) const { return weights_[k * units_ + i]; }
  std::span<const float> map(std::size_t k) const {
    return std::span<const float>(weights_).subspan(k * units_, units_);
  }

 private:
  std::size_t count_, units_;
  std::vector<float> weights_;
};

// The guide layer's D_{t+1} feature maps used directly as indicator maps.
inline IndicatorMaps indicator_maps_from(const FeatureTensor& guide) {
  std::size_t n = guide.units(), k_count = guide.depth();
  std::vector<float> w(k_count * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < k_count; ++k) w[k * n + i] = guide.at(i, k);
  return IndicatorMaps(k_count, n, std::move(w));
}

namespace detail {

inline std::vector<float> round_to_float(const std::vector<double>& acc) {
  return std::vector<float>(acc.begin(), acc.end());
}

}  // namespace detail

// P_k = sum_i x_i * I(i, k).
inline Descriptor pool_with_indicators(const FeatureTensor& local, const IndicatorMaps& maps) {
  if (maps.units() != local.units())
    throw ShapeError("indicator maps cover " + std::to_string(maps.units()) +
                     " units but tensor " + local.shape_string() + " has " +
                     std::to_string(local.units()));
  std::size_t d = local.depth();
  std::vector<double> acc(maps.count() * d, 0.0);
  for (std::size_t k = 0; k < maps.count(); ++k) {
    double* p = acc.data() + k * d;
    for (std::size_t i = 0; i < local.units(); ++i) {
      double w = maps.weight(k, i);
      if (w == 0.0) continue;
      auto x = local.unit(i);
      for (std::size_t j = 0; j < d; ++j) p[j] += w * x[j];
    }
  }
  return Descriptor(maps.count(), d, detail::round_to_float(acc));
}

/**
 * Cross-layer pooling: P_k = sum_i x_i^t * x_{i,k}^{t+1} for every guide
 * channel k, concatenated channel-major into a D_{t+1} * D_t descriptor.
 * Equivalently the D_t x D_{t+1} matrix X^T G flattened column by column.
 *
 * Each channel accumulates in double over spatial units in index order and
 * is rounded to float once; channels are independent and may be split
 * across `jobs` threads without changing the result.
 */
inline Descriptor cross_layer_pool(const LayerPair& pair, unsigned jobs = 1) {
  const auto& local = pair.local();
  const auto& guide = pair.guide();
  const std::size_t n = pair.units(), d = local.depth(), k_count = guide.depth();
  std::vector<double> acc(k_count * d, 0.0);
  auto lx = local.data();
  auto gx = guide.data();
  parallel_for(k_count, jobs, [&](std::size_t k) {
    double* p = acc.data() + k * d;
    for (std::size_t i = 0; i < n; ++i) {
      double w = gx[i * k_count + k];
      if (w == 0.0) continue;
      const float* x = lx.data() + i * d;
      for (std::size_t j = 0; j < d; ++j) p[j] += w * x[j];
    }
  });
  return Descriptor(k_count, d, detail::round_to_float(acc));
}

// Literal triple loop over (unit, channel, dimension). Reference for tests
// and selftest; use cross_layer_pool for real work.
inline Descriptor cross_layer_pool_oracle(const LayerPair& pair) {
  const auto& local = pair.local();
  const auto& guide = pair.guide();
  const std::size_t d = local.depth(), k_count = guide.depth();
  std::vector<double> acc(k_count * d, 0.0);
  for (std::size_t i = 0; i < pair.units(); ++i)
    for (std::size_t k = 0; k < k_count; ++k)
      for (std::size_t j = 0; j < d; ++j)
        acc[k * d + j] += static_cast<double>(local.at(i, j)) * static_cast<double>(guide.at(i, k));
  return Descriptor(k_count, d, detail::round_to_float(acc));
}

// Sum replaced by max: P_k[j] = max_i x_i^t[j] * x_{i,k}^{t+1}.
inline Descriptor max_channel_pool(const LayerPair& pair, unsigned jobs = 1) {
  const auto& local = pair.local();
  const auto& guide = pair.guide();
  const std::size_t n = pair.units(), d = local.depth(), k_count = guide.depth();
  std::vector<double> best(k_count * d);
  parallel_for(k_count, jobs, [&](std::size_t k) {
    double* p = best.data() + k * d;
    for (std::size_t i = 0; i < n; ++i) {
      double w = guide.at(i, k);
      auto x = local.unit(i);
      for (std::size_t j = 0; j < d; ++j) {
        double v = w * x[j];
        p[j] = (i == 0) ? v : std::max(p[j], v);
      }
    }
  });
  return Descriptor(k_count, d, detail::round_to_float(best));
}

}  // namespace xlpool

#endif  // XLPOOL_POOLING_HPP_
