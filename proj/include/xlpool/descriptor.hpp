#ifndef XLPOOL_DESCRIPTOR_HPP_
#define XLPOOL_DESCRIPTOR_HPP_

#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "xlpool/error.hpp"

namespace xlpool {

// A run of `channels` consecutive subvectors, each `channel_dim` long.
struct DescriptorPart {
  std::size_t channels = 0;
  std::size_t channel_dim = 0;
  friend bool operator==(const DescriptorPart&, const DescriptorPart&) = default;
};

/**
 * Pooled image representation with its channel structure retained.
 *
 * Values are channel-major: every subvector P_k is contiguous. A descriptor
 * produced by pooling has a single part (K channels of dimension d). Concatenating
 * descriptors with different channel dimensions yields several parts; adjacent
 * parts with equal channel_dim are merged.
 */
class Descriptor {
 public:
  Descriptor() = default;

  Descriptor(std::size_t channels, std::size_t channel_dim)
      : Descriptor(channels, channel_dim, std::vector<float>(channels * channel_dim, 0.0f)) {}

  Descriptor(std::size_t channels, std::size_t channel_dim, std::vector<float> values)
      : Descriptor(std::vector<DescriptorPart>{{channels, channel_dim}}, std::move(values)) {}

  Descriptor(std::vector<DescriptorPart> parts, std::vector<float> values)
      : values_(std::move(values)) {
    std::size_t expected = 0;
    for (const auto& p : parts) {
      if (p.channels == 0 || p.channel_dim == 0)
        throw ShapeError("descriptor part must have positive channels and channel_dim");
      expected += p.channels * p.channel_dim;
      append_part(p);
    }
    if (expected != values_.size())
      throw ShapeError("descriptor layout needs " + std::to_string(expected) + " values, got " +
                       std::to_string(values_.size()));
    for (std::size_t j = 0; j < values_.size(); ++j)
      if (!std::isfinite(values_[j]))
        throw SchemaError("descriptor value at index " + std::to_string(j) + " is not finite");
  }

  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }
  std::span<const float> values() const { return values_; }
  std::span<float> mutable_values() { return values_; }
  const std::vector<DescriptorPart>& parts() const { return parts_; }

  bool is_uniform() const { return parts_.size() <= 1; }

  std::size_t channels() const {
    std::size_t k = 0;
    for (const auto& p : parts_) k += p.channels;
    return k;
  }

  // Subvector length; only meaningful for single-part descriptors.
  std::size_t channel_dim() const {
    if (parts_.empty()) return 0;
    if (!is_uniform()) throw ShapeError("descriptor has mixed channel dimensions");
    return parts_.front().channel_dim;
  }

  std::span<const float> channel(std::size_t k) const {
    auto [offset, len] = locate(k);
    return std::span<const float>(values_).subspan(offset, len);
  }
  std::span<float> channel(std::size_t k) {
    auto [offset, len] = locate(k);
    return std::span<float>(values_).subspan(offset, len);
  }

  friend bool operator==(const Descriptor&, const Descriptor&) = default;

 private:
  friend Descriptor concat_layers(const Descriptor& a, const Descriptor& b);

  void append_part(DescriptorPart p) {
    if (!parts_.empty() && parts_.back().channel_dim == p.channel_dim)
      parts_.back().channels += p.channels;
    else
      parts_.push_back(p);
  }

  std::pair<std::size_t, std::size_t> locate(std::size_t k) const {
    std::size_t offset = 0;
    for (const auto& p : parts_) {
      if (k < p.channels) return {offset + k * p.channel_dim, p.channel_dim};
      k -= p.channels;
      offset += p.channels * p.channel_dim;
    }
    throw ShapeError("channel index out of range");
  }

  std::vector<DescriptorPart> parts_;
  std::vector<float> values_;
};

// Concatenation a ++ b, keeping each operand's channel layout.
inline Descriptor concat_layers(const Descriptor& a, const Descriptor& b) {
  Descriptor out = a;
  out.values_.insert(out.values_.end(), b.values_.begin(), b.values_.end());
  for (const auto& p : b.parts_) out.append_part(p);
  return out;
}

inline double dot(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size())
    throw ShapeError("dot: lengths differ (" + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()) + ")");
  double acc = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) acc += static_cast<double>(a[j]) * b[j];
  return acc;
}

}  // namespace xlpool

#endif  // XLPOOL_DESCRIPTOR_HPP_
