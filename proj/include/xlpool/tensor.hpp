#ifndef XLPOOL_TENSOR_HPP_
#define XLPOOL_TENSOR_HPP_

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "xlpool/error.hpp"
#include "xlpool/npy.hpp"

namespace xlpool {

/**
 * An H x W x D activation grid of one convolutional layer, stored row-major
 * with depth innermost, so the D-dimensional feature vector of spatial unit
 * i = row * W + col is the contiguous slice [i * D, (i + 1) * D).
 *
 * Immutable after construction. The constructor validates shape, finiteness
 * and, when `nonneg` is set, that every activation is >= 0.
 */
class FeatureTensor {
 public:
  FeatureTensor(std::size_t height, std::size_t width, std::size_t depth, std::vector<float> data,
                bool nonneg = false)
      : height_(height), width_(width), depth_(depth), nonneg_(nonneg), data_(std::move(data)) {
    if (height_ == 0 || width_ == 0 || depth_ == 0)
      throw ShapeError("tensor dimensions must be positive, got " + shape_string());
    if (data_.size() != height_ * width_ * depth_)
      throw ShapeError("tensor " + shape_string() + " needs " +
                       std::to_string(height_ * width_ * depth_) + " values, got " +
                       std::to_string(data_.size()));
    for (std::size_t j = 0; j < data_.size(); ++j) {
      if (!std::isfinite(data_[j]))
        throw SchemaError("tensor value at flat index " + std::to_string(j) + " is not finite");
      if (nonneg_ && data_[j] < 0.0f)
        throw SchemaError("tensor flagged nonneg has negative value at flat index " +
                          std::to_string(j));
    }
  }

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t depth() const { return depth_; }
  // N = H * W, the number of local features.
  std::size_t units() const { return height_ * width_; }
  bool nonneg() const { return nonneg_; }

  std::span<const float> data() const { return data_; }

  std::span<const float> unit(std::size_t i) const {
    return std::span<const float>(data_).subspan(i * depth_, depth_);
  }
  std::span<const float> unit(std::size_t row, std::size_t col) const {
    return unit(row * width_ + col);
  }
  float at(std::size_t i, std::size_t k) const { return data_[i * depth_ + k]; }

  std::string shape_string() const {
    return std::to_string(height_) + "x" + std::to_string(width_) + "x" + std::to_string(depth_);
  }

  friend bool operator==(const FeatureTensor&, const FeatureTensor&) = default;

 private:
  std::size_t height_, width_, depth_;
  bool nonneg_;
  std::vector<float> data_;
};

inline FeatureTensor tensor_from_npy(NpyArray arr, bool nonneg = false) {
  if (arr.shape.size() != 3)
    throw SchemaError("tensor rank must be 3 ([H, W, D]), got rank " +
                      std::to_string(arr.shape.size()));
  return FeatureTensor(arr.shape[0], arr.shape[1], arr.shape[2], std::move(arr.data), nonneg);
}

inline FeatureTensor load_tensor(const std::filesystem::path& path, bool nonneg = false) {
  try {
    return tensor_from_npy(read_npy(path), nonneg);
  } catch (const IoError&) {
    throw;
  } catch (const SchemaError& e) {
    throw SchemaError(path.string() + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

inline void save_tensor(const std::filesystem::path& path, const FeatureTensor& t) {
  write_npy(path, {t.height(), t.width(), t.depth()}, t.data());
}

// The N = H * W local features in row-major spatial order.
inline std::vector<std::span<const float>> spatial_units(const FeatureTensor& t) {
  std::vector<std::span<const float>> out;
  out.reserve(t.units());
  for (std::size_t i = 0; i < t.units(); ++i) out.push_back(t.unit(i));
  return out;
}

// Two layers sharing a spatial unit layout. `local` supplies the pooled
// features (layer t), `guide` the per-channel pooling weights (layer t+1).
class LayerPair {
 public:
  LayerPair(FeatureTensor local, FeatureTensor guide)
      : local_(std::move(local)), guide_(std::move(guide)) {
    if (local_.height() != guide_.height() || local_.width() != guide_.width())
      throw PairingError("spatial layouts differ: local " + local_.shape_string() + " vs guide " +
                         guide_.shape_string());
  }

  const FeatureTensor& local() const { return local_; }
  const FeatureTensor& guide() const { return guide_; }
  std::size_t units() const { return local_.units(); }

 private:
  FeatureTensor local_;
  FeatureTensor guide_;
};

inline LayerPair pair_layers(FeatureTensor local, FeatureTensor guide) {
  return LayerPair(std::move(local), std::move(guide));
}

}  // namespace xlpool

#endif  // XLPOOL_TENSOR_HPP_
