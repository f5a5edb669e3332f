#ifndef XLPOOL_SPM_HPP_
#define XLPOOL_SPM_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "xlpool/descriptor.hpp"
#include "xlpool/error.hpp"
#include "xlpool/postprocess.hpp"
#include "xlpool/tensor.hpp"

namespace xlpool {

// Spatial pyramid: level 0 = {1x1}, level 1 = {1x1, 2x2}, level 2 = {1x1, 2x2, 4x4}.
class SpmConfig {
 public:
  explicit SpmConfig(int level) : level_(level) {
    if (level < 0 || level > 2)
      throw ArgumentError("spm level must be 0, 1 or 2, got " + std::to_string(level));
  }

  int level() const { return level_; }

  std::vector<std::size_t> grids() const {
    std::vector<std::size_t> g;
    for (int l = 0; l <= level_; ++l) g.push_back(std::size_t{1} << l);
    return g;
  }

  std::size_t cells() const {
    std::size_t c = 0;
    for (auto g : grids()) c += g * g;
    return c;
  }

 private:
  int level_;
};

enum class SpmMethod { max, sum_sqrt };

// Grid cell of unit (row, col) in a g x g partition: floor(row*g/H), floor(col*g/W).
inline std::size_t spm_cell(std::size_t row, std::size_t col, std::size_t g, std::size_t height,
                            std::size_t width) {
  return (row * g / height) * g + (col * g / width);
}

/**
 * Single-layer baseline: pools each pyramid cell (elementwise max, or sum
 * followed by sign*sqrt) and concatenates cells grid by grid, row-major
 * within a grid. Output is cells x D. Empty cells (H or W smaller than the
 * grid) pool to zeros, which assumes post-ReLU input for the max case.
 */
inline Descriptor spm_pool(const FeatureTensor& t, SpmConfig cfg, SpmMethod method, bool l2 = false) {
  const std::size_t d = t.depth();
  std::vector<float> out;
  out.reserve(cfg.cells() * d);
  for (std::size_t g : cfg.grids()) {
    std::vector<double> acc(g * g * d, 0.0);
    std::vector<bool> seen(g * g, false);
    for (std::size_t r = 0; r < t.height(); ++r) {
      for (std::size_t c = 0; c < t.width(); ++c) {
        std::size_t cell = spm_cell(r, c, g, t.height(), t.width());
        double* p = acc.data() + cell * d;
        auto x = t.unit(r, c);
        for (std::size_t j = 0; j < d; ++j) {
          if (method == SpmMethod::sum_sqrt)
            p[j] += x[j];
          else
            p[j] = seen[cell] ? std::max(p[j], static_cast<double>(x[j])) : x[j];
        }
        seen[cell] = true;
      }
    }
    for (double v : acc) {
      if (method == SpmMethod::sum_sqrt) v = std::copysign(std::sqrt(std::fabs(v)), v);
      out.push_back(static_cast<float>(v));
    }
  }
  Descriptor desc(cfg.cells(), d, std::move(out));
  if (l2) {
    double sq = 0.0;
    for (float v : desc.values()) sq += static_cast<double>(v) * v;
    double norm = std::sqrt(sq);
    if (norm > kZeroChannelEps)
      for (float& v : desc.mutable_values()) v = static_cast<float>(v / norm);
  }
  return desc;
}

}  // namespace xlpool

#endif  // XLPOOL_SPM_HPP_
