#ifndef XLPOOL_POSTPROCESS_HPP_
#define XLPOOL_POSTPROCESS_HPP_

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "xlpool/descriptor.hpp"
#include "xlpool/pca.hpp"
#include "xlpool/pooling.hpp"
#include "xlpool/signvec.hpp"
#include "xlpool/tensor.hpp"

namespace xlpool {

// Channels with norm at or below this are left untouched (stay zero).
inline constexpr double kZeroChannelEps = 1e-12;

inline Descriptor normalize_channels(Descriptor desc) {
  for (std::size_t k = 0; k < desc.channels(); ++k) {
    auto ch = desc.channel(k);
    double sq = 0.0;
    for (float v : ch) sq += static_cast<double>(v) * v;
    double norm = std::sqrt(sq);
    if (norm <= kZeroChannelEps) continue;
    for (float& v : ch) v = static_cast<float>(v / norm);
  }
  return desc;
}

// sign(v) * sqrt(|v|), elementwise.
inline Descriptor power_normalize(Descriptor desc) {
  for (float& v : desc.mutable_values()) v = std::copysign(std::sqrt(std::fabs(v)), v);
  return desc;
}

inline std::int8_t sign_of(float v) {
  return v > 0.0f ? std::int8_t{1} : (v < 0.0f ? std::int8_t{-1} : std::int8_t{0});
}

// Elementwise sign into {-1, 0, +1}; exact zeros (either signed zero) map to 0.
inline SignVector sign_quantize(const Descriptor& desc) {
  SignVector out(desc.channels(), desc.channel_dim());
  auto values = desc.values();
  for (std::size_t j = 0; j < values.size(); ++j)
    if (auto t = sign_of(values[j])) out.set(j, t);
  return out;
}

enum class ChannelPooling { sum, max };

// Stage toggles; PCA is on when a model is passed to standard_pipeline.
struct PipelineOptions {
  bool l2 = true;
  bool power = true;
  ChannelPooling pooling = ChannelPooling::sum;
  unsigned jobs = 1;
};

/**
 * PCA on local features -> cross-layer pooling -> per-channel l2 -> power
 * normalization, in exactly that order. Every stage can be switched off;
 * with everything off this is plain cross_layer_pool.
 */
inline Descriptor standard_pipeline(const LayerPair& pair, const PcaModel* pca,
                                    const PipelineOptions& opts = {}) {
  auto pool = [&](const LayerPair& p) {
    return opts.pooling == ChannelPooling::max ? max_channel_pool(p, opts.jobs)
                                               : cross_layer_pool(p, opts.jobs);
  };
  Descriptor desc = pca ? pool(LayerPair(pca_apply(*pca, pair.local()), pair.guide())) : pool(pair);
  if (opts.l2) desc = normalize_channels(std::move(desc));
  if (opts.power) desc = power_normalize(std::move(desc));
  return desc;
}

inline Descriptor standard_pipeline(const LayerPair& pair, const std::optional<PcaModel>& pca,
                                    const PipelineOptions& opts = {}) {
  return standard_pipeline(pair, pca ? &*pca : nullptr, opts);
}

}  // namespace xlpool

#endif  // XLPOOL_POSTPROCESS_HPP_
