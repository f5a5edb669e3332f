#ifndef XLPOOL_SIGNVEC_HPP_
#define XLPOOL_SIGNVEC_HPP_

#include <bit>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xlpool/error.hpp"

namespace xlpool {

/**
 * A {-1, 0, +1} vector with K channels of d trits, held as two bitplanes
 * per channel: `mask` (trit != 0) and `sign` (trit == -1). Each channel
 * starts on a fresh 64-bit word so channel subsets can be scored without
 * shifting.
 *
 * The serialized payload packs 2 bits per dimension in flat dimension order,
 * four dimensions per byte starting at the low bits: 00 = 0, 01 = +1,
 * 11 = -1, 10 is reserved. Unused bits of the last byte are zero.
 */
class SignVector {
 public:
  SignVector() = default;

  SignVector(std::size_t channels, std::size_t channel_dim)
      : channels_(channels),
        channel_dim_(channel_dim),
        words_(words_for(channel_dim)),
        mask_(channels * words_, 0),
        sign_(channels * words_, 0) {}

  static SignVector from_trits(std::size_t channels, std::size_t channel_dim,
                               std::span<const std::int8_t> trits) {
    if (trits.size() != channels * channel_dim)
      throw ShapeError("trit vector length " + std::to_string(trits.size()) + " != " +
                       std::to_string(channels) + "*" + std::to_string(channel_dim));
    SignVector v(channels, channel_dim);
    for (std::size_t j = 0; j < trits.size(); ++j) {
      if (trits[j] < -1 || trits[j] > 1)
        throw ArgumentError("trit value out of {-1,0,1} at index " + std::to_string(j));
      v.set(j, trits[j]);
    }
    return v;
  }

  std::size_t channels() const { return channels_; }
  std::size_t channel_dim() const { return channel_dim_; }
  std::size_t size() const { return channels_ * channel_dim_; }
  std::size_t words_per_channel() const { return words_; }

  std::span<const std::uint64_t> mask(std::size_t k) const {
    return std::span<const std::uint64_t>(mask_).subspan(k * words_, words_);
  }
  std::span<const std::uint64_t> sign(std::size_t k) const {
    return std::span<const std::uint64_t>(sign_).subspan(k * words_, words_);
  }

  std::int8_t trit(std::size_t j) const {
    auto [w, bit] = address(j);
    if (!((mask_[w] >> bit) & 1u)) return 0;
    return ((sign_[w] >> bit) & 1u) ? std::int8_t{-1} : std::int8_t{1};
  }

  void set(std::size_t j, std::int8_t t) {
    auto [w, bit] = address(j);
    std::uint64_t b = std::uint64_t{1} << bit;
    mask_[w] = t != 0 ? (mask_[w] | b) : (mask_[w] & ~b);
    sign_[w] = t < 0 ? (sign_[w] | b) : (sign_[w] & ~b);
  }

  std::vector<std::int8_t> trits() const {
    std::vector<std::int8_t> out(size());
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = trit(j);
    return out;
  }

  std::size_t nonzero_count() const {
    std::size_t n = 0;
    for (auto w : mask_) n += static_cast<std::size_t>(std::popcount(w));
    return n;
  }

  static std::size_t payload_bytes(std::size_t channels, std::size_t channel_dim) {
    return (channels * channel_dim + 3) / 4;
  }

  std::string encode_payload() const {
    std::string out(payload_bytes(channels_, channel_dim_), '\0');
    for (std::size_t j = 0; j < size(); ++j) {
      std::int8_t t = trit(j);
      unsigned code = t == 0 ? 0u : (t > 0 ? 1u : 3u);
      out[j / 4] = static_cast<char>(static_cast<unsigned char>(out[j / 4]) | (code << (2 * (j % 4))));
    }
    return out;
  }

  static SignVector decode_payload(std::size_t channels, std::size_t channel_dim,
                                   std::string_view bytes) {
    if (bytes.size() != payload_bytes(channels, channel_dim))
      throw FormatError("trit payload has " + std::to_string(bytes.size()) + " bytes, expected " +
                        std::to_string(payload_bytes(channels, channel_dim)));
    SignVector v(channels, channel_dim);
    const std::size_t n = channels * channel_dim;
    for (std::size_t b = 0; b < bytes.size(); ++b) {
      auto byte = static_cast<unsigned char>(bytes[b]);
      for (std::size_t s = 0; s < 4; ++s) {
        unsigned code = (byte >> (2 * s)) & 3u;
        std::size_t j = b * 4 + s;
        if (j >= n) {
          if (code != 0) throw FormatError("trit payload padding bits are not zero");
          continue;
        }
        if (code == 2u)
          throw FormatError("reserved trit code 10 at dimension " + std::to_string(j));
        if (code) v.set(j, code == 1u ? std::int8_t{1} : std::int8_t{-1});
      }
    }
    return v;
  }

  friend bool operator==(const SignVector&, const SignVector&) = default;

 private:
  static std::size_t words_for(std::size_t d) { return (d + 63) / 64; }

  std::pair<std::size_t, unsigned> address(std::size_t j) const {
    std::size_t k = j / channel_dim_, r = j % channel_dim_;
    return {k * words_ + r / 64, static_cast<unsigned>(r % 64)};
  }

  std::size_t channels_ = 0;
  std::size_t channel_dim_ = 0;
  std::size_t words_ = 0;
  std::vector<std::uint64_t> mask_;
  std::vector<std::uint64_t> sign_;
};

}  // namespace xlpool

#endif  // XLPOOL_SIGNVEC_HPP_
