#ifndef XLPOOL_SELFTEST_HPP_
#define XLPOOL_SELFTEST_HPP_

// Oracle-equivalence checks runnable from the CLI. Everything is driven by
// one seed so the report text is reproducible.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "xlpool/npy.hpp"
#include "xlpool/pooling.hpp"
#include "xlpool/retrieval.hpp"
#include "xlpool/tensor.hpp"

namespace xlpool {

struct SelftestCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct SelftestReport {
  std::vector<SelftestCheck> checks;

  bool all_passed() const {
    for (const auto& c : checks)
      if (!c.passed) return false;
    return true;
  }

  std::string text() const {
    std::ostringstream os;
    for (const auto& c : checks)
      os << (c.passed ? "PASS" : "FAIL") << "  " << c.name << "  " << c.detail << "\n";
    os << (all_passed() ? "all checks passed" : "SELFTEST FAILED") << "\n";
    return os.str();
  }
};

namespace detail {

inline FeatureTensor random_tensor(std::mt19937_64& rng, std::size_t h, std::size_t w, std::size_t d) {
  std::normal_distribution<float> dist(0.0f, 1.0f);
  std::vector<float> v(h * w * d);
  for (auto& x : v) x = dist(rng);
  return FeatureTensor(h, w, d, std::move(v));
}

inline std::size_t uniform_size(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline double max_relative_error(std::span<const float> got, std::span<const float> want) {
  double diff = 0.0, scale = 0.0;
  for (std::size_t j = 0; j < want.size(); ++j) {
    diff = std::max(diff, std::fabs(static_cast<double>(got[j]) - want[j]));
    scale = std::max(scale, std::fabs(static_cast<double>(want[j])));
  }
  return scale == 0.0 ? diff : diff / scale;
}

inline SignVector random_trits(std::mt19937_64& rng, std::size_t k, std::size_t d) {
  std::uniform_int_distribution<int> dist(-1, 1);
  std::vector<std::int8_t> t(k * d);
  for (auto& x : t) x = static_cast<std::int8_t>(dist(rng));
  return SignVector::from_trits(k, d, t);
}

}  // namespace detail

inline SelftestReport run_selftest(std::uint64_t seed,
                                   const std::optional<std::filesystem::path>& fixture = std::nullopt) {
  SelftestReport report;
  std::mt19937_64 rng(seed);

  {
    constexpr int kPairs = 100;
    int bad = 0;
    double worst = 0.0;
    for (int n = 0; n < kPairs; ++n) {
      auto h = detail::uniform_size(rng, 1, 8), w = detail::uniform_size(rng, 1, 8);
      auto pair = LayerPair(detail::random_tensor(rng, h, w, detail::uniform_size(rng, 1, 24)),
                            detail::random_tensor(rng, h, w, detail::uniform_size(rng, 1, 24)));
      auto fast = cross_layer_pool(pair);
      auto slow = cross_layer_pool_oracle(pair);
      double err = detail::max_relative_error(fast.values(), slow.values());
      worst = std::max(worst, err);
      if (err > 1e-6 || fast.size() != pair.local().depth() * pair.guide().depth()) ++bad;
    }
    std::ostringstream d;
    d << kPairs << " pairs, " << bad << " failures";
    report.checks.push_back({"cross_layer_pool == triple-loop oracle", bad == 0, d.str()});
  }

  {
    constexpr int kCases = 2000;
    int bad = 0;
    for (int n = 0; n < kCases; ++n) {
      auto k = detail::uniform_size(rng, 1, 16), d = detail::uniform_size(rng, 1, 150);
      auto q = detail::random_trits(rng, k, d), r = detail::random_trits(rng, k, d);
      std::vector<std::size_t> s;
      for (std::size_t c = 0; c < k; ++c)
        if (rng() & 1u) s.push_back(c);
      std::int64_t naive = 0;
      auto qt = q.trits(), rt = r.trits();
      for (auto c : s)
        for (std::size_t j = 0; j < d; ++j) naive += qt[c * d + j] * rt[c * d + j];
      if (similarity(q, r, s) != naive) ++bad;
    }
    std::ostringstream d;
    d << kCases << " triples, " << bad << " mismatches";
    report.checks.push_back({"packed trit similarity == unpacked dot", bad == 0, d.str()});
  }

  {
    constexpr int kTensors = 20;
    int bad = 0;
    for (int n = 0; n < kTensors; ++n) {
      auto t = detail::random_tensor(rng, detail::uniform_size(rng, 1, 6),
                                     detail::uniform_size(rng, 1, 6), detail::uniform_size(rng, 1, 9));
      std::vector<std::size_t> shape{t.height(), t.width(), t.depth()};
      auto back = tensor_from_npy(decode_npy(encode_npy(shape, t.data())));
      if (!(back == t)) ++bad;
    }
    std::ostringstream d;
    d << kTensors << " tensors, " << bad << " mismatches";
    report.checks.push_back({"npy encode/decode bit-exact", bad == 0, d.str()});
  }

  {
    GalleryIndex index;
    auto k = detail::uniform_size(rng, 1, 12), d = detail::uniform_size(rng, 1, 40);
    for (int n = 0; n < 20; ++n) {
      ChannelStats st;
      st.mean.resize(k);
      for (auto& v : st.mean) v = std::uniform_real_distribution<float>(0.0f, 2.0f)(rng);
      index.add({"img" + std::to_string(n), detail::random_trits(rng, k, d), st});
    }
    auto bytes = encode_index(index);
    bool ok = false;
    try {
      ok = encode_index(decode_index(bytes)) == bytes;
    } catch (const Error&) {
    }
    report.checks.push_back({"index save/load byte-identical", ok, "20 entries"});
  }

  if (fixture) {
    bool ok = false;
    std::string detail_text;
    try {
      auto bytes = detail::read_file_bytes(*fixture);
      auto index = decode_index(bytes);
      ok = encode_index(index) == bytes;
      detail_text = std::to_string(index.size()) + " entries";
      if (!ok) detail_text += ", re-encoded bytes differ";
    } catch (const Error& e) {
      detail_text = e.what();
    }
    report.checks.push_back({"fixture index round-trip", ok, detail_text});
  }
  return report;
}

}  // namespace xlpool

#endif  // XLPOOL_SELFTEST_HPP_
