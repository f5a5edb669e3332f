#ifndef XLPOOL_RETRIEVAL_HPP_
#define XLPOOL_RETRIEVAL_HPP_

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "xlpool/descriptor.hpp"
#include "xlpool/error.hpp"
#include "xlpool/npy.hpp"
#include "xlpool/parallel.hpp"
#include "xlpool/pca.hpp"
#include "xlpool/postprocess.hpp"
#include "xlpool/signvec.hpp"
#include "xlpool/tensor.hpp"

namespace xlpool {

// Mean activation of each guide feature map over the spatial units.
struct ChannelStats {
  std::vector<float> mean;
  std::size_t size() const { return mean.size(); }
  friend bool operator==(const ChannelStats&, const ChannelStats&) = default;
};

inline ChannelStats channel_stats(const FeatureTensor& guide) {
  const std::size_t k_count = guide.depth();
  std::vector<double> acc(k_count, 0.0);
  for (std::size_t i = 0; i < guide.units(); ++i) {
    auto g = guide.unit(i);
    for (std::size_t k = 0; k < k_count; ++k) acc[k] += g[k];
  }
  ChannelStats s;
  s.mean.resize(k_count);
  for (std::size_t k = 0; k < k_count; ++k)
    s.mean[k] = static_cast<float>(acc[k] / static_cast<double>(guide.units()));
  return s;
}

// Indices of the k largest means (lower index wins ties), ascending.
inline std::vector<std::size_t> select_channels(const ChannelStats& stats, std::size_t k) {
  if (k < 1 || k > stats.size())
    throw ArgumentError("k_channels must be in [1, " + std::to_string(stats.size()) + "], got " +
                        std::to_string(k));
  std::vector<std::size_t> idx(stats.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (stats.mean[a] != stats.mean[b]) return stats.mean[a] > stats.mean[b];
                      return a < b;
                    });
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

inline std::vector<std::size_t> all_channels(std::size_t k_count) {
  std::vector<std::size_t> s(k_count);
  std::iota(s.begin(), s.end(), std::size_t{0});
  return s;
}

namespace detail {

inline void check_channel_set(std::span<const std::size_t> channels, std::size_t k_count) {
  for (auto k : channels)
    if (k >= k_count)
      throw ShapeError("channel " + std::to_string(k) + " out of range for K=" +
                       std::to_string(k_count));
}

}  // namespace detail

/**
 * Sum over k in S of <q_k, r_k> for trit vectors, computed on bitplanes:
 * positions where both are nonzero contribute +1 when signs agree and -1
 * when they differ. Exact integer result.
 */
inline std::int64_t similarity(const SignVector& q, const SignVector& r,
                               std::span<const std::size_t> channels) {
  if (q.channels() != r.channels() || q.channel_dim() != r.channel_dim())
    throw ShapeError("similarity: trit vectors have different shapes");
  detail::check_channel_set(channels, q.channels());
  std::int64_t score = 0;
  const std::size_t words = q.words_per_channel();
  for (auto k : channels) {
    const std::uint64_t* mq = q.mask(k).data();
    const std::uint64_t* mr = r.mask(k).data();
    const std::uint64_t* sq = q.sign(k).data();
    const std::uint64_t* sr = r.sign(k).data();
    for (std::size_t w = 0; w < words; ++w) {
      std::uint64_t both = mq[w] & mr[w];
      std::uint64_t differ = sq[w] ^ sr[w];
      score += std::popcount(both & ~differ);
      score -= std::popcount(both & differ);
    }
  }
  return score;
}

inline double similarity(const Descriptor& q, const Descriptor& r,
                         std::span<const std::size_t> channels) {
  if (q.parts() != r.parts()) throw ShapeError("similarity: descriptors have different layouts");
  detail::check_channel_set(channels, q.channels());
  double score = 0.0;
  for (auto k : channels) score += dot(q.channel(k), r.channel(k));
  return score;
}

struct IndexEntry {
  std::string image_id;
  SignVector code;
  ChannelStats stats;
  friend bool operator==(const IndexEntry&, const IndexEntry&) = default;
};

/**
 * Gallery of binarized descriptors plus the guide-layer channel stats of each
 * image. All entries share (K, d); ids are unique. An empty index has
 * K = d = 0 until the first entry fixes the shape.
 */
class GalleryIndex {
 public:
  static constexpr std::uint32_t kVersion = 1;

  GalleryIndex() = default;
  GalleryIndex(std::size_t channels, std::size_t channel_dim)
      : channels_(channels), channel_dim_(channel_dim) {}

  std::size_t channels() const { return channels_; }
  std::size_t channel_dim() const { return channel_dim_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<IndexEntry>& entries() const { return entries_; }

  void add(IndexEntry e) {
    if (channels_ == 0 && channel_dim_ == 0 && entries_.empty()) {
      channels_ = e.code.channels();
      channel_dim_ = e.code.channel_dim();
    }
    if (e.code.channels() != channels_ || e.code.channel_dim() != channel_dim_ ||
        e.stats.size() != channels_)
      throw BuildError("entry '" + e.image_id + "' has shape K=" +
                       std::to_string(e.code.channels()) + ", d=" +
                       std::to_string(e.code.channel_dim()) + " but index is K=" +
                       std::to_string(channels_) + ", d=" + std::to_string(channel_dim_));
    if (e.image_id.size() > 0xFFFF) throw BuildError("image id longer than 65535 bytes");
    if (!ids_.insert(e.image_id).second)
      throw BuildError("duplicate image id '" + e.image_id + "'");
    entries_.push_back(std::move(e));
  }

  friend bool operator==(const GalleryIndex& a, const GalleryIndex& b) {
    return a.channels_ == b.channels_ && a.channel_dim_ == b.channel_dim_ &&
           a.entries_ == b.entries_;
  }

 private:
  std::size_t channels_ = 0;
  std::size_t channel_dim_ = 0;
  std::vector<IndexEntry> entries_;
  std::unordered_set<std::string> ids_;
};

// Runs the descriptor pipeline on one image and binarizes it.
inline IndexEntry encode_entry(std::string image_id, const LayerPair& pair, const PcaModel* pca,
                               const PipelineOptions& opts) {
  return IndexEntry{std::move(image_id), sign_quantize(standard_pipeline(pair, pca, opts)),
                    channel_stats(pair.guide())};
}

struct IndexInput {
  std::string image_id;
  LayerPair pair;
};

inline GalleryIndex build_index(std::span<const IndexInput> inputs, const PcaModel* pca,
                                const PipelineOptions& opts = {}) {
  GalleryIndex index;
  if (inputs.empty()) return index;
  const std::size_t k_count = inputs.front().pair.guide().depth();
  const std::size_t local_dim = inputs.front().pair.local().depth();
  std::unordered_set<std::string> ids;
  for (const auto& in : inputs) {
    if (!ids.insert(in.image_id).second)
      throw BuildError("duplicate image id '" + in.image_id + "'");
    if (in.pair.guide().depth() != k_count || in.pair.local().depth() != local_dim)
      throw BuildError("image '" + in.image_id + "' has local depth " +
                       std::to_string(in.pair.local().depth()) + " / guide depth " +
                       std::to_string(in.pair.guide().depth()) + ", expected " +
                       std::to_string(local_dim) + " / " + std::to_string(k_count));
    if (pca && in.pair.local().depth() != pca->input_dim)
      throw BuildError("image '" + in.image_id + "' local depth does not match PCA input_dim");
  }
  std::vector<IndexEntry> encoded(inputs.size());
  PipelineOptions inner = opts;
  inner.jobs = 1;
  parallel_for(inputs.size(), opts.jobs, [&](std::size_t i) {
    encoded[i] = encode_entry(inputs[i].image_id, inputs[i].pair, pca, inner);
  });
  for (auto& e : encoded) index.add(std::move(e));
  return index;
}

namespace detail {

class ByteWriter {
 public:
  template <class T>
  void put(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void bytes(std::string_view s) { out_.append(s); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view s) : s_(s) {}
  template <class T>
  T get() {
    T v;
    std::memcpy(&v, need(sizeof(T)).data(), sizeof(T));
    return v;
  }
  std::string_view bytes(std::size_t n) { return need(n); }
  bool done() const { return pos_ == s_.size(); }

 private:
  std::string_view need(std::size_t n) {
    if (s_.size() - pos_ < n) throw FormatError("index file truncated");
    auto out = s_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::string_view s_;
  std::size_t pos_ = 0;
};

inline constexpr std::string_view kIndexMagic{"XLPIDX1\0", 8};

}  // namespace detail

/**
 * Index file layout (little-endian):
 *   "XLPIDX1\0" | u32 version | u32 K | u32 d | u64 entry_count
 *   per entry: u16 id_len | id bytes | ceil(K*d/4) trit bytes | K float32 stats
 */
inline std::string encode_index(const GalleryIndex& index) {
  detail::ByteWriter w;
  w.bytes(detail::kIndexMagic);
  w.put<std::uint32_t>(GalleryIndex::kVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(index.channels()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(index.channel_dim()));
  w.put<std::uint64_t>(index.size());
  for (const auto& e : index.entries()) {
    w.put<std::uint16_t>(static_cast<std::uint16_t>(e.image_id.size()));
    w.bytes(e.image_id);
    w.bytes(e.code.encode_payload());
    for (float v : e.stats.mean) w.put<float>(v);
  }
  return w.take();
}

inline GalleryIndex decode_index(std::string_view bytes) {
  detail::ByteReader r(bytes);
  if (r.bytes(detail::kIndexMagic.size()) != detail::kIndexMagic)
    throw FormatError("not an index file (bad magic)");
  auto version = r.get<std::uint32_t>();
  if (version != GalleryIndex::kVersion)
    throw SchemaError("unsupported index version " + std::to_string(version));
  std::size_t k_count = r.get<std::uint32_t>();
  std::size_t d = r.get<std::uint32_t>();
  auto count = r.get<std::uint64_t>();
  if (count > 0 && (k_count == 0 || d == 0))
    throw SchemaError("index with entries must have K > 0 and d > 0");
  GalleryIndex index(k_count, d);
  const std::size_t payload = SignVector::payload_bytes(k_count, d);
  for (std::uint64_t n = 0; n < count; ++n) {
    IndexEntry e;
    auto id_len = r.get<std::uint16_t>();
    e.image_id = std::string(r.bytes(id_len));
    e.code = SignVector::decode_payload(k_count, d, r.bytes(payload));
    e.stats.mean.resize(k_count);
    for (auto& v : e.stats.mean) {
      v = r.get<float>();
      if (!std::isfinite(v)) throw FormatError("non-finite channel stat in entry '" + e.image_id + "'");
    }
    try {
      index.add(std::move(e));
    } catch (const BuildError& err) {
      throw SchemaError(std::string("index: ") + err.what());
    }
  }
  if (!r.done()) throw FormatError("trailing bytes after last index entry");
  return index;
}

inline void save_index(const std::filesystem::path& path, const GalleryIndex& index) {
  detail::write_file_bytes(path, encode_index(index));
}

inline GalleryIndex load_index(const std::filesystem::path& path) {
  return decode_index(detail::read_file_bytes(path));
}

struct QueryHit {
  std::string image_id;
  double score = 0.0;
  friend bool operator==(const QueryHit&, const QueryHit&) = default;
};

// Descending score, ascending id on ties; keeps the first top_n.
inline std::vector<QueryHit> rank_hits(std::vector<QueryHit> hits, std::size_t top_n) {
  auto better = [](const QueryHit& a, const QueryHit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.image_id < b.image_id;
  };
  std::size_t keep = std::min(top_n, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(keep), hits.end(), better);
  hits.resize(keep);
  return hits;
}

enum class SelectionSide { query, gallery };

struct QueryOptions {
  std::size_t k_channels = 50;
  std::size_t top_n = 10;
  // query: S from the query's guide stats (default). gallery: S per entry
  // from that entry's stored stats.
  SelectionSide side = SelectionSide::query;
  unsigned jobs = 1;
};

inline std::vector<QueryHit> query(const GalleryIndex& index, const SignVector& code,
                                   const ChannelStats& stats, const QueryOptions& opts) {
  if (index.empty()) return {};
  if (code.channels() != index.channels() || code.channel_dim() != index.channel_dim() ||
      stats.size() != index.channels())
    throw SchemaError("query shape K=" + std::to_string(code.channels()) + ", d=" +
                      std::to_string(code.channel_dim()) + " does not match index K=" +
                      std::to_string(index.channels()) + ", d=" +
                      std::to_string(index.channel_dim()));
  if (opts.top_n == 0) throw ArgumentError("top_n must be positive");
  std::vector<std::size_t> query_side;
  if (opts.side == SelectionSide::query) query_side = select_channels(stats, opts.k_channels);
  std::vector<QueryHit> hits(index.size());
  parallel_for(index.size(), opts.jobs, [&](std::size_t i) {
    const auto& e = index.entries()[i];
    double s = opts.side == SelectionSide::query
                   ? static_cast<double>(similarity(code, e.code, query_side))
                   : static_cast<double>(similarity(code, e.code, select_channels(e.stats, opts.k_channels)));
    hits[i] = QueryHit{e.image_id, s};
  });
  return rank_hits(std::move(hits), opts.top_n);
}

// The query image must go through the same pipeline the index was built with.
inline std::vector<QueryHit> query(const GalleryIndex& index, const LayerPair& query_pair,
                                   const PcaModel* pca, const PipelineOptions& pipeline,
                                   const QueryOptions& opts) {
  auto e = encode_entry("", query_pair, pca, pipeline);
  return query(index, e.code, e.stats, opts);
}

struct DescriptorEntry {
  std::string image_id;
  Descriptor desc;
};

// Masked-dot ranking over unquantized descriptors.
inline std::vector<QueryHit> query_descriptors(std::span<const DescriptorEntry> gallery,
                                               const Descriptor& q,
                                               std::span<const std::size_t> channels,
                                               std::size_t top_n) {
  std::vector<QueryHit> hits;
  hits.reserve(gallery.size());
  for (const auto& e : gallery) hits.push_back({e.image_id, similarity(q, e.desc, channels)});
  return rank_hits(std::move(hits), top_n);
}

}  // namespace xlpool

#endif  // XLPOOL_RETRIEVAL_HPP_
