// xlpool command-line front end.
//
// Exit codes: 0 ok, 1 I/O error, 2 schema/shape/argument error, 3 selftest failure.
// Machine-readable results only go to files; logs go to stderr.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <unordered_set>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "xlpool.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace xlpool;

namespace {

constexpr int kExitIo = 1;
constexpr int kExitSchema = 2;
constexpr int kExitSelftest = 3;

struct ManifestEntry {
  std::string image_id;
  fs::path local_path;
  fs::path guide_path;
  std::optional<int> label;
};

// Relative paths in a manifest resolve against the manifest's directory.
std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  json doc;
  try {
    doc = json::parse(detail::read_file_bytes(path));
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (!doc.is_array()) throw SchemaError(path.string() + ": manifest must be a JSON array");
  auto base = path.parent_path();
  std::vector<ManifestEntry> out;
  std::unordered_set<std::string> ids;
  for (const auto& item : doc) {
    ManifestEntry e;
    try {
      e.image_id = item.at("image_id").get<std::string>();
      e.local_path = item.at("local_path").get<std::string>();
      e.guide_path = item.at("guide_path").get<std::string>();
      if (item.contains("label") && !item.at("label").is_null()) e.label = item.at("label").get<int>();
    } catch (const json::exception& err) {
      throw SchemaError(path.string() + ": bad manifest entry: " + err.what());
    }
    if (e.local_path.is_relative()) e.local_path = base / e.local_path;
    if (e.guide_path.is_relative()) e.guide_path = base / e.guide_path;
    if (!ids.insert(e.image_id).second)
      throw SchemaError(path.string() + ": duplicate image_id '" + e.image_id + "'");
    out.push_back(std::move(e));
  }
  return out;
}

fs::path sibling(const fs::path& out, const std::string& ext) {
  auto p = out;
  return p.replace_extension(ext);
}

std::string json_text(const json& j) { return j.dump(2) + "\n"; }

json pipeline_json(const PipelineOptions& opts, const std::optional<fs::path>& pca_dir) {
  return {{"l2", opts.l2},
          {"power", opts.power},
          {"pooling", opts.pooling == ChannelPooling::max ? "max" : "sum"},
          {"pca", pca_dir ? json(fs::absolute(*pca_dir).string()) : json(nullptr)}};
}

unsigned default_jobs() {
  if (const char* env = std::getenv("XLPOOL_JOBS")) {
    try {
      int v = std::stoi(env);
      if (v > 0) return static_cast<unsigned>(v);
    } catch (const std::exception&) {
    }
    std::cerr << "xlpool: ignoring invalid XLPOOL_JOBS='" << env << "'\n";
  }
  return 1;
}

struct PipelineFlags {
  bool l2 = false;
  bool power = false;
  bool max = false;
  std::optional<std::string> pca;

  void attach(CLI::App* cmd) {
    cmd->add_flag("--l2", l2, "Per-channel l2 normalization");
    cmd->add_flag("--power", power, "Power normalization sign(v)*sqrt(|v|)");
    cmd->add_flag("--max", max, "Max channel pooling instead of sum");
    cmd->add_option("--pca", pca, "PCA bundle directory applied to local features");
  }

  PipelineOptions options(unsigned jobs) const {
    PipelineOptions o;
    o.l2 = l2;
    o.power = power;
    o.pooling = max ? ChannelPooling::max : ChannelPooling::sum;
    o.jobs = jobs;
    return o;
  }

  std::optional<PcaModel> load_pca_model() const {
    if (!pca) return std::nullopt;
    return load_pca(*pca);
  }
};

LayerPair load_pair(const fs::path& local, const fs::path& guide) {
  return LayerPair(load_tensor(local), load_tensor(guide));
}

// ---- pool ---------------------------------------------------------------

struct PoolArgs {
  std::string local, guide, out;
  bool quantize = false;
  PipelineFlags pipeline;
};

int cmd_pool(const PoolArgs& a, unsigned jobs) {
  auto pca = a.pipeline.load_pca_model();
  auto opts = a.pipeline.options(jobs);
  auto desc = standard_pipeline(load_pair(a.local, a.guide), pca, opts);

  fs::path out(a.out);
  std::vector<std::size_t> shape{desc.size()};
  std::string npy = encode_npy(shape, desc.values());
  json meta = {{"K", desc.channels()}, {"d", desc.channel_dim()}, {"pipeline", pipeline_json(opts, a.pipeline.pca)}};
  std::optional<std::string> trits;
  if (a.quantize) trits = sign_quantize(desc).encode_payload();

  detail::write_file_bytes(out, npy);
  detail::write_file_bytes(sibling(out, ".meta.json"), json_text(meta));
  if (trits) detail::write_file_bytes(sibling(out, ".trits"), *trits);
  std::cerr << "pool: wrote " << desc.size() << "-d descriptor (K=" << desc.channels()
            << ", d=" << desc.channel_dim() << ") to " << out << "\n";
  return 0;
}

// ---- pca-fit ------------------------------------------------------------

struct PcaFitArgs {
  std::vector<std::string> inputs;
  std::optional<std::string> manifest;
  std::optional<std::size_t> dim;
  std::optional<std::size_t> target_dim;
  std::optional<std::size_t> channels;
  std::size_t max_samples = 100000;
  std::string out;
};

int cmd_pca_fit(const PcaFitArgs& a, std::uint64_t seed) {
  std::vector<fs::path> locals(a.inputs.begin(), a.inputs.end());
  std::optional<fs::path> first_guide;
  if (a.manifest)
    for (const auto& e : read_manifest(*a.manifest)) {
      locals.push_back(e.local_path);
      if (!first_guide) first_guide = e.guide_path;
    }
  if (locals.empty()) throw ArgumentError("pca-fit: no input tensors (use --inputs or --manifest)");

  std::vector<float> samples;
  std::size_t depth = 0;
  for (const auto& p : locals) {
    auto t = load_tensor(p);
    if (depth == 0) depth = t.depth();
    if (t.depth() != depth) throw ShapeError("pca-fit: " + p.string() + " has depth " + std::to_string(t.depth()) +
                                             ", expected " + std::to_string(depth));
    samples.insert(samples.end(), t.data().begin(), t.data().end());
  }
  std::size_t n = samples.size() / depth;
  if (n > a.max_samples) {
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(a.max_samples);
    std::sort(idx.begin(), idx.end());
    std::vector<float> sub;
    sub.reserve(a.max_samples * depth);
    for (auto i : idx) sub.insert(sub.end(), samples.begin() + i * depth, samples.begin() + (i + 1) * depth);
    samples = std::move(sub);
    std::cerr << "pca-fit: subsampled " << a.max_samples << " of " << n << " local features\n";
  }

  std::size_t out_dim = depth;
  if (a.dim) {
    out_dim = *a.dim;
  } else if (a.target_dim) {
    std::size_t k = 0;
    if (a.channels)
      k = *a.channels;
    else if (first_guide)
      k = load_tensor(*first_guide).depth();
    else
      throw ArgumentError("pca-fit: --target-dim needs --channels or a manifest with guide tensors");
    out_dim = pca_dim_for_target(*a.target_dim, k);
  }
  auto model = pca_fit(samples, depth, out_dim);
  save_pca(a.out, model);
  std::cerr << "pca-fit: " << depth << " -> " << out_dim << " dims from " << samples.size() / depth
            << " samples, saved to " << a.out << "\n";
  return 0;
}

// ---- postprocess ----------------------------------------------------------

struct PostprocessArgs {
  std::string in, out;
  std::optional<std::size_t> channels;
  bool l2 = false, power = false, quantize = false;
};

int cmd_postprocess(const PostprocessArgs& a) {
  auto arr = read_npy(a.in);
  if (arr.shape.size() != 1) throw SchemaError(a.in + ": descriptor must be a 1-D array");
  std::size_t k = 0;
  if (a.channels) {
    k = *a.channels;
  } else {
    auto meta_path = sibling(a.in, ".meta.json");
    if (!fs::exists(meta_path)) throw ArgumentError("postprocess: no --channels and no " + meta_path.string());
    try {
      k = json::parse(detail::read_file_bytes(meta_path)).at("K").get<std::size_t>();
    } catch (const json::exception& e) {
      throw SchemaError(meta_path.string() + ": " + e.what());
    }
  }
  if (k == 0 || arr.data.size() % k != 0)
    throw ShapeError("postprocess: " + std::to_string(arr.data.size()) + " values do not split into " +
                     std::to_string(k) + " channels");
  std::size_t d = arr.data.size() / k;
  Descriptor desc(k, d, std::move(arr.data));
  if (a.l2) desc = normalize_channels(std::move(desc));
  if (a.power) desc = power_normalize(std::move(desc));

  fs::path out(a.out);
  std::vector<std::size_t> shape{desc.size()};
  std::string npy = encode_npy(shape, desc.values());
  json meta = {{"K", k}, {"d", d}, {"postprocess", {{"l2", a.l2}, {"power", a.power}}}};
  std::optional<std::string> trits;
  if (a.quantize) trits = sign_quantize(desc).encode_payload();
  detail::write_file_bytes(out, npy);
  detail::write_file_bytes(sibling(out, ".meta.json"), json_text(meta));
  if (trits) detail::write_file_bytes(sibling(out, ".trits"), *trits);
  return 0;
}

// ---- spm --------------------------------------------------------------------

struct SpmArgs {
  std::vector<std::string> inputs;
  int level = 2;
  std::string method = "sum-sqrt";
  bool l2 = false;
  std::string out;
};

int cmd_spm(const SpmArgs& a) {
  SpmMethod method = a.method == "max" ? SpmMethod::max : SpmMethod::sum_sqrt;
  Descriptor desc;
  for (const auto& p : a.inputs) desc = concat_layers(desc, spm_pool(load_tensor(p), SpmConfig(a.level), method, a.l2));
  fs::path out(a.out);
  std::vector<std::size_t> shape{desc.size()};
  std::string npy = encode_npy(shape, desc.values());
  json parts = json::array();
  for (const auto& part : desc.parts()) parts.push_back({{"K", part.channels}, {"d", part.channel_dim}});
  json meta = {{"parts", parts}, {"level", a.level}, {"method", a.method}, {"l2", a.l2}};
  if (desc.is_uniform()) {
    meta["K"] = desc.channels();
    meta["d"] = desc.channel_dim();
  }
  detail::write_file_bytes(out, npy);
  detail::write_file_bytes(sibling(out, ".meta.json"), json_text(meta));
  std::cerr << "spm: wrote " << desc.size() << "-d descriptor to " << out << "\n";
  return 0;
}

// ---- index ----------------------------------------------------------------

struct IndexArgs {
  std::string pairs, out;
  PipelineFlags pipeline;
};

int cmd_index(const IndexArgs& a, unsigned jobs) {
  auto manifest = read_manifest(a.pairs);
  auto pca = a.pipeline.load_pca_model();
  auto opts = a.pipeline.options(1);
  std::vector<IndexEntry> entries(manifest.size());
  parallel_for(manifest.size(), jobs, [&](std::size_t i) {
    const auto& m = manifest[i];
    try {
      auto pair = load_pair(m.local_path, m.guide_path);
      if (pca && pair.local().depth() != pca->input_dim)
        throw ShapeError("local depth " + std::to_string(pair.local().depth()) + " != PCA input_dim " +
                         std::to_string(pca->input_dim));
      entries[i] = encode_entry(m.image_id, pair, pca ? &*pca : nullptr, opts);
    } catch (const IoError&) {
      throw;
    } catch (const Error& e) {
      throw BuildError("image '" + m.image_id + "': " + e.what());
    }
  });
  GalleryIndex index;
  for (auto& e : entries) index.add(std::move(e));

  auto bytes = encode_index(index);
  json meta = {{"entries", index.size()}, {"K", index.channels()}, {"d", index.channel_dim()},
               {"pipeline", pipeline_json(opts, a.pipeline.pca)}};
  detail::write_file_bytes(a.out, bytes);
  detail::write_file_bytes(fs::path(a.out + ".meta.json"), json_text(meta));
  std::cerr << "index: " << index.size() << " entries (K=" << index.channels() << ", d="
            << index.channel_dim() << ") written to " << a.out << "\n";
  return 0;
}

// ---- query ----------------------------------------------------------------

struct QueryArgs {
  std::string index, local, guide;
  std::size_t k_channels = 50;
  std::size_t top = 10;
  bool gallery_side = false;
  std::optional<std::string> out;
  PipelineFlags pipeline;
};

int cmd_query(QueryArgs a, unsigned jobs) {
  auto index = load_index(a.index);
  // Reuse the pipeline recorded at index time unless overridden on the command line.
  fs::path meta_path(a.index + ".meta.json");
  if (fs::exists(meta_path)) {
    try {
      auto meta = json::parse(detail::read_file_bytes(meta_path)).at("pipeline");
      a.pipeline.l2 = a.pipeline.l2 || meta.value("l2", false);
      a.pipeline.power = a.pipeline.power || meta.value("power", false);
      a.pipeline.max = a.pipeline.max || meta.value("pooling", "sum") == "max";
      if (!a.pipeline.pca && meta.contains("pca") && meta["pca"].is_string())
        a.pipeline.pca = meta["pca"].get<std::string>();
    } catch (const json::exception& e) {
      throw SchemaError(meta_path.string() + ": " + e.what());
    }
  }
  auto pca = a.pipeline.load_pca_model();
  QueryOptions qopts;
  qopts.k_channels = a.k_channels;
  qopts.top_n = a.top;
  qopts.side = a.gallery_side ? SelectionSide::gallery : SelectionSide::query;
  qopts.jobs = jobs;
  auto hits = query(index, load_pair(a.local, a.guide), pca ? &*pca : nullptr, a.pipeline.options(1), qopts);

  json results = json::array();
  for (std::size_t r = 0; r < hits.size(); ++r) {
    results.push_back({{"rank", r + 1}, {"image_id", hits[r].image_id}, {"score", hits[r].score}});
    std::cerr << r + 1 << "\t" << hits[r].score << "\t" << hits[r].image_id << "\n";
  }
  if (a.out) detail::write_file_bytes(*a.out, json_text(results));
  return 0;
}

// ---- gram -------------------------------------------------------------------

std::pair<std::vector<std::string>, std::vector<Descriptor>> read_descriptor_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("'" + dir.string() + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".npy") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<std::string> names;
  std::vector<Descriptor> descs;
  for (const auto& f : files) {
    auto arr = read_npy(f);
    if (arr.shape.size() != 1) throw SchemaError(f.string() + ": descriptor must be a 1-D array");
    names.push_back(f.filename().string());
    if (arr.data.empty())
      descs.emplace_back();
    else
      descs.emplace_back(1, arr.data.size(), std::move(arr.data));
  }
  return {names, descs};
}

struct GramArgs {
  std::string a, b, out;
};

int cmd_gram(const GramArgs& g, unsigned jobs) {
  auto [names_a, set_a] = read_descriptor_dir(g.a);
  auto [names_b, set_b] = read_descriptor_dir(g.b);
  auto k = gram(set_a, set_b, jobs);
  auto values = k.to_float();
  std::vector<std::size_t> shape{k.rows, k.cols};
  std::string npy = encode_npy(shape, values);
  json meta = {{"rows", names_a}, {"cols", names_b}};
  detail::write_file_bytes(g.out, npy);
  detail::write_file_bytes(sibling(g.out, ".meta.json"), json_text(meta));
  std::cerr << "gram: " << k.rows << "x" << k.cols << " kernel written to " << g.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"xlpool: cross-layer pooled image descriptors and binary retrieval"};
  app.require_subcommand(1);
  unsigned jobs = default_jobs();
  std::uint64_t seed = 0;
  app.add_option("--jobs,-j", jobs, "Worker threads (default: $XLPOOL_JOBS or 1)")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "Seed for any randomized step");

  PoolArgs pool;
  auto* c_pool = app.add_subcommand("pool", "Cross-layer pool a (local, guide) tensor pair");
  c_pool->add_option("--local", pool.local, "Layer t tensor (.npy, HxWxD)")->required();
  c_pool->add_option("--guide", pool.guide, "Layer t+1 tensor (.npy, HxWxK)")->required();
  c_pool->add_option("--out", pool.out, "Output descriptor .npy")->required();
  c_pool->add_flag("--quantize", pool.quantize, "Also write the sign-quantized .trits payload");
  pool.pipeline.attach(c_pool);

  PcaFitArgs pca;
  auto* c_pca = app.add_subcommand("pca-fit", "Fit PCA on local features");
  c_pca->add_option("--inputs", pca.inputs, "Local-layer tensors");
  c_pca->add_option("--manifest", pca.manifest, "Manifest JSON; its local tensors are used");
  auto* dim_opt = c_pca->add_option("--pca-dim,--dim", pca.dim, "Output dimension (default: no reduction)");
  c_pca->add_option("--target-dim", pca.target_dim, "Total descriptor budget; dim = floor(target / K)")->excludes(dim_opt);
  c_pca->add_option("--channels", pca.channels, "K for --target-dim (default: guide depth from manifest)");
  c_pca->add_option("--max-samples", pca.max_samples, "Subsample local features above this count");
  c_pca->add_option("--out", pca.out, "Output bundle directory")->required();

  PostprocessArgs post;
  auto* c_post = app.add_subcommand("postprocess", "Normalize / quantize an existing descriptor");
  c_post->add_option("--in", post.in, "Descriptor .npy")->required();
  c_post->add_option("--out", post.out, "Output .npy")->required();
  c_post->add_option("--channels", post.channels, "Channel count K (default: from sidecar meta.json)");
  c_post->add_flag("--l2", post.l2, "Per-channel l2 normalization");
  c_post->add_flag("--power", post.power, "Power normalization");
  c_post->add_flag("--quantize", post.quantize, "Also write the .trits payload");

  SpmArgs spm;
  auto* c_spm = app.add_subcommand("spm", "Spatial-pyramid baseline pooling of one or more layers");
  c_spm->add_option("--input", spm.inputs, "Tensor(s); several are concatenated in order")->required();
  c_spm->add_option("--level", spm.level, "Pyramid level 0, 1 or 2")->check(CLI::Range(0, 2));
  c_spm->add_option("--method", spm.method, "max or sum-sqrt")->check(CLI::IsMember({"max", "sum-sqrt"}));
  c_spm->add_flag("--l2", spm.l2, "l2-normalize each layer's pooled vector");
  c_spm->add_option("--out", spm.out, "Output .npy")->required();

  IndexArgs idx;
  auto* c_index = app.add_subcommand("index", "Build a binarized gallery index");
  c_index->add_option("--pairs", idx.pairs, "Manifest JSON")->required();
  c_index->add_option("--out", idx.out, "Index file")->required();
  idx.pipeline.attach(c_index);

  QueryArgs q;
  auto* c_query = app.add_subcommand("query", "Rank gallery images against a query pair");
  c_query->add_option("--index", q.index, "Index file")->required();
  c_query->add_option("--local", q.local, "Query layer t tensor")->required();
  c_query->add_option("--guide", q.guide, "Query layer t+1 tensor")->required();
  c_query->add_option("--k-channels", q.k_channels, "Channels kept (top average activation)")->check(CLI::PositiveNumber);
  c_query->add_option("--top", q.top, "Results returned")->check(CLI::PositiveNumber);
  c_query->add_flag("--gallery-side", q.gallery_side, "Select channels from each gallery image instead of the query");
  c_query->add_option("--out", q.out, "Write ranked results as JSON");
  q.pipeline.attach(c_query);

  GramArgs g;
  auto* c_gram = app.add_subcommand("gram", "Linear kernel between two descriptor directories");
  c_gram->add_option("--a", g.a, "Directory of 1-D descriptor .npy files")->required();
  c_gram->add_option("--b", g.b, "Directory of 1-D descriptor .npy files")->required();
  c_gram->add_option("--out", g.out, "Kernel .npy (float32, rows x cols)")->required();

  std::optional<std::string> fixture;
  auto* c_self = app.add_subcommand("selftest", "Run oracle-equivalence checks");
  c_self->add_option("--fixture", fixture, "Also round-trip this index file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitSchema;
  }

  try {
    if (*c_pool) return cmd_pool(pool, jobs);
    if (*c_pca) return cmd_pca_fit(pca, seed);
    if (*c_post) return cmd_postprocess(post);
    if (*c_spm) return cmd_spm(spm);
    if (*c_index) return cmd_index(idx, jobs);
    if (*c_query) return cmd_query(q, jobs);
    if (*c_gram) return cmd_gram(g, jobs);
    if (*c_self) {
      auto report = run_selftest(seed, fixture ? std::optional<fs::path>(*fixture) : std::nullopt);
      std::cout << report.text();
      return report.all_passed() ? 0 : kExitSelftest;
    }
  } catch (const IoError& e) {
    std::cerr << "xlpool: I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const Error& e) {
    std::cerr << "xlpool: " << e.what() << "\n";
    return kExitSchema;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "xlpool: I/O error: " << e.what() << "\n";
    return kExitIo;
  }
  return 0;
}
