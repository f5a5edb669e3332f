#ifndef XLPOOL_PCA_HPP_
#define XLPOOL_PCA_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "xlpool/error.hpp"
#include "xlpool/npy.hpp"
#include "xlpool/tensor.hpp"

namespace xlpool {

/**
 * PCA of local features: y = projection * (x - mean).
 * projection is output_dim x input_dim row-major with orthonormal rows sorted
 * by descending eigenvalue. Each row's largest-magnitude entry is positive
 * (lowest index on ties), which makes fitted models reproducible.
 */
struct PcaModel {
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
  std::vector<float> mean;
  std::vector<float> projection;
  std::vector<float> eigenvalues;

  std::span<const float> row(std::size_t r) const {
    return std::span<const float>(projection).subspan(r * input_dim, input_dim);
  }

  friend bool operator==(const PcaModel&, const PcaModel&) = default;
};

// samples: row-major, `dim` floats per sample.
inline PcaModel pca_fit(std::span<const float> samples, std::size_t dim, std::size_t output_dim) {
  if (dim == 0) throw ArgumentError("pca_fit: dim must be positive");
  if (samples.size() % dim != 0)
    throw ShapeError("pca_fit: sample buffer length is not a multiple of dim");
  const std::size_t n = samples.size() / dim;
  if (n < 2) throw FitError("pca_fit: need at least 2 samples, got " + std::to_string(n));
  if (output_dim == 0 || output_dim > std::min(dim, n - 1))
    throw ArgumentError("pca_fit: output_dim " + std::to_string(output_dim) +
                        " must be in [1, min(D=" + std::to_string(dim) +
                        ", n-1=" + std::to_string(n - 1) + ")]");

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t j = 0; j < dim; ++j) mean[j] += samples[s * dim + j];
  mean /= static_cast<double>(n);

  // Covariance accumulated over row blocks to bound memory for large n.
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  constexpr std::size_t kBlock = 2048;
  for (std::size_t start = 0; start < n; start += kBlock) {
    std::size_t rows = std::min(kBlock, n - start);
    RowMat block(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < dim; ++j)
        block(r, j) = samples[(start + r) * dim + j] - mean[j];
    cov.selfadjointView<Eigen::Lower>().rankUpdate(block.transpose());
  }
  cov = cov.selfadjointView<Eigen::Lower>();
  cov /= static_cast<double>(n - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw FitError("pca_fit: eigendecomposition failed");
  const auto& evals = solver.eigenvalues();   // ascending
  const auto& evecs = solver.eigenvectors();  // columns

  PcaModel m;
  m.input_dim = dim;
  m.output_dim = output_dim;
  m.mean.assign(mean.data(), mean.data() + dim);
  m.projection.resize(output_dim * dim);
  m.eigenvalues.resize(output_dim);
  for (std::size_t r = 0; r < output_dim; ++r) {
    auto col = static_cast<Eigen::Index>(dim - 1 - r);
    Eigen::VectorXd v = evecs.col(col);
    Eigen::Index pivot = 0;
    for (Eigen::Index j = 1; j < v.size(); ++j)
      if (std::abs(v[j]) > std::abs(v[pivot])) pivot = j;
    if (v[pivot] < 0) v = -v;
    for (std::size_t j = 0; j < dim; ++j) m.projection[r * dim + j] = static_cast<float>(v[j]);
    m.eigenvalues[r] = static_cast<float>(std::max(0.0, evals[col]));
  }
  return m;
}

inline PcaModel pca_fit(std::span<const FeatureTensor> tensors, std::size_t output_dim) {
  if (tensors.empty()) throw FitError("pca_fit: no tensors");
  std::size_t dim = tensors.front().depth();
  std::vector<float> samples;
  for (const auto& t : tensors) {
    if (t.depth() != dim) throw ShapeError("pca_fit: tensors have different depths");
    samples.insert(samples.end(), t.data().begin(), t.data().end());
  }
  return pca_fit(samples, dim, output_dim);
}

inline std::vector<float> pca_apply(const PcaModel& model, std::span<const float> x) {
  if (x.size() != model.input_dim)
    throw ShapeError("pca_apply: vector has " + std::to_string(x.size()) + " dims, model expects " +
                     std::to_string(model.input_dim));
  std::vector<double> centered(x.size());
  for (std::size_t j = 0; j < x.size(); ++j)
    centered[j] = static_cast<double>(x[j]) - model.mean[j];
  std::vector<float> y(model.output_dim);
  for (std::size_t r = 0; r < model.output_dim; ++r) {
    auto row = model.row(r);
    double acc = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) acc += row[j] * centered[j];
    y[r] = static_cast<float>(acc);
  }
  return y;
}

// Projects every spatial unit; the result has depth output_dim.
inline FeatureTensor pca_apply(const PcaModel& model, const FeatureTensor& t) {
  if (t.depth() != model.input_dim)
    throw ShapeError("pca_apply: tensor depth " + std::to_string(t.depth()) +
                     " != model input_dim " + std::to_string(model.input_dim));
  std::vector<float> out;
  out.reserve(t.units() * model.output_dim);
  for (std::size_t i = 0; i < t.units(); ++i) {
    auto y = pca_apply(model, t.unit(i));
    out.insert(out.end(), y.begin(), y.end());
  }
  return FeatureTensor(t.height(), t.width(), model.output_dim, std::move(out));
}

// Local-feature PCA dimension that yields `target_total` descriptor dims
// over `channels` pooling channels.
inline std::size_t pca_dim_for_target(std::size_t target_total, std::size_t channels) {
  if (channels == 0) throw ArgumentError("channel count must be positive");
  std::size_t d = target_total / channels;
  if (d == 0)
    throw ArgumentError("target dimension " + std::to_string(target_total) +
                        " is smaller than the channel count " + std::to_string(channels));
  return d;
}

// Directory bundle: mean.npy, projection.npy, eigenvalues.npy, meta.json.
inline void save_pca(const std::filesystem::path& dir, const PcaModel& m) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
  write_npy(dir / "mean.npy", {m.input_dim}, m.mean);
  write_npy(dir / "projection.npy", {m.output_dim, m.input_dim}, m.projection);
  write_npy(dir / "eigenvalues.npy", {m.output_dim}, m.eigenvalues);
  nlohmann::json meta = {{"input_dim", m.input_dim}, {"output_dim", m.output_dim}};
  detail::write_file_bytes(dir / "meta.json", meta.dump(2) + "\n");
}

inline PcaModel load_pca(const std::filesystem::path& dir) {
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(detail::read_file_bytes(dir / "meta.json"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("pca meta.json: " + std::string(e.what()));
  }
  PcaModel m;
  try {
    m.input_dim = meta.at("input_dim").get<std::size_t>();
    m.output_dim = meta.at("output_dim").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("pca meta.json: " + std::string(e.what()));
  }
  auto mean = read_npy(dir / "mean.npy");
  auto proj = read_npy(dir / "projection.npy");
  auto eig = read_npy(dir / "eigenvalues.npy");
  if (m.output_dim == 0 || m.output_dim > m.input_dim)
    throw SchemaError("pca bundle: output_dim must be in [1, input_dim]");
  if (mean.shape != std::vector<std::size_t>{m.input_dim} ||
      proj.shape != std::vector<std::size_t>{m.output_dim, m.input_dim} ||
      eig.shape != std::vector<std::size_t>{m.output_dim})
    throw SchemaError("pca bundle: array shapes disagree with meta.json");
  m.mean = std::move(mean.data);
  m.projection = std::move(proj.data);
  m.eigenvalues = std::move(eig.data);
  return m;
}

}  // namespace xlpool

#endif  // XLPOOL_PCA_HPP_
