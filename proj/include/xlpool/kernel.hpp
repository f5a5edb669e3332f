#ifndef XLPOOL_KERNEL_HPP_
#define XLPOOL_KERNEL_HPP_

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "xlpool/descriptor.hpp"
#include "xlpool/error.hpp"
#include "xlpool/parallel.hpp"

namespace xlpool {

// n x m matrix of inner products, row-major.
struct KernelMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
  double& at(std::size_t i, std::size_t j) { return values[i * cols + j]; }
  std::vector<float> to_float() const { return {values.begin(), values.end()}; }
};

// K[i][j] = <a_i, b_j>. Rows are computed in blocks across `jobs` threads;
// each entry is one double-precision dot product, so the result does not
// depend on the thread count.
inline KernelMatrix gram(std::span<const Descriptor> a, std::span<const Descriptor> b,
                         unsigned jobs = 1) {
  std::size_t dim = a.empty() ? (b.empty() ? 0 : b.front().size()) : a.front().size();
  for (const auto* set : {&a, &b})
    for (const auto& d : *set)
      if (d.size() != dim)
        throw ShapeError("gram: descriptor dimensions differ (" + std::to_string(d.size()) +
                         " vs " + std::to_string(dim) + ")");
  KernelMatrix k{a.size(), b.size(), std::vector<double>(a.size() * b.size())};
  constexpr std::size_t kRowBlock = 16;
  std::size_t blocks = (a.size() + kRowBlock - 1) / kRowBlock;
  parallel_for(blocks, jobs, [&](std::size_t blk) {
    std::size_t end = std::min(a.size(), (blk + 1) * kRowBlock);
    for (std::size_t i = blk * kRowBlock; i < end; ++i)
      for (std::size_t j = 0; j < b.size(); ++j) k.at(i, j) = dot(a[i].values(), b[j].values());
  });
  return k;
}

/**
 * One-vs-rest kernel ridge classifier. For each class c, solves
 * (K + lambda I) alpha_c = y_c with y_c in {+1, -1}; prediction is the class
 * with the largest decision value K_test alpha_c (lowest class on ties).
 */
struct KernelRidgeModel {
  std::vector<int> classes;   // sorted distinct labels
  std::size_t train_size = 0;
  std::vector<double> alpha;  // train_size x classes.size(), row-major
};

inline KernelRidgeModel train_linear_ovr(const KernelMatrix& k, std::span<const int> labels,
                                         double lambda) {
  if (!(lambda > 0.0)) throw ArgumentError("ridge lambda must be > 0 (the system is singular otherwise)");
  if (k.rows != k.cols) throw ShapeError("training kernel must be square");
  if (labels.size() != k.rows)
    throw ShapeError("got " + std::to_string(labels.size()) + " labels for a " +
                     std::to_string(k.rows) + "-sample kernel");
  KernelRidgeModel m;
  m.classes.assign(labels.begin(), labels.end());
  std::sort(m.classes.begin(), m.classes.end());
  m.classes.erase(std::unique(m.classes.begin(), m.classes.end()), m.classes.end());
  if (m.classes.size() < 2) throw ArgumentError("need at least 2 classes to train");

  const auto n = static_cast<Eigen::Index>(k.rows);
  const auto c = static_cast<Eigen::Index>(m.classes.size());
  Eigen::MatrixXd a(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) a(i, j) = k.at(i, j);
  a.diagonal().array() += lambda;
  Eigen::MatrixXd y = Eigen::MatrixXd::Constant(n, c, -1.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    auto pos = std::lower_bound(m.classes.begin(), m.classes.end(), labels[i]) - m.classes.begin();
    y(i, pos) = 1.0;
  }
  Eigen::LDLT<Eigen::MatrixXd> solver(a);
  if (solver.info() != Eigen::Success) throw ArgumentError("kernel ridge system is singular");
  Eigen::MatrixXd alpha = solver.solve(y);
  m.train_size = k.rows;
  m.alpha.resize(static_cast<std::size_t>(n * c));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m.alpha[static_cast<std::size_t>(i * c + j)] = alpha(i, j);
  return m;
}

// kernel_test_train: test x train.
inline std::vector<int> predict(const KernelRidgeModel& m, const KernelMatrix& kernel_test_train) {
  if (kernel_test_train.cols != m.train_size)
    throw ShapeError("test kernel has " + std::to_string(kernel_test_train.cols) +
                     " columns, model was trained on " + std::to_string(m.train_size));
  const std::size_t c = m.classes.size();
  std::vector<int> out(kernel_test_train.rows);
  std::vector<double> score(c);
  for (std::size_t i = 0; i < kernel_test_train.rows; ++i) {
    std::fill(score.begin(), score.end(), 0.0);
    for (std::size_t j = 0; j < m.train_size; ++j) {
      double kij = kernel_test_train.at(i, j);
      for (std::size_t cl = 0; cl < c; ++cl) score[cl] += kij * m.alpha[j * c + cl];
    }
    std::size_t best = 0;
    for (std::size_t cl = 1; cl < c; ++cl)
      if (score[cl] > score[best]) best = cl;
    out[i] = m.classes[best];
  }
  return out;
}

inline double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size() || truth.empty())
    throw ShapeError("accuracy: label vectors differ in length or are empty");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += predicted[i] == truth[i];
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

}  // namespace xlpool

#endif  // XLPOOL_KERNEL_HPP_
