#pragma once

// Shared fixtures and independent oracles for the unit tests.

#include <Eigen/Core>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

#include "semb/embedding.hpp"
#include "semb/mesh.hpp"
#include "semb/spectral.hpp"

namespace semb::test {

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("semb_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline Eigen::MatrixXd random_matrix(Index rows, Index cols, std::uint64_t seed, double sigma = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, sigma);
  Eigen::MatrixXd m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = n(rng);
  return m;
}

/// Rows are positive and sum to one.
inline Eigen::MatrixXd random_stochastic(Index rows, Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = u(rng);
    m.row(i) /= m.row(i).sum();
  }
  return m;
}

inline std::shared_ptr<const SpectralBasis> basis_of(const Mesh& mesh, Index Q) {
  return std::make_shared<const SpectralBasis>(spectral_basis(mesh, Q));
}

inline GeodesicMatrix normalized_geodesics(const Mesh& mesh) { return normalize_geodesics(geodesic_matrix(mesh)); }

/// Loop-based softmax correspondence, written independently of the library kernels.
inline Eigen::MatrixXd naive_correspondence(const Eigen::MatrixXd& targets, const Eigen::MatrixXd& queries,
                                            Similarity mode) {
  Eigen::MatrixXd p(queries.rows(), targets.rows());
  for (Index l = 0; l < queries.rows(); ++l) {
    std::vector<double> s(static_cast<std::size_t>(targets.rows()));
    double hi = -INFINITY;
    for (Index k = 0; k < targets.rows(); ++k) {
      double v = 0.0;
      for (Index d = 0; d < targets.cols(); ++d) {
        const double a = targets(k, d), b = queries(l, d);
        v += mode == Similarity::NegSqDist ? -(a - b) * (a - b) : a * b;
      }
      if (mode == Similarity::NegInner) v = -v;
      s[static_cast<std::size_t>(k)] = v;
      hi = std::max(hi, v);
    }
    double z = 0.0;
    for (Index k = 0; k < targets.rows(); ++k) z += std::exp(s[static_cast<std::size_t>(k)] - hi);
    for (Index k = 0; k < targets.rows(); ++k) p(l, k) = std::exp(s[static_cast<std::size_t>(k)] - hi) / z;
  }
  return p;
}

/// Central-difference gradient of f at x for the listed flat coordinates.
inline double max_fd_relative_error(const std::function<double(const Eigen::MatrixXd&)>& f, const Eigen::MatrixXd& x,
                                    const Eigen::MatrixXd& analytic, int coords, std::uint64_t seed,
                                    double eps = 1e-6) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Index> pick(0, x.size() - 1);
  const double scale = analytic.cwiseAbs().maxCoeff();
  double worst = 0.0;
  for (int c = 0; c < coords; ++c) {
    const Index flat = pick(rng);
    Eigen::MatrixXd xp = x, xm = x;
    xp(flat / x.cols(), flat % x.cols()) += eps;
    xm(flat / x.cols(), flat % x.cols()) -= eps;
    const double numeric = (f(xp) - f(xm)) / (2.0 * eps);
    const double a = analytic(flat / x.cols(), flat % x.cols());
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-2 * scale, 1e-8});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  }
  return worst;
}

}  // namespace semb::test
