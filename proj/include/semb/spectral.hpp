#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <cstdint>

#include "semb/mesh.hpp"

namespace semb {

/// Lowest generalized eigenpairs of L u = lambda Mass u.
///
/// Columns of `U` are Mass-orthonormal and ordered by ascending eigenvalue;
/// each column's entry of largest magnitude is positive.
struct SpectralBasis {
  Eigen::MatrixXd U;
  Eigen::VectorXd eigenvalues;
  std::uint64_t mesh_hash = 0;

  Index num_vertices() const { return U.rows(); }
  Index size() const { return U.cols(); }
};

inline constexpr Index kDenseEigenCap = 2000;

SpectralBasis spectral_basis(const Eigen::SparseMatrix<double>& laplacian, const Eigen::VectorXd& mass, Index Q,
                             Index max_vertices = kDenseEigenCap);

SpectralBasis spectral_basis(const Mesh& mesh, Index Q);

}  // namespace semb
