#include "semb/spectral.hpp"

#include <Eigen/Eigenvalues>
#include <string>

#include "semb/error.hpp"

namespace semb {

SpectralBasis spectral_basis(const Eigen::SparseMatrix<double>& laplacian, const Eigen::VectorXd& mass, Index Q,
                             Index max_vertices) {
  const Index K = laplacian.rows();
  if (laplacian.cols() != K || mass.size() != K) throw ContractError("Laplacian and mass dimensions differ");
  if (Q < 1 || Q >= K)
    throw ContractError("basis size Q=" + std::to_string(Q) + " must satisfy 1 <= Q < K=" + std::to_string(K));
  if (K > max_vertices)
    throw ContractError("dense eigensolver limited to K <= " + std::to_string(max_vertices));
  if (!(mass.minCoeff() > 0.0)) throw NumericalError("mass matrix must be strictly positive");

  // Mass^{-1/2} L Mass^{-1/2} is symmetric; its eigenvectors map back through Mass^{-1/2}.
  const Eigen::VectorXd inv_sqrt = mass.cwiseSqrt().cwiseInverse();
  Eigen::MatrixXd A = inv_sqrt.asDiagonal() * Eigen::MatrixXd(laplacian) * inv_sqrt.asDiagonal();
  A = (0.5 * (A + A.transpose())).eval();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(A);
  if (solver.info() != Eigen::Success) throw NumericalError("symmetric eigensolver failed to converge");

  SpectralBasis basis;
  basis.eigenvalues = solver.eigenvalues().head(Q);
  basis.U = inv_sqrt.asDiagonal() * solver.eigenvectors().leftCols(Q);
  for (Index q = 0; q < Q; ++q) {
    Index arg = 0;
    basis.U.col(q).cwiseAbs().maxCoeff(&arg);
    if (basis.U(arg, q) < 0.0) basis.U.col(q) *= -1.0;
  }
  return basis;
}

SpectralBasis spectral_basis(const Mesh& mesh, Index Q) {
  const auto lm = laplacian_and_mass(mesh);
  SpectralBasis basis = spectral_basis(lm.laplacian, lm.mass, Q);
  basis.mesh_hash = mesh.content_hash();
  return basis;
}

}  // namespace semb
