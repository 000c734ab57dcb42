#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <cstdint>
#include <filesystem>
#include <string>

namespace semb {

using Index = Eigen::Index;
using Vertices = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Faces = Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor>;

/// Closed, connected, edge-manifold triangle mesh.
///
/// Construction validates the invariants (index range, distinct face
/// corners, K >= 4, F >= 4, every edge shared by at most two faces, a single
/// connected component) and throws TopologyError otherwise.
class Mesh {
 public:
  Mesh(Vertices vertices, Faces faces, int category_id = 0);

  const Vertices& vertices() const { return vertices_; }
  const Faces& faces() const { return faces_; }
  int category_id() const { return category_id_; }
  Index num_vertices() const { return vertices_.rows(); }
  Index num_faces() const { return faces_.rows(); }

  /// Stable 64-bit content hash of the geometry (vertex bits + face indices).
  std::uint64_t content_hash() const;

 private:
  Vertices vertices_;
  Faces faces_;
  int category_id_;
};

enum class MeshFormat { Obj, PlyAscii };

/// Reads `path`; the format is inferred from the extension when not given.
Mesh load_mesh(const std::filesystem::path& path, int category_id = 0);
Mesh load_mesh(const std::filesystem::path& path, MeshFormat format, int category_id = 0);

/// OBJ writer; coordinates use 17 significant digits so reading back is exact.
void write_obj(const Mesh& mesh, const std::filesystem::path& path);
std::string to_obj_string(const Mesh& mesh);
Mesh parse_obj(const std::string& text, int category_id = 0);
Mesh parse_ply_ascii(const std::string& text, int category_id = 0);

/// Unit-radius icosphere by repeated 4-to-1 subdivision of the icosahedron.
Mesh make_icosphere(int subdivisions);

/// Regular tetrahedron with the given edge length, centred at the origin.
Mesh make_tetrahedron(double edge_length = 1.0);

struct LaplacianMass {
  Eigen::SparseMatrix<double> laplacian;  // cotangent Laplacian, L = D - W (PSD)
  Eigen::VectorXd mass;                   // lumped barycentric vertex areas
};

LaplacianMass laplacian_and_mass(const Mesh& mesh);

struct GeodesicMatrix {
  Eigen::MatrixXd values;
  bool normalized = false;
};

inline constexpr double kGeodesicMax = 2.27;
inline constexpr Index kDefaultGeodesicCap = 5000;

/// All-pairs shortest paths on the edge graph (Euclidean edge lengths).
GeodesicMatrix geodesic_matrix(const Mesh& mesh, Index max_vertices = kDefaultGeodesicCap);

/// Rescales so the largest entry equals `d_max`. Rejects already-normalized input.
GeodesicMatrix normalize_geodesics(const GeodesicMatrix& geodesics, double d_max = kGeodesicMax);

}  // namespace semb
