#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <utility>
#include <vector>

#include "semb/embedding.hpp"
#include "semb/losses.hpp"
#include "semb/mesh.hpp"

namespace semb {

using IndexGrid = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Orthographic rendering of a mesh with exact pixel -> vertex ground truth.
///
/// The camera looks down -z in view space (view = rotation * world); larger
/// view-space z is closer. Pixel (r, c) has its centre at (r + 0.5, c + 0.5)
/// in continuous image coordinates.
struct Scene {
  int scene_id = 0;
  int category_id = 0;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  int height = 0;
  int width = 0;
  Mask mask;
  IndexGrid gt_vertex;  // -1 outside the mask
  IndexGrid gt_face;    // -1 outside the mask
  Eigen::MatrixXd gt_bary;  // (H*W) x 3 barycentric weights of gt_face at the pixel centre

  // World -> image: col = width/2 + (x - center.x) * scale, row = height/2 - (y - center.y) * scale.
  double scale = 1.0;
  Eigen::Vector2d center = Eigen::Vector2d::Zero();

  /// Continuous (row, col) image position of a world-space point.
  Eigen::Vector2d project(const Eigen::Vector3d& world) const;
  Index num_masked() const { return mask.count(); }
};

/// Uniformly distributed rotation matrix, deterministic in `seed`.
Eigen::Matrix3d random_rotation(std::uint64_t seed);

/// Rotation by `angle` radians about a unit `axis`.
Eigen::Matrix3d axis_rotation(const Eigen::Vector3d& axis, double angle);

Scene render_scene(const Mesh& mesh, const Eigen::Matrix3d& rotation, int height, int width, int scene_id = 0);

/// n distinct masked pixels labelled with their ground-truth vertex.
std::vector<Annotation> sample_annotations(const Scene& scene, Index n, std::uint64_t seed);

/// Vertex relabeling: the vertex at index i moves to index permutation[i].
struct PermutedMesh {
  Mesh mesh;
  std::vector<int> permutation;
};

PermutedMesh permuted_copy(const Mesh& mesh, std::uint64_t seed);
PermutedMesh permuted_copy(const Mesh& mesh, const std::vector<int>& permutation);

std::vector<int> invert_permutation(const std::vector<int>& permutation);

}  // namespace semb
