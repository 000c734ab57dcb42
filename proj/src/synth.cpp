#include "semb/synth.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "semb/error.hpp"

namespace semb {

Eigen::Vector2d Scene::project(const Eigen::Vector3d& world) const {
  const Eigen::Vector3d v = rotation * world;
  return {0.5 * height - (v.y() - center.y()) * scale, 0.5 * width + (v.x() - center.x()) * scale};
}

Eigen::Matrix3d random_rotation(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::Quaterniond q;
  do {
    q = Eigen::Quaterniond(normal(rng), normal(rng), normal(rng), normal(rng));
  } while (q.norm() < 1e-6);
  return q.normalized().toRotationMatrix();
}

Eigen::Matrix3d axis_rotation(const Eigen::Vector3d& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

Scene render_scene(const Mesh& mesh, const Eigen::Matrix3d& rotation, int height, int width, int scene_id) {
  if (height < 8 || width < 8) throw ContractError("render resolution must be at least 8x8");
  if (!(rotation.transpose() * rotation).isApprox(Eigen::Matrix3d::Identity(), 1e-10) || rotation.determinant() < 0)
    throw ContractError("rotation must be orthonormal with determinant +1");

  Scene scene;
  scene.scene_id = scene_id;
  scene.category_id = mesh.category_id();
  scene.rotation = rotation;
  scene.height = height;
  scene.width = width;

  const Vertices view = mesh.vertices() * rotation.transpose();
  const Eigen::Vector2d lo = view.leftCols<2>().colwise().minCoeff().transpose();
  const Eigen::Vector2d hi = view.leftCols<2>().colwise().maxCoeff().transpose();
  const double extent = (hi - lo).maxCoeff();
  if (!(extent > 0.0)) throw ContractError("degenerate projection: mesh has zero extent in the view plane");
  scene.scale = 0.9 * std::min(height, width) / extent;
  scene.center = 0.5 * (lo + hi);

  const Index K = mesh.num_vertices();
  Eigen::MatrixX2d image(K, 2);  // (row, col)
  for (Index i = 0; i < K; ++i) {
    image(i, 0) = 0.5 * height - (view(i, 1) - scene.center.y()) * scene.scale;
    image(i, 1) = 0.5 * width + (view(i, 0) - scene.center.x()) * scene.scale;
  }

  const Index P = static_cast<Index>(height) * width;
  Eigen::VectorXd depth = Eigen::VectorXd::Constant(P, -std::numeric_limits<double>::infinity());
  scene.gt_face = IndexGrid::Constant(height, width, -1);
  scene.gt_vertex = IndexGrid::Constant(height, width, -1);
  scene.gt_bary = Eigen::MatrixXd::Zero(P, 3);

  for (Index f = 0; f < mesh.num_faces(); ++f) {
    const int a = mesh.faces()(f, 0), b = mesh.faces()(f, 1), c = mesh.faces()(f, 2);
    const Eigen::Vector2d pa = image.row(a), pb = image.row(b), pc = image.row(c);
    // Edge function over (row, col); sign-agnostic so both windings rasterize.
    const auto edge = [](const Eigen::Vector2d& u, const Eigen::Vector2d& v, const Eigen::Vector2d& p) {
      return (v.x() - u.x()) * (p.y() - u.y()) - (v.y() - u.y()) * (p.x() - u.x());
    };
    const double area = edge(pa, pb, pc);
    if (area == 0.0) continue;
    const int r0 = std::max(0, static_cast<int>(std::floor(std::min({pa.x(), pb.x(), pc.x()}) - 0.5)));
    const int r1 = std::min(height - 1, static_cast<int>(std::ceil(std::max({pa.x(), pb.x(), pc.x()}) - 0.5)));
    const int c0 = std::max(0, static_cast<int>(std::floor(std::min({pa.y(), pb.y(), pc.y()}) - 0.5)));
    const int c1 = std::min(width - 1, static_cast<int>(std::ceil(std::max({pa.y(), pb.y(), pc.y()}) - 0.5)));
    for (int r = r0; r <= r1; ++r) {
      for (int col = c0; col <= c1; ++col) {
        const Eigen::Vector2d p(r + 0.5, col + 0.5);
        const Eigen::Vector3d w(edge(pb, pc, p) / area, edge(pc, pa, p) / area, edge(pa, pb, p) / area);
        if (w.minCoeff() < 0.0) continue;
        const double z = w[0] * view(a, 2) + w[1] * view(b, 2) + w[2] * view(c, 2);
        const Index idx = static_cast<Index>(r) * width + col;
        if (z <= depth[idx]) continue;
        depth[idx] = z;
        Index corner = 0;
        w.maxCoeff(&corner);
        scene.gt_face(r, col) = static_cast<int>(f);
        scene.gt_vertex(r, col) = mesh.faces()(f, corner);
        scene.gt_bary.row(idx) = w.transpose();
      }
    }
  }
  scene.mask = (scene.gt_face.array() >= 0);
  if (!scene.mask.any()) throw ContractError("rendered scene covers no pixel");
  return scene;
}

std::vector<Annotation> sample_annotations(const Scene& scene, Index n, std::uint64_t seed) {
  std::vector<Index> pool;
  for (int r = 0; r < scene.height; ++r)
    for (int c = 0; c < scene.width; ++c)
      if (scene.mask(r, c)) pool.push_back(static_cast<Index>(r) * scene.width + c);
  if (n < 0 || n > static_cast<Index>(pool.size()))
    throw ContractError("cannot sample " + std::to_string(n) + " annotations from " + std::to_string(pool.size()) +
                        " masked pixels");
  std::mt19937_64 rng(seed);
  std::vector<Annotation> out;
  for (Index i = 0; i < n; ++i) {
    std::uniform_int_distribution<Index> pick(i, static_cast<Index>(pool.size()) - 1);
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick(rng))]);
    const Index p = pool[static_cast<std::size_t>(i)];
    const int r = static_cast<int>(p / scene.width), c = static_cast<int>(p % scene.width);
    out.push_back({scene.scene_id, scene.category_id, r, c, scene.gt_vertex(r, c)});
  }
  return out;
}

PermutedMesh permuted_copy(const Mesh& mesh, const std::vector<int>& permutation) {
  const Index K = mesh.num_vertices();
  if (static_cast<Index>(permutation.size()) != K) throw ContractError("permutation length differs from K");
  std::vector<bool> seen(static_cast<std::size_t>(K), false);
  for (int p : permutation) {
    if (p < 0 || p >= K || seen[static_cast<std::size_t>(p)]) throw ContractError("not a permutation");
    seen[static_cast<std::size_t>(p)] = true;
  }
  Vertices vertices(K, 3);
  for (Index i = 0; i < K; ++i) vertices.row(permutation[static_cast<std::size_t>(i)]) = mesh.vertices().row(i);
  Faces faces = mesh.faces();
  for (Index f = 0; f < faces.rows(); ++f)
    for (int c = 0; c < 3; ++c) faces(f, c) = permutation[static_cast<std::size_t>(faces(f, c))];
  return {Mesh(std::move(vertices), std::move(faces), mesh.category_id()), permutation};
}

PermutedMesh permuted_copy(const Mesh& mesh, std::uint64_t seed) {
  std::vector<int> permutation(static_cast<std::size_t>(mesh.num_vertices()));
  std::iota(permutation.begin(), permutation.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = permutation.size() - 1; i > 0; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i);
    std::swap(permutation[i], permutation[pick(rng)]);
  }
  return permuted_copy(mesh, permutation);
}

std::vector<int> invert_permutation(const std::vector<int>& permutation) {
  std::vector<int> inverse(permutation.size());
  for (std::size_t i = 0; i < permutation.size(); ++i) inverse[static_cast<std::size_t>(permutation[i])] = static_cast<int>(i);
  return inverse;
}

}  // namespace semb
