#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "semb/io.hpp"
#include "semb/optimize.hpp"
#include "semb/synth.hpp"

namespace semb {

/// One category template. Exactly one geometry source is set.
struct MeshSpec {
  int category = 0;
  std::optional<std::string> path;
  std::optional<int> icosphere;
  std::optional<double> tetrahedron;
  std::optional<std::uint64_t> permutation_seed;  // relabel vertices of the source geometry
  std::optional<std::string> keypoints;           // {name: vertex_index}

  /// Identifies the underlying geometry; meshes sharing it have known ground truth.
  std::string geometry_key() const;
};

struct SceneSpec {
  int category = 0;
  std::optional<Eigen::Matrix3d> rotation;
  std::optional<std::uint64_t> rotation_seed;
  int height = 32;
  int width = 32;
  Index annotations = 0;
  std::optional<std::uint64_t> annotation_seed;
};

struct AnchorSpec {
  Index count = 0;  // sampled anchor pairs per mesh pair with known ground truth
  std::uint64_t seed = 0;
  std::vector<VertexAnchor> explicit_anchors;
};

/// Full run description, read from JSON. Unknown keys are rejected.
struct ProblemConfig {
  std::vector<MeshSpec> meshes;
  Index Q = 64;
  Index D = 16;
  Similarity mode = Similarity::NegInner;
  std::uint64_t seed = 0;
  Index geodesic_cap = kDefaultGeodesicCap;
  std::vector<SceneSpec> scenes;
  AnchorSpec anchors;
  TrainConfig train;

  Json to_json() const;
};

ProblemConfig parse_problem_config(const Json& json, const std::filesystem::path& base_dir = {});
ProblemConfig read_problem_config(const std::filesystem::path& path);

struct BuiltProblem {
  TrainProblem problem;
  std::vector<Mesh> meshes;
  std::vector<Scene> scenes;
  std::vector<std::string> geometry_keys;
  std::vector<std::vector<int>> permutations;  // source-geometry vertex -> this mesh's vertex
  std::vector<std::optional<VertexKeypoints>> keypoints;
};

BuiltProblem build_problem(const ProblemConfig& config, bool use_cache = true);

/// Ground-truth vertex map m -> n when both meshes share a source geometry.
std::optional<std::vector<int>> ground_truth_map(const BuiltProblem& built, int m, int n);

}  // namespace semb
