#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <span>
#include <string>
#include <vector>

#include "semb/embedding.hpp"
#include "semb/metrics.hpp"
#include "semb/spectral.hpp"
#include "semb/synth.hpp"

namespace semb {

using Json = nlohmann::ordered_json;

/// JSON text with every floating-point number printed to 17 significant digits.
std::string dump_json(const Json& value, int indent = 2);
void write_json(const std::filesystem::path& path, const Json& value);
Json read_json(const std::filesystem::path& path);

std::string hash_hex(std::uint64_t hash);

// Scenes are stored as <stem>.json (header) plus <stem>.mask.semb, <stem>.gtv.semb,
// <stem>.gtf.semb (i32 grids) and <stem>.bary.semb (f64, (H*W) x 3).
void write_scene(const std::filesystem::path& stem, const Scene& scene, std::uint64_t mesh_hash);
Scene read_scene(const std::filesystem::path& stem);

/// ehat as a Q x D matrix file plus a "<path>.json" sidecar with Q, D, K, mode and mesh hash.
void write_embedding(const std::filesystem::path& path, const CategoryEmbedding& embedding, Similarity mode);
Eigen::MatrixXd read_embedding(const std::filesystem::path& path);

/// H x W x D grid plus a "<path>.json" sidecar.
void write_pixel_field(const std::filesystem::path& path, const PixelField& field, Similarity mode);
PixelField read_pixel_field(const std::filesystem::path& path, const Scene& scene);

/// "source_index,target_index" per line.
std::string vertex_map_csv(std::span<const int> assignment);
std::vector<int> parse_vertex_map_csv(const std::string& text);

/// {name: vertex_index}
VertexKeypoints read_vertex_keypoints(const std::filesystem::path& path);
/// {name: [row, col, visible]}
std::vector<PixelKeypoint> read_pixel_keypoints(const std::filesystem::path& path);
Json pixel_keypoints_json(std::span<const PixelKeypoint> keypoints);

/// SEMB_CACHE_DIR if set, otherwise $HOME/.cache/semb.
std::filesystem::path cache_dir();

SpectralBasis cached_spectral_basis(const Mesh& mesh, Index Q, bool use_cache = true);
GeodesicMatrix cached_geodesics(const Mesh& mesh, Index max_vertices = kDefaultGeodesicCap, bool use_cache = true);

}  // namespace semb
