#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "semb/error.hpp"
#include "semb/io.hpp"
#include "semb/matrix_file.hpp"

namespace semb {

namespace {

void dump_impl(const Json& value, int indent, int depth, std::string& out) {
  const auto newline = [&](int d) {
    if (indent < 0) return;
    out += '\n';
    out.append(static_cast<std::size_t>(indent * d), ' ');
  };
  switch (value.type()) {
    case Json::value_t::object: {
      if (value.empty()) {
        out += "{}";
        return;
      }
      out += '{';
      bool first = true;
      for (auto it = value.begin(); it != value.end(); ++it) {
        if (!first) out += ',';
        first = false;
        newline(depth + 1);
        out += Json(it.key()).dump();
        out += indent < 0 ? ":" : ": ";
        dump_impl(it.value(), indent, depth + 1, out);
      }
      newline(depth);
      out += '}';
      return;
    }
    case Json::value_t::array: {
      if (value.empty()) {
        out += "[]";
        return;
      }
      out += '[';
      bool first = true;
      for (const auto& item : value) {
        if (!first) out += ',';
        first = false;
        newline(depth + 1);
        dump_impl(item, indent, depth + 1, out);
      }
      newline(depth);
      out += ']';
      return;
    }
    case Json::value_t::number_float: {
      const double v = value.get<double>();
      if (!std::isfinite(v)) {
        out += "null";
        return;
      }
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      std::string s(buf);
      if (s.find_first_of(".eE") == std::string::npos) s += ".0";
      out += s;
      return;
    }
    default:
      out += value.dump();
  }
}

Eigen::Matrix3d rotation_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 9) throw ParseError("rotation must be an array of 9 numbers (row-major)");
  Eigen::Matrix3d r;
  for (int i = 0; i < 9; ++i) r(i / 3, i % 3) = j[static_cast<std::size_t>(i)].get<double>();
  return r;
}

std::filesystem::path with_suffix(std::filesystem::path p, const std::string& suffix) {
  p += suffix;
  return p;
}

}  // namespace

std::string dump_json(const Json& value, int indent) {
  std::string out;
  dump_impl(value, indent, 0, out);
  if (indent >= 0) out += '\n';
  return out;
}

void write_json(const std::filesystem::path& path, const Json& value) { write_bytes_atomic(path, dump_json(value)); }

Json read_json(const std::filesystem::path& path) {
  try {
    return Json::parse(read_bytes(path));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::string hash_hex(std::uint64_t hash) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

void write_scene(const std::filesystem::path& stem, const Scene& scene, std::uint64_t mesh_hash) {
  Json header;
  header["scene_id"] = scene.scene_id;
  header["category_id"] = scene.category_id;
  header["height"] = scene.height;
  header["width"] = scene.width;
  Json rot = Json::array();
  for (int i = 0; i < 9; ++i) rot.push_back(scene.rotation(i / 3, i % 3));
  header["rotation"] = rot;
  header["scale"] = scene.scale;
  header["center"] = {scene.center.x(), scene.center.y()};
  header["mesh_hash"] = hash_hex(mesh_hash);
  write_json(with_suffix(stem, ".json"), header);
  write_matrix_file(with_suffix(stem, ".mask.semb"), from_int_grid(scene.mask.cast<int>().matrix()));
  write_matrix_file(with_suffix(stem, ".gtv.semb"), from_int_grid(scene.gt_vertex));
  write_matrix_file(with_suffix(stem, ".gtf.semb"), from_int_grid(scene.gt_face));
  write_matrix_file(with_suffix(stem, ".bary.semb"), from_matrix(scene.gt_bary));
}

Scene read_scene(const std::filesystem::path& stem) {
  const Json header = read_json(with_suffix(stem, ".json"));
  Scene scene;
  try {
    scene.scene_id = header.at("scene_id").get<int>();
    scene.category_id = header.at("category_id").get<int>();
    scene.height = header.at("height").get<int>();
    scene.width = header.at("width").get<int>();
    scene.rotation = rotation_from_json(header.at("rotation"));
    scene.scale = header.at("scale").get<double>();
    scene.center = {header.at("center").at(0).get<double>(), header.at("center").at(1).get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("scene header " + stem.string() + ": " + e.what());
  }
  scene.mask = (to_int_grid(read_matrix_file(with_suffix(stem, ".mask.semb"))).array() != 0);
  scene.gt_vertex = to_int_grid(read_matrix_file(with_suffix(stem, ".gtv.semb")));
  scene.gt_face = to_int_grid(read_matrix_file(with_suffix(stem, ".gtf.semb")));
  scene.gt_bary = to_matrix(read_matrix_file(with_suffix(stem, ".bary.semb")));
  if (scene.mask.rows() != scene.height || scene.mask.cols() != scene.width)
    throw ParseError("scene mask does not match header resolution");
  return scene;
}

void write_embedding(const std::filesystem::path& path, const CategoryEmbedding& embedding, Similarity mode) {
  write_matrix_file(path, from_matrix(embedding.ehat()));
  Json side;
  side["Q"] = embedding.ehat().rows();
  side["D"] = embedding.dim();
  side["K"] = embedding.num_vertices();
  side["mode"] = std::string(to_string(mode));
  side["mesh_hash"] = hash_hex(embedding.basis().mesh_hash);
  side["category_id"] = embedding.category_id();
  write_json(with_suffix(path, ".json"), side);
}

Eigen::MatrixXd read_embedding(const std::filesystem::path& path) { return to_matrix(read_matrix_file(path)); }

void write_pixel_field(const std::filesystem::path& path, const PixelField& field, Similarity mode) {
  write_matrix_file(path, from_pixel_grid(field.grid, field.height, field.width));
  Json side;
  side["scene_id"] = field.scene_id;
  side["category_id"] = field.category_id;
  side["D"] = field.dim();
  side["mode"] = std::string(to_string(mode));
  write_json(with_suffix(path, ".json"), side);
}

PixelField read_pixel_field(const std::filesystem::path& path, const Scene& scene) {
  int h = 0, w = 0;
  Eigen::MatrixXd grid = to_pixel_grid(read_matrix_file(path), h, w);
  if (h != scene.height || w != scene.width) throw ContractError("pixel field resolution does not match its scene");
  return PixelField(std::move(grid), scene.mask, scene.scene_id, scene.category_id);
}

std::string vertex_map_csv(std::span<const int> assignment) {
  std::string out;
  for (std::size_t i = 0; i < assignment.size(); ++i) out += std::to_string(i) + "," + std::to_string(assignment[i]) + "\n";
  return out;
}

std::vector<int> parse_vertex_map_csv(const std::string& text) {
  std::vector<int> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line == "source_index,target_index") continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ParseError("map line " + std::to_string(line_no) + ": expected 'i,j'");
    long src = 0, dst = 0;
    try {
      std::size_t used = 0;
      src = std::stol(line.substr(0, comma), &used);
      dst = std::stol(line.substr(comma + 1), &used);
    } catch (const std::exception&) {
      throw ParseError("map line " + std::to_string(line_no) + ": bad integer");
    }
    if (src != static_cast<long>(out.size()))
      throw ParseError("map line " + std::to_string(line_no) + ": source indices must be 0, 1, 2, ... in order");
    out.push_back(static_cast<int>(dst));
  }
  return out;
}

VertexKeypoints read_vertex_keypoints(const std::filesystem::path& path) {
  const Json j = read_json(path);
  if (!j.is_object()) throw ParseError("vertex keypoints must be a JSON object {name: vertex_index}");
  VertexKeypoints out;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!it.value().is_number_integer()) throw ParseError("keypoint '" + it.key() + "' must map to an integer vertex");
    out[it.key()] = it.value().get<int>();
  }
  return out;
}

std::vector<PixelKeypoint> read_pixel_keypoints(const std::filesystem::path& path) {
  const Json j = read_json(path);
  if (!j.is_object()) throw ParseError("pixel keypoints must be a JSON object {name: [row, col, visible]}");
  std::vector<PixelKeypoint> out;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const Json& v = it.value();
    if (!v.is_array() || v.size() != 3)
      throw ParseError("keypoint '" + it.key() + "' must be [row, col, visible]; visibility flag missing");
    PixelKeypoint kp;
    kp.name = it.key();
    kp.row = v[0].get<double>();
    kp.col = v[1].get<double>();
    kp.visible = v[2].is_boolean() ? v[2].get<bool>() : v[2].get<double>() != 0.0;
    out.push_back(kp);
  }
  return out;
}

Json pixel_keypoints_json(std::span<const PixelKeypoint> keypoints) {
  Json out = Json::object();
  for (const auto& kp : keypoints) out[kp.name] = {kp.row, kp.col, kp.visible};
  return out;
}

std::filesystem::path cache_dir() {
  if (const char* env = std::getenv("SEMB_CACHE_DIR"); env && *env) return env;
  if (const char* home = std::getenv("HOME"); home && *home) return std::filesystem::path(home) / ".cache" / "semb";
  return std::filesystem::temp_directory_path() / "semb-cache";
}

SpectralBasis cached_spectral_basis(const Mesh& mesh, Index Q, bool use_cache) {
  const std::string key = hash_hex(mesh.content_hash()) + ".q" + std::to_string(Q);
  const auto basis_path = cache_dir() / (key + ".basis.semb");
  const auto evals_path = cache_dir() / (key + ".evals.semb");
  if (use_cache && std::filesystem::exists(basis_path) && std::filesystem::exists(evals_path)) {
    SpectralBasis basis;
    basis.U = to_matrix(read_matrix_file(basis_path));
    basis.eigenvalues = to_vector(read_matrix_file(evals_path));
    basis.mesh_hash = mesh.content_hash();
    if (basis.U.rows() == mesh.num_vertices() && basis.U.cols() == Q) return basis;
  }
  SpectralBasis basis = spectral_basis(mesh, Q);
  if (use_cache) {
    write_matrix_file(basis_path, from_matrix(basis.U));
    write_matrix_file(evals_path, from_vector(basis.eigenvalues));
  }
  return basis;
}

GeodesicMatrix cached_geodesics(const Mesh& mesh, Index max_vertices, bool use_cache) {
  const auto path = cache_dir() / (hash_hex(mesh.content_hash()) + ".geodesics.semb");
  if (use_cache && std::filesystem::exists(path)) {
    GeodesicMatrix g;
    g.values = to_matrix(read_matrix_file(path));
    if (g.values.rows() == mesh.num_vertices()) return g;
  }
  GeodesicMatrix g = geodesic_matrix(mesh, max_vertices);
  if (use_cache) write_matrix_file(path, from_matrix(g.values));
  return g;
}

}  // namespace semb
