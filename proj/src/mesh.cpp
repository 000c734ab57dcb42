#include "semb/mesh.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <vector>

#include "semb/error.hpp"

namespace semb {

namespace {

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Smallest-root union-find over vertex indices.
struct DisjointSets {
  std::vector<Index> parent;
  explicit DisjointSets(Index n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  Index find(Index i) {
    while (parent[i] != i) {
      parent[i] = parent[parent[i]];
      i = parent[i];
    }
    return i;
  }
  void unite(Index a, Index b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

void validate(const Vertices& vertices, const Faces& faces) {
  const Index K = vertices.rows();
  const Index F = faces.rows();
  if (K < 4 || F < 4)
    throw TopologyError("mesh needs at least 4 vertices and 4 faces (got K=" + std::to_string(K) +
                        ", F=" + std::to_string(F) + ")");
  if (!vertices.allFinite()) throw ParseError("mesh has non-finite vertex coordinates");

  std::map<std::pair<int, int>, int> edge_faces;
  DisjointSets components(K);
  std::vector<bool> referenced(K, false);
  for (Index f = 0; f < F; ++f) {
    for (int c = 0; c < 3; ++c) {
      const int v = faces(f, c);
      if (v < 0 || v >= K)
        throw TopologyError("face " + std::to_string(f) + " references vertex " + std::to_string(v) +
                            " outside [0, " + std::to_string(K) + ")");
      referenced[v] = true;
    }
    const int a = faces(f, 0), b = faces(f, 1), c = faces(f, 2);
    if (a == b || b == c || a == c)
      throw TopologyError("face " + std::to_string(f) + " repeats a vertex index");
    for (int e = 0; e < 3; ++e) {
      const int u = faces(f, e), w = faces(f, (e + 1) % 3);
      if (++edge_faces[{std::min(u, w), std::max(u, w)}] > 2)
        throw TopologyError("non-manifold edge (" + std::to_string(std::min(u, w)) + ", " +
                            std::to_string(std::max(u, w)) + ")");
      components.unite(u, w);
    }
  }
  for (Index v = 0; v < K; ++v) {
    if (!referenced[v]) throw TopologyError("vertex " + std::to_string(v) + " is not used by any face");
    if (components.find(v) != 0) throw TopologyError("mesh is not connected");
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open mesh file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double parse_double(std::string_view token, std::size_t line_no) {
  double value = 0.0;
  if (!token.empty() && token.front() == '+') token.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size())
    throw ParseError("line " + std::to_string(line_no) + ": bad number '" + std::string(token) + "'");
  return value;
}

long parse_long(std::string_view token, std::size_t line_no) {
  long value = 0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size())
    throw ParseError("line " + std::to_string(line_no) + ": bad integer '" + std::string(token) + "'");
  return value;
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::vector<std::string_view> split_lines(const std::string& text) {
  std::vector<std::string_view> lines;
  std::string_view view(text);
  std::size_t start = 0;
  while (start <= view.size()) {
    std::size_t end = view.find('\n', start);
    if (end == std::string_view::npos) end = view.size();
    std::string_view line = view.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  return lines;
}

Mesh build(std::vector<Eigen::Vector3d> const& vs, std::vector<Eigen::Vector3i> const& fs, int category_id) {
  Vertices vertices(static_cast<Index>(vs.size()), 3);
  for (std::size_t i = 0; i < vs.size(); ++i) vertices.row(static_cast<Index>(i)) = vs[i].transpose();
  Faces faces(static_cast<Index>(fs.size()), 3);
  for (std::size_t i = 0; i < fs.size(); ++i) faces.row(static_cast<Index>(i)) = fs[i].transpose();
  return Mesh(std::move(vertices), std::move(faces), category_id);
}

}  // namespace

Mesh::Mesh(Vertices vertices, Faces faces, int category_id)
    : vertices_(std::move(vertices)), faces_(std::move(faces)), category_id_(category_id) {
  validate(vertices_, faces_);
}

std::uint64_t Mesh::content_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const std::int64_t counts[2] = {vertices_.rows(), faces_.rows()};
  h = fnv1a(h, counts, sizeof(counts));
  h = fnv1a(h, vertices_.data(), sizeof(double) * static_cast<std::size_t>(vertices_.size()));
  h = fnv1a(h, faces_.data(), sizeof(int) * static_cast<std::size_t>(faces_.size()));
  return h;
}

Mesh parse_obj(const std::string& text, int category_id) {
  std::vector<Eigen::Vector3d> vs;
  std::vector<Eigen::Vector3i> fs;
  const auto lines = split_lines(text);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const auto tokens = split_ws(lines[n]);
    if (tokens.empty() || tokens[0].front() == '#') continue;
    if (tokens[0] == "v") {
      if (tokens.size() < 4) throw ParseError("line " + std::to_string(n + 1) + ": vertex needs 3 coordinates");
      vs.emplace_back(parse_double(tokens[1], n + 1), parse_double(tokens[2], n + 1), parse_double(tokens[3], n + 1));
    } else if (tokens[0] == "f") {
      if (tokens.size() != 4)
        throw ParseError("line " + std::to_string(n + 1) + ": face has " + std::to_string(tokens.size() - 1) +
                         " corners; only triangles are accepted");
      Eigen::Vector3i face;
      for (int c = 0; c < 3; ++c) {
        std::string_view tok = tokens[c + 1];
        tok = tok.substr(0, tok.find('/'));
        const long idx = parse_long(tok, n + 1);
        if (idx < 1) throw ParseError("line " + std::to_string(n + 1) + ": face index must be positive (1-based)");
        face[c] = static_cast<int>(idx - 1);
      }
      fs.push_back(face);
    }
  }
  return build(vs, fs, category_id);
}

Mesh parse_ply_ascii(const std::string& text, int category_id) {
  const auto lines = split_lines(text);
  if (lines.empty() || lines[0] != "ply") throw ParseError("missing 'ply' magic");

  struct Element {
    std::string name;
    Index count = 0;
    std::vector<std::string> properties;
  };
  std::vector<Element> elements;
  std::size_t n = 1;
  bool ascii = false;
  for (; n < lines.size(); ++n) {
    const auto tokens = split_ws(lines[n]);
    if (tokens.empty()) continue;
    if (tokens[0] == "end_header") {
      ++n;
      break;
    }
    if (tokens[0] == "format") {
      ascii = tokens.size() >= 2 && tokens[1] == "ascii";
    } else if (tokens[0] == "element" && tokens.size() == 3) {
      elements.push_back({std::string(tokens[1]), parse_long(tokens[2], n + 1), {}});
    } else if (tokens[0] == "property" && !elements.empty()) {
      elements.back().properties.emplace_back(tokens.back());
    }
  }
  if (!ascii) throw ParseError("only ASCII PLY is supported");

  std::vector<Eigen::Vector3d> vs;
  std::vector<Eigen::Vector3i> fs;
  for (const auto& element : elements) {
    int ix = -1, iy = -1, iz = -1;
    for (int p = 0; p < static_cast<int>(element.properties.size()); ++p) {
      if (element.properties[p] == "x") ix = p;
      if (element.properties[p] == "y") iy = p;
      if (element.properties[p] == "z") iz = p;
    }
    for (Index e = 0; e < element.count; ++e, ++n) {
      while (n < lines.size() && split_ws(lines[n]).empty()) ++n;
      if (n >= lines.size()) throw ParseError("PLY body truncated in element '" + element.name + "'");
      const auto tokens = split_ws(lines[n]);
      if (element.name == "vertex") {
        if (ix < 0 || iy < 0 || iz < 0) throw ParseError("PLY vertex element lacks x/y/z");
        const auto need = static_cast<std::size_t>(std::max({ix, iy, iz}));
        if (tokens.size() <= need) throw ParseError("line " + std::to_string(n + 1) + ": short vertex row");
        vs.emplace_back(parse_double(tokens[ix], n + 1), parse_double(tokens[iy], n + 1),
                        parse_double(tokens[iz], n + 1));
      } else if (element.name == "face") {
        const long count = parse_long(tokens.at(0), n + 1);
        if (count != 3)
          throw ParseError("line " + std::to_string(n + 1) + ": face has " + std::to_string(count) +
                           " corners; only triangles are accepted");
        if (tokens.size() < 4) throw ParseError("line " + std::to_string(n + 1) + ": short face row");
        fs.emplace_back(static_cast<int>(parse_long(tokens[1], n + 1)), static_cast<int>(parse_long(tokens[2], n + 1)),
                        static_cast<int>(parse_long(tokens[3], n + 1)));
      }
    }
  }
  return build(vs, fs, category_id);
}

Mesh load_mesh(const std::filesystem::path& path, MeshFormat format, int category_id) {
  const std::string text = read_file(path);
  return format == MeshFormat::Obj ? parse_obj(text, category_id) : parse_ply_ascii(text, category_id);
}

Mesh load_mesh(const std::filesystem::path& path, int category_id) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".obj") return load_mesh(path, MeshFormat::Obj, category_id);
  if (ext == ".ply") return load_mesh(path, MeshFormat::PlyAscii, category_id);
  throw ParseError("unknown mesh extension '" + ext + "' (expected .obj or .ply)");
}

std::string to_obj_string(const Mesh& mesh) {
  std::string out;
  char buf[128];
  for (Index i = 0; i < mesh.num_vertices(); ++i) {
    std::snprintf(buf, sizeof(buf), "v %.17g %.17g %.17g\n", mesh.vertices()(i, 0), mesh.vertices()(i, 1),
                  mesh.vertices()(i, 2));
    out += buf;
  }
  for (Index f = 0; f < mesh.num_faces(); ++f) {
    std::snprintf(buf, sizeof(buf), "f %d %d %d\n", mesh.faces()(f, 0) + 1, mesh.faces()(f, 1) + 1,
                  mesh.faces()(f, 2) + 1);
    out += buf;
  }
  return out;
}

void write_obj(const Mesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ContractError("cannot write " + path.string());
  out << to_obj_string(mesh);
}

Mesh make_icosphere(int subdivisions) {
  if (subdivisions < 0 || subdivisions > 5) throw ContractError("icosphere subdivisions must be in [0, 5]");
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Eigen::Vector3d> vs = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                                     {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& v : vs) v.normalize();
  std::vector<Eigen::Vector3i> fs = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                                     {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                                     {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                                     {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = std::make_pair(std::min(a, b), std::max(a, b));
      if (auto it = midpoint.find(key); it != midpoint.end()) return it->second;
      vs.push_back((vs[a] + vs[b]).normalized());
      const int id = static_cast<int>(vs.size()) - 1;
      midpoint.emplace(key, id);
      return id;
    };
    std::vector<Eigen::Vector3i> next;
    next.reserve(fs.size() * 4);
    for (const auto& f : fs) {
      const int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
      next.emplace_back(f[0], ab, ca);
      next.emplace_back(f[1], bc, ab);
      next.emplace_back(f[2], ca, bc);
      next.emplace_back(ab, bc, ca);
    }
    fs = std::move(next);
  }
  return build(vs, fs, 0);
}

Mesh make_tetrahedron(double edge_length) {
  const double s = edge_length / (2.0 * std::sqrt(2.0));
  std::vector<Eigen::Vector3d> vs = {{s, s, s}, {s, -s, -s}, {-s, s, -s}, {-s, -s, s}};
  std::vector<Eigen::Vector3i> fs = {{0, 1, 2}, {0, 3, 1}, {0, 2, 3}, {1, 3, 2}};
  return build(vs, fs, 0);
}

LaplacianMass laplacian_and_mass(const Mesh& mesh) {
  const Index K = mesh.num_vertices();
  const auto& V = mesh.vertices();
  const auto& F = mesh.faces();
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(F.rows()) * 12);
  Eigen::VectorXd mass = Eigen::VectorXd::Zero(K);

  for (Index f = 0; f < F.rows(); ++f) {
    const Eigen::Vector3d p0 = V.row(F(f, 0)), p1 = V.row(F(f, 1)), p2 = V.row(F(f, 2));
    const double double_area = (p1 - p0).cross(p2 - p0).norm();
    if (!(double_area > 1e-14)) throw ContractError("degenerate triangle: face " + std::to_string(f) + " has zero area");
    for (int c = 0; c < 3; ++c) {
      const int i = F(f, c), j = F(f, (c + 1) % 3), k = F(f, (c + 2) % 3);
      const Eigen::Vector3d a = V.row(i) - V.row(k);
      const Eigen::Vector3d b = V.row(j) - V.row(k);
      const double w = 0.5 * a.dot(b) / a.cross(b).norm();  // half cotangent of the angle at k
      triplets.emplace_back(i, j, -w);
      triplets.emplace_back(j, i, -w);
      triplets.emplace_back(i, i, w);
      triplets.emplace_back(j, j, w);
      mass[i] += double_area / 6.0;
    }
  }
  LaplacianMass out;
  out.laplacian.resize(K, K);
  out.laplacian.setFromTriplets(triplets.begin(), triplets.end());
  out.mass = std::move(mass);
  return out;
}

}  // namespace semb
